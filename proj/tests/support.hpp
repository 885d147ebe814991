#pragma once

#include "geotrack/dynamics.hpp"
#include "geotrack/error.hpp"
#include "geotrack/geodesic.hpp"
#include "geotrack/mesh.hpp"

#include <random>
#include <string>
#include <vector>

namespace gt_test {

using namespace geotrack;

// Path v0 - v1 - ... along x with the given edge lengths.
inline SurfaceMesh path_mesh(const std::vector<double>& lengths) {
  std::vector<Vec3> pts{Vec3::Zero()};
  std::vector<std::pair<VertexId, VertexId>> edges;
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    pts.push_back(pts.back() + Vec3(lengths[i], 0, 0));
    edges.emplace_back(static_cast<VertexId>(i), static_cast<VertexId>(i + 1));
  }
  return SurfaceMesh::from_edges(std::move(pts), edges);
}

inline SurfaceMesh unit_path(std::size_t n_vertices) {
  return path_mesh(std::vector<double>(n_vertices - 1, 1.0));
}

// Centre vertex 0 plus four arms of `arm` unit edges.
inline SurfaceMesh plus_mesh(int arm = 3) {
  std::vector<Vec3> pts{Vec3::Zero()};
  std::vector<std::pair<VertexId, VertexId>> edges;
  const Vec3 dirs[4] = {Vec3(1, 0, 0), Vec3(-1, 0, 0), Vec3(0, 1, 0), Vec3(0, -1, 0)};
  for (const Vec3& d : dirs) {
    VertexId prev = 0;
    for (int k = 1; k <= arm; ++k) {
      pts.push_back(d * k);
      const auto id = static_cast<VertexId>(pts.size() - 1);
      edges.emplace_back(prev, id);
      prev = id;
    }
  }
  return SurfaceMesh::from_edges(std::move(pts), edges);
}

// w x h vertex grid in the z = 0 plane, two triangles per cell.
inline SurfaceMesh grid_mesh(int w, int h, double spacing = 1.0) {
  std::vector<Vec3> pts;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) pts.emplace_back(x * spacing, y * spacing, 0.0);
  std::vector<Triangle> tris;
  for (int y = 0; y + 1 < h; ++y)
    for (int x = 0; x + 1 < w; ++x) {
      const VertexId a = y * w + x, b = a + 1, d = a + w, e = d + 1;
      tris.push_back({a, b, e});
      tris.push_back({a, e, d});
    }
  return SurfaceMesh::from_triangles(std::move(pts), std::move(tris));
}

// Random points in a box joined by a random spanning tree plus extra edges.
// With `allow_split`, roughly one call in five leaves a second component.
inline SurfaceMesh random_mesh(std::mt19937_64& rng, std::size_t n, bool allow_split) {
  std::uniform_real_distribution<double> coord(-1.0, 1.0);
  std::vector<Vec3> pts(n);
  for (auto& p : pts) p = Vec3(coord(rng), coord(rng), coord(rng));
  std::vector<std::pair<VertexId, VertexId>> edges;
  std::bernoulli_distribution split(0.2);
  const std::size_t cut = split(rng) && allow_split && n >= 4 ? n / 2 : 0;
  for (std::size_t i = 1; i < n; ++i) {
    if (i == cut) continue;
    const std::size_t lo = i >= cut && cut > 0 ? cut : 0;
    std::uniform_int_distribution<std::size_t> pick(lo, i - 1);
    edges.emplace_back(static_cast<VertexId>(pick(rng)), static_cast<VertexId>(i));
  }
  std::uniform_int_distribution<std::size_t> any(0, n - 1);
  for (std::size_t k = 0; k < n; ++k) {
    const auto a = any(rng), b = any(rng);
    if (a == b) continue;
    if (cut > 0 && ((a < cut) != (b < cut))) continue;
    edges.emplace_back(static_cast<VertexId>(a), static_cast<VertexId>(b));
  }
  return SurfaceMesh::from_edges(std::move(pts), edges);
}

inline SurfaceMesh random_mesh(std::mt19937_64& rng, std::size_t max_vertices) {
  const std::size_t n = std::uniform_int_distribution<std::size_t>(2, max_vertices)(rng);
  return random_mesh(rng, n, true);
}

// Every vertex as an anchor labeled by its id, so anchor rows are full descriptors.
inline AnchorSet all_vertex_anchors(const SurfaceMesh& mesh) {
  AnchorSet a;
  for (std::size_t v = 0; v < mesh.num_vertices(); ++v) {
    a.vertices.push_back(static_cast<VertexId>(v));
    a.labels.push_back(static_cast<int>(v));
    a.positions.push_back(mesh.vertex(static_cast<VertexId>(v)));
  }
  return a;
}

// All-pairs shortest paths by Floyd-Warshall over the stored edge lengths.
inline std::vector<std::vector<double>> floyd_warshall(const SurfaceMesh& mesh) {
  const std::size_t n = mesh.num_vertices();
  std::vector<std::vector<double>> d(n, std::vector<double>(n, kInfinity));
  for (std::size_t i = 0; i < n; ++i) d[i][i] = 0.0;
  for (const Edge& e : mesh.edges()) {
    d[e.a][e.b] = std::min(d[e.a][e.b], e.length);
    d[e.b][e.a] = std::min(d[e.b][e.a], e.length);
  }
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (d[i][k] + d[k][j] < d[i][j]) d[i][j] = d[i][k] + d[k][j];
  return d;
}

inline Mat3 random_rotation(std::mt19937_64& rng, double max_angle) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> ang(-max_angle, max_angle);
  Vec3 axis(g(rng), g(rng), g(rng));
  if (axis.norm() < 1e-9) axis = Vec3::UnitZ();
  return axis_angle(axis, ang(rng));
}

inline JointState random_state(std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  JointState s;
  for (auto& p : s.joints) p = Vec3(u(rng), u(rng), u(rng));
  return s;
}

// Collects warnings for the lifetime of the object.
struct WarningLog {
  std::vector<std::string> messages;
  ScopedWarningHandler guard{[this](std::string_view m) { messages.emplace_back(m); }};
};

}  // namespace gt_test
