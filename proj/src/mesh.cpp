#include "geotrack/mesh.hpp"

#include "geotrack/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>

namespace geotrack {

namespace {

constexpr double kDuplicateTolerance = 1e-12;
constexpr int kLengthLatticeBits = 40;

// Representative id for each vertex after merging near-identical positions.
// Returns the number of distinct vertices; `remap[v]` is the new id.
std::size_t merge_duplicates(const std::vector<Vec3>& vertices, std::vector<VertexId>& remap) {
  const std::size_t n = vertices.size();
  std::vector<VertexId> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](VertexId a, VertexId b) {
    const Vec3& p = vertices[a];
    const Vec3& q = vertices[b];
    if (p.x() != q.x()) return p.x() < q.x();
    if (p.y() != q.y()) return p.y() < q.y();
    if (p.z() != q.z()) return p.z() < q.z();
    return a < b;
  });

  // Smallest original id in each duplicate run becomes the representative.
  std::vector<VertexId> rep(n);
  std::size_t run_begin = 0;
  for (std::size_t i = 1; i <= n; ++i) {
    const bool continues =
        i < n && (vertices[order[i - 1]] - vertices[order[i]]).norm() <= kDuplicateTolerance;
    if (continues) continue;
    VertexId smallest = order[run_begin];
    for (std::size_t k = run_begin; k < i; ++k) smallest = std::min(smallest, order[k]);
    for (std::size_t k = run_begin; k < i; ++k) rep[order[k]] = smallest;
    run_begin = i;
  }

  remap.assign(n, -1);
  std::size_t next = 0;
  for (std::size_t v = 0; v < n; ++v) {
    if (rep[v] == static_cast<VertexId>(v)) remap[v] = static_cast<VertexId>(next++);
  }
  for (std::size_t v = 0; v < n; ++v) remap[v] = remap[static_cast<std::size_t>(rep[v])];
  return next;
}

void check_index(VertexId v, std::size_t n, const char* what) {
  if (v < 0 || static_cast<std::size_t>(v) >= n) {
    throw UsageError(std::string(what) + " references vertex " + std::to_string(v) +
                     " but the mesh has " + std::to_string(n) + " vertices");
  }
}

}  // namespace

double quantize_length(double length) {
  return std::ldexp(std::nearbyint(std::ldexp(length, kLengthLatticeBits)), -kLengthLatticeBits);
}

SurfaceMesh SurfaceMesh::from_triangles(std::vector<Vec3> vertices,
                                        std::vector<Triangle> triangles) {
  return from_edges(std::move(vertices), {}, std::move(triangles));
}

SurfaceMesh SurfaceMesh::from_edges(std::vector<Vec3> vertices,
                                    const std::vector<std::pair<VertexId, VertexId>>& edges,
                                    std::vector<Triangle> triangles) {
  const std::size_t n = vertices.size();
  for (const auto& t : triangles)
    for (VertexId v : t) check_index(v, n, "triangle");
  for (const auto& [a, b] : edges) {
    check_index(a, n, "edge");
    check_index(b, n, "edge");
  }

  std::vector<VertexId> remap;
  const std::size_t distinct = merge_duplicates(vertices, remap);

  SurfaceMesh mesh;
  if (distinct == n) {
    mesh.vertices_ = std::move(vertices);
  } else {
    mesh.vertices_.resize(distinct);
    for (std::size_t v = n; v-- > 0;) mesh.vertices_[remap[v]] = vertices[v];
  }

  std::vector<std::pair<VertexId, VertexId>> pairs;
  pairs.reserve(edges.size() + triangles.size() * 3);
  for (const auto& [a, b] : edges) pairs.emplace_back(remap[a], remap[b]);

  mesh.triangles_.reserve(triangles.size());
  for (const auto& t : triangles) {
    const Triangle r{remap[t[0]], remap[t[1]], remap[t[2]]};
    if (r[0] == r[1] || r[1] == r[2] || r[0] == r[2]) continue;
    mesh.triangles_.push_back(r);
    pairs.emplace_back(r[0], r[1]);
    pairs.emplace_back(r[1], r[2]);
    pairs.emplace_back(r[2], r[0]);
  }
  mesh.build(std::move(pairs));
  return mesh;
}

void SurfaceMesh::build(std::vector<std::pair<VertexId, VertexId>> edge_pairs) {
  for (auto& [a, b] : edge_pairs)
    if (a > b) std::swap(a, b);
  std::erase_if(edge_pairs, [](const auto& e) { return e.first == e.second; });
  std::sort(edge_pairs.begin(), edge_pairs.end());
  edge_pairs.erase(std::unique(edge_pairs.begin(), edge_pairs.end()), edge_pairs.end());

  edges_.clear();
  edges_.reserve(edge_pairs.size());
  const std::size_t n = vertices_.size();
  std::vector<std::size_t> degree(n, 0);
  for (const auto& [a, b] : edge_pairs) {
    edges_.push_back({a, b, quantize_length((vertices_[a] - vertices_[b]).norm())});
    ++degree[a];
    ++degree[b];
  }

  offsets_.assign(n + 1, 0);
  for (std::size_t v = 0; v < n; ++v) offsets_[v + 1] = offsets_[v] + degree[v];
  adjacency_.assign(offsets_[n], {});
  std::vector<std::size_t> fill(offsets_.begin(), offsets_.end() - 1);
  // Edges are sorted by (a, b), so each neighbor list ends up sorted by id.
  for (const Edge& e : edges_) adjacency_[fill[e.a]++] = {e.b, e.length};
  for (const Edge& e : edges_) adjacency_[fill[e.b]++] = {e.a, e.length};
  for (std::size_t v = 0; v < n; ++v) {
    std::sort(adjacency_.begin() + static_cast<std::ptrdiff_t>(offsets_[v]),
              adjacency_.begin() + static_cast<std::ptrdiff_t>(offsets_[v + 1]),
              [](const Neighbor& x, const Neighbor& y) { return x.vertex < y.vertex; });
  }
}

SurfaceMesh SurfaceMesh::transformed(const RigidTransform& t) const {
  std::vector<Vec3> moved(vertices_.size());
  for (std::size_t i = 0; i < vertices_.size(); ++i) moved[i] = t.apply(vertices_[i]);
  return with_positions(std::move(moved));
}

SurfaceMesh SurfaceMesh::with_positions(std::vector<Vec3> positions) const {
  if (positions.size() != vertices_.size())
    throw UsageError("with_positions: expected " + std::to_string(vertices_.size()) +
                     " positions, got " + std::to_string(positions.size()));
  SurfaceMesh mesh;
  mesh.vertices_ = std::move(positions);
  mesh.triangles_ = triangles_;
  std::vector<std::pair<VertexId, VertexId>> pairs;
  pairs.reserve(edges_.size());
  for (const Edge& e : edges_) pairs.emplace_back(e.a, e.b);
  mesh.build(std::move(pairs));
  return mesh;
}

std::vector<std::string> validate_mesh(const SurfaceMesh& mesh) {
  std::vector<std::string> problems;
  const std::size_t n = mesh.num_vertices();
  const auto verts = mesh.vertices();

  for (std::size_t v = 0; v < n; ++v) {
    if (!verts[v].allFinite()) problems.push_back("vertex " + std::to_string(v) + " is not finite");
  }

  std::vector<std::pair<VertexId, VertexId>> edge_keys;
  edge_keys.reserve(mesh.num_edges());
  for (const Edge& e : mesh.edges()) {
    if (e.a < 0 || e.b < 0 || static_cast<std::size_t>(e.a) >= n ||
        static_cast<std::size_t>(e.b) >= n || e.a == e.b) {
      problems.push_back("edge (" + std::to_string(e.a) + "," + std::to_string(e.b) +
                         ") has invalid endpoints");
      continue;
    }
    const double expected = (verts[e.a] - verts[e.b]).norm();
    if (std::abs(expected - e.length) > 1e-9) {
      problems.push_back("edge (" + std::to_string(e.a) + "," + std::to_string(e.b) +
                         ") length " + std::to_string(e.length) + " != " +
                         std::to_string(expected));
    }
    edge_keys.emplace_back(std::min(e.a, e.b), std::max(e.a, e.b));
  }
  std::sort(edge_keys.begin(), edge_keys.end());

  for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
    const Triangle& tri = mesh.triangles()[t];
    bool in_range = true;
    for (VertexId v : tri) in_range &= v >= 0 && static_cast<std::size_t>(v) < n;
    if (!in_range) {
      problems.push_back("triangle " + std::to_string(t) + " has an out-of-range index");
      continue;
    }
    for (int k = 0; k < 3; ++k) {
      const VertexId a = std::min(tri[k], tri[(k + 1) % 3]);
      const VertexId b = std::max(tri[k], tri[(k + 1) % 3]);
      if (!std::binary_search(edge_keys.begin(), edge_keys.end(), std::pair{a, b})) {
        problems.push_back("triangle " + std::to_string(t) + " side (" + std::to_string(a) +
                           "," + std::to_string(b) + ") missing from edge set");
      }
    }
  }

  std::vector<VertexId> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](VertexId a, VertexId b) {
    return std::lexicographical_compare(verts[a].data(), verts[a].data() + 3, verts[b].data(),
                                        verts[b].data() + 3);
  });
  for (std::size_t i = 1; i < n; ++i) {
    if ((verts[order[i]] - verts[order[i - 1]]).norm() <= kDuplicateTolerance) {
      problems.push_back("vertices " + std::to_string(order[i - 1]) + " and " +
                         std::to_string(order[i]) + " are duplicates");
    }
  }
  return problems;
}

Components connected_components(const SurfaceMesh& mesh) {
  Components out;
  const std::size_t n = mesh.num_vertices();
  out.label.assign(n, -1);
  std::vector<VertexId> stack;
  for (std::size_t s = 0; s < n; ++s) {
    if (out.label[s] >= 0) continue;
    const int id = out.count++;
    out.label[s] = id;
    stack.push_back(static_cast<VertexId>(s));
    while (!stack.empty()) {
      const VertexId v = stack.back();
      stack.pop_back();
      for (const Neighbor& nb : mesh.neighbors(v)) {
        if (out.label[nb.vertex] < 0) {
          out.label[nb.vertex] = id;
          stack.push_back(nb.vertex);
        }
      }
    }
  }
  return out;
}

SubMesh induced_submesh(const SurfaceMesh& mesh, const std::vector<char>& keep) {
  const std::size_t n = mesh.num_vertices();
  if (keep.size() != n) throw UsageError("induced_submesh: keep mask size mismatch");
  SubMesh out;
  out.old_to_new.assign(n, -1);
  std::vector<Vec3> positions;
  for (std::size_t v = 0; v < n; ++v) {
    if (!keep[v]) continue;
    out.old_to_new[v] = static_cast<VertexId>(positions.size());
    out.new_to_old.push_back(static_cast<VertexId>(v));
    positions.push_back(mesh.vertices()[v]);
  }
  std::vector<std::pair<VertexId, VertexId>> edges;
  for (const Edge& e : mesh.edges()) {
    if (keep[e.a] && keep[e.b]) edges.emplace_back(out.old_to_new[e.a], out.old_to_new[e.b]);
  }
  std::vector<Triangle> triangles;
  for (const Triangle& t : mesh.triangles()) {
    if (keep[t[0]] && keep[t[1]] && keep[t[2]]) {
      triangles.push_back({out.old_to_new[t[0]], out.old_to_new[t[1]], out.old_to_new[t[2]]});
    }
  }
  out.mesh = SurfaceMesh::from_edges(std::move(positions), edges, std::move(triangles));
  return out;
}

}  // namespace geotrack
