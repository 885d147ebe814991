#pragma once

#include "geotrack/geometry.hpp"

#include <array>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace geotrack {

using Triangle = std::array<VertexId, 3>;

struct Edge {
  VertexId a = 0;  // a < b
  VertexId b = 0;
  double length = 0.0;
};

struct Neighbor {
  VertexId vertex = 0;
  double length = 0.0;
};

/// Snap a length onto the 2^-40 m lattice used for every stored edge length.
/// Sums of lattice values are exact in double precision, so shortest path
/// distances do not depend on summation order.
double quantize_length(double length);

/// Vertices, edges with Euclidean lengths, and triangles for one frame.
///
/// Immutable once built. Edges are unique, sorted by (a, b) with a < b, and
/// include every triangle side. Adjacency is stored in CSR form.
class SurfaceMesh {
 public:
  SurfaceMesh() = default;

  /// Edges are derived from the triangle sides. Vertices closer than 1e-12
  /// are merged and triangles that collapse under the merge are dropped.
  static SurfaceMesh from_triangles(std::vector<Vec3> vertices, std::vector<Triangle> triangles);

  /// Edge-only meshes (paths, stars) plus optional triangles whose sides are
  /// added to the edge set.
  static SurfaceMesh from_edges(std::vector<Vec3> vertices,
                                const std::vector<std::pair<VertexId, VertexId>>& edges,
                                std::vector<Triangle> triangles = {});

  std::size_t num_vertices() const { return vertices_.size(); }
  std::size_t num_edges() const { return edges_.size(); }
  std::size_t num_triangles() const { return triangles_.size(); }
  bool empty() const { return vertices_.empty(); }

  std::span<const Vec3> vertices() const { return vertices_; }
  const Vec3& vertex(VertexId v) const { return vertices_[static_cast<std::size_t>(v)]; }
  std::span<const Edge> edges() const { return edges_; }
  std::span<const Triangle> triangles() const { return triangles_; }

  std::span<const Neighbor> neighbors(VertexId v) const {
    const auto i = static_cast<std::size_t>(v);
    return {adjacency_.data() + offsets_[i], adjacency_.data() + offsets_[i + 1]};
  }

  bool valid_vertex(VertexId v) const {
    return v >= 0 && static_cast<std::size_t>(v) < vertices_.size();
  }

  /// Same connectivity with every vertex moved through `t`.
  SurfaceMesh transformed(const RigidTransform& t) const;

  /// Same connectivity with new positions (one per vertex). Edge lengths are recomputed.
  SurfaceMesh with_positions(std::vector<Vec3> positions) const;

 private:
  void build(std::vector<std::pair<VertexId, VertexId>> edge_pairs);

  std::vector<Vec3> vertices_;
  std::vector<Edge> edges_;
  std::vector<Triangle> triangles_;
  std::vector<std::size_t> offsets_{0};
  std::vector<Neighbor> adjacency_;
};

/// Every violated SurfaceMesh invariant, one message each; empty when valid.
std::vector<std::string> validate_mesh(const SurfaceMesh& mesh);

struct Components {
  std::vector<int> label;  // per vertex
  int count = 0;
};

Components connected_components(const SurfaceMesh& mesh);

/// Sub-mesh on the vertices with keep[v] != 0. `old_to_new` maps original ids
/// to new ids (-1 when dropped).
struct SubMesh {
  SurfaceMesh mesh;
  std::vector<VertexId> old_to_new;
  std::vector<VertexId> new_to_old;
};

SubMesh induced_submesh(const SurfaceMesh& mesh, const std::vector<char>& keep);

}  // namespace geotrack
