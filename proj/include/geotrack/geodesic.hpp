#pragma once

#include "geotrack/mesh.hpp"

#include <optional>
#include <span>
#include <vector>

namespace geotrack {

/// Shortest-path distances over the weighted edge graph from one source.
/// Unreachable vertices hold +infinity.
struct DistanceField {
  VertexId source = -1;
  std::vector<double> distances;
};

DistanceField shortest_distances(const SurfaceMesh& mesh, VertexId source);

/// Distances to the nearest of several sources.
std::vector<double> multi_source_distances(const SurfaceMesh& mesh,
                                           std::span<const VertexId> sources);

/// Vertex nearest (Euclidean) to the centroid of all vertices; ties to the lowest id.
VertexId mesh_center(const SurfaceMesh& mesh);

/// Per connected component, the vertex nearest that component's centroid.
std::vector<VertexId> component_centers(const SurfaceMesh& mesh, const Components& comps);

/// Geodesic extrema with stable labels. Anchors are kept sorted by label.
struct AnchorSet {
  std::vector<VertexId> vertices;
  std::vector<int> labels;
  std::vector<Vec3> positions;
  double detection_radius = 0.5;

  std::size_t size() const { return vertices.size(); }
  bool empty() const { return vertices.empty(); }
  /// Index of the anchor carrying `label`, if any.
  std::optional<std::size_t> find_label(int label) const;
  void sort_by_label();
};

inline constexpr double kDefaultAnchorRadius = 0.5;

/// Every vertex whose distance from its component center strictly exceeds the
/// distance of each other vertex within geodesic radius `radius` of it.
/// Labels are 0..n-1 in vertex-id order.
AnchorSet detect_anchors(const SurfaceMesh& mesh, double radius = kDefaultAnchorRadius);

/// Relabel `current` from `reference` by greedy nearest-position assignment.
/// Reference labels are used at most once; unmatched anchors get fresh labels
/// above every label seen in either set. Pairs farther apart than
/// `max_distance` are never assigned.
AnchorSet order_anchors(const AnchorSet& current, const AnchorSet& reference,
                        double max_distance = kInfinity);

/// Same, with anchor positions taken from the meshes.
AnchorSet order_anchors(const AnchorSet& current, const AnchorSet& reference,
                        const SurfaceMesh& mesh, const SurfaceMesh& ref_mesh);

}  // namespace geotrack
