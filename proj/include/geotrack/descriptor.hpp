#pragma once

#include "geotrack/geodesic.hpp"
#include "geotrack/kdtree.hpp"
#include "geotrack/mesh.hpp"

#include <map>
#include <memory>
#include <set>
#include <utility>
#include <vector>

namespace geotrack {

/// Geodesic distances from one vertex to a list of targets. For the anchor
/// descriptor `labels` names the anchor behind each slot; the full descriptor
/// covers every vertex in id order and sets `all_vertices`.
struct FeatureVector {
  std::vector<double> values;
  std::vector<int> labels;
  bool all_vertices = false;
};

/// Partial vertex map between two meshes.
struct Correspondence {
  std::map<VertexId, VertexId> pairs;
  std::set<VertexId> unmatched_source;
  std::set<VertexId> unmatched_target;

  std::size_t size() const { return pairs.size(); }
};

FeatureVector full_descriptor(const SurfaceMesh& mesh, VertexId v);

/// Anchor descriptors of every vertex, one row per vertex, slots in label order.
/// Built from one single-source run per anchor.
class DescriptorTable {
 public:
  DescriptorTable() = default;
  DescriptorTable(const SurfaceMesh& mesh, const AnchorSet& anchors);

  std::size_t rows() const { return rows_; }
  std::size_t slots() const { return labels_.size(); }
  const std::vector<int>& labels() const { return labels_; }

  double value(VertexId v, std::size_t slot) const {
    return data_[static_cast<std::size_t>(v) * labels_.size() + slot];
  }
  std::span<const double> row(VertexId v) const {
    return {data_.data() + static_cast<std::size_t>(v) * labels_.size(), labels_.size()};
  }
  FeatureVector descriptor(VertexId v) const;
  /// Slot index of `label`, or -1.
  int slot_of(int label) const;

 private:
  std::size_t rows_ = 0;
  std::vector<int> labels_;
  std::vector<double> data_;
};

FeatureVector anchor_descriptor(const SurfaceMesh& mesh, const AnchorSet& anchors, VertexId v);

/// Euclidean norm of the slot-wise difference. A slot where exactly one side is
/// infinite makes the result infinite; a slot infinite on both sides adds 0.
double descriptor_distance(const FeatureVector& a, const FeatureVector& b);
double descriptor_distance(std::span<const double> a, std::span<const double> b);

/// Nearest-descriptor search over a subset of slots of a DescriptorTable.
///
/// Rows are bucketed by which of the chosen slots are infinite; only rows with
/// the query's exact infinity pattern can be at finite distance, and within a
/// bucket a k-d tree over the finite slots answers the query. Ties go to the
/// lowest vertex id, matching a linear scan with descriptor_distance.
class DescriptorIndex {
 public:
  DescriptorIndex(const DescriptorTable& table, std::vector<std::size_t> slots);

  struct Hit {
    VertexId vertex = -1;
    double distance = kInfinity;
    bool found() const { return vertex >= 0; }
  };

  /// `query` is indexed by the same slot numbers as the table (not projected).
  /// Only hits with distance <= max_distance are returned.
  Hit nearest(std::span<const double> query, double max_distance = kInfinity) const;

  const std::vector<std::size_t>& slots() const { return slots_; }

 private:
  std::vector<std::size_t> slots_;
  std::map<std::uint64_t, KdTree> buckets_;  // key: bitmask of infinite slots
};

struct MatchOptions {
  double e_max = 0.10;          // gate on descriptor distance, meters
  double e_max_slope = 0.0;     // gate growth per meter of |z| of the source vertex
};

/// Gate threshold for a source vertex at `position`.
inline double gate_threshold(const MatchOptions& opt, const Vec3& position) {
  return opt.e_max + opt.e_max_slope * std::abs(position.z());
}

/// Label-aligned slot pairs shared by two anchor sets, in ascending label order.
struct SharedSlots {
  std::vector<int> labels;
  std::vector<std::size_t> src_slots;
  std::vector<std::size_t> dst_slots;
};
SharedSlots shared_slots(const DescriptorTable& src, const DescriptorTable& dst);

/// Each source vertex maps to the target minimizing descriptor distance over
/// the shared anchor labels, when that distance passes the gate.
Correspondence match_vertices(const SurfaceMesh& src_mesh, const AnchorSet& src_anchors,
                              const SurfaceMesh& dst_mesh, const AnchorSet& dst_anchors,
                              const MatchOptions& options = {});
Correspondence match_vertices(const SurfaceMesh& src_mesh, const DescriptorTable& src,
                              const SurfaceMesh& dst_mesh, const DescriptorTable& dst,
                              const MatchOptions& options = {});

/// All size-k index combinations of {0..n-1} in lexicographic order.
std::vector<std::vector<std::size_t>> combinations(std::size_t n, std::size_t k);
std::size_t binomial(std::size_t n, std::size_t k);

/// One descriptor per size-`subset_size` anchor subset, subsets in
/// lexicographic label order.
std::vector<FeatureVector> subset_descriptors(const SurfaceMesh& mesh, const AnchorSet& anchors,
                                              VertexId v, std::size_t subset_size);

/// sup over mapped pairs (v, v') of |gd_src(v, v') - gd_dst(map v, map v')|.
double mesh_distortion(const SurfaceMesh& src, const SurfaceMesh& dst, const Correspondence& map);

inline constexpr std::size_t kGmdsVertexLimit = 10;

struct GmdsResult {
  double distance = 0.0;  // half the minimal distortion
  Correspondence argmin;
};

/// Exhaustive (branch-and-bound) minimization of distortion over all total
/// maps from src to dst. Both meshes are limited to kGmdsVertexLimit vertices.
GmdsResult gmds_distance(const SurfaceMesh& src, const SurfaceMesh& dst);

}  // namespace geotrack
