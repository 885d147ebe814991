#pragma once

#include "geotrack/descriptor.hpp"
#include "geotrack/dynamics.hpp"
#include "geotrack/geodesic.hpp"
#include "geotrack/kdtree.hpp"
#include "geotrack/mesh.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

namespace geotrack {

/// The anchor labels the tracker follows and every size-`subset_size` subset
/// of them, in lexicographic order. Subset m is the hypothesis index.
struct HypothesisSpace {
  std::vector<int> labels;
  std::size_t subset_size = 3;
  std::vector<std::vector<int>> subsets;

  static HypothesisSpace make(std::vector<int> labels, std::size_t subset_size);
  std::size_t size() const { return subsets.size(); }
};

/// One frame prepared for matching: mesh, labeled anchors, descriptor table,
/// and lazily built per-subset descriptor indexes.
class FrameData {
 public:
  FrameData() = default;
  FrameData(SurfaceMesh mesh, AnchorSet anchors);

  const SurfaceMesh& mesh() const { return mesh_; }
  const AnchorSet& anchors() const { return anchors_; }
  const DescriptorTable& table() const { return table_; }

  /// Index over the slots of subset m, or null when one of its labels is
  /// missing in this frame. Not thread-safe.
  const DescriptorIndex* subset_index(const HypothesisSpace& space, std::size_t m) const;

  /// Closest vertex within max_distance, or -1.
  VertexId nearest_vertex(const Vec3& p, double max_distance = kInfinity) const;

 private:
  SurfaceMesh mesh_;
  AnchorSet anchors_;
  DescriptorTable table_;
  KdTree positions_;
  mutable std::map<std::vector<int>, std::unique_ptr<DescriptorIndex>> indexes_;
};

struct Hypothesis {
  VertexId candidate = -1;
  std::size_t subset = 0;
  double distance = 0.0;
};

/// For every subset m the target vertex nearest to v in subset-descriptor
/// distance, kept when within the gate. A candidate proposed by several
/// subsets is listed once under its smallest m. Subsets with a label missing
/// in either frame, or whose slots are all infinite for v, propose nothing.
std::vector<Hypothesis> gate_hypotheses(VertexId v, const FrameData& src, const FrameData& dst,
                                        const HypothesisSpace& space, const MatchOptions& options);

struct TrackNode {
  int depth = 0;       // 0 for roots
  VertexId vertex = -1;
  int subset = -1;     // hypothesis that created this node; -1 for roots
  int parent = -1;
  int root = 0;        // index into TrackTree::roots
  double score = 0.0;  // accumulated distance to the predictions, plus dormant penalties
  bool dormant = false;
  bool expanded = false;
  bool removed = false;
};

/// Track tree over frames base..base+depth. Node ids are stable; removed
/// nodes stay in `nodes` with `removed` set.
struct TrackTree {
  std::vector<VertexId> roots;
  std::vector<TrackNode> nodes;
  int depth = 0;
  int max_depth = 3;

  static TrackTree from_roots(std::vector<VertexId> roots, int max_depth);

  std::vector<int> leaves() const;
  std::vector<int> children(int node) const;
  std::size_t live_nodes() const;
  /// Node ids from the root down to `node`.
  std::vector<int> branch(int node) const;
};

using GateCache = std::unordered_map<VertexId, std::vector<Hypothesis>>;

/// Expand every live leaf at the deepest level by gate_hypotheses between
/// `src` (the leaves' frame) and `dst`. Children add the distance to
/// `predicted[root]` when predictions are given. Leaves that cannot grow are
/// flagged dormant and their score grows by `dormant_penalty` per missed level.
void grow_tree(TrackTree& tree, const FrameData& src, const FrameData& dst,
               const HypothesisSpace& space, const MatchOptions& options,
               std::span<const Vec3> predicted = {}, double dormant_penalty = 0.0,
               GateCache* cache = nullptr);

/// Sum over branch frames of |position - predicted|.
double score_branch(std::span<const Vec3> positions, std::span<const Vec3> predicted);

/// When more than `max_leaves` branches are alive, drop the worst-scored
/// leaves (and interior nodes left without children) until the budget holds.
/// The best leaf of every root is kept. Returns the number of removed leaves.
std::size_t prune(TrackTree& tree, std::size_t max_leaves);

struct RootChoice {
  int leaf = -1;
  VertexId next_vertex = -1;  // vertex one frame ahead, -1 when dormant
  int subset = -1;
  double score = 0.0;
};

/// Minimal-score leaf per root; ties go to the smallest subset index of the
/// first step, then the lowest node id. A root whose best score exceeds
/// `max_score` is reported as dormant.
std::vector<RootChoice> best_hypotheses(const TrackTree& tree, double max_score = kInfinity);
Correspondence best_global_hypothesis(const TrackTree& tree, double max_score = kInfinity);

struct FitResult {
  RigidTransform transform;
  bool degenerate = false;
};

/// Least-squares rigid fit dst ~ R src + t. Nearly collinear sources fall back
/// to a translation fit with `fallback_rotation`.
FitResult fit_rigid(std::span<const Vec3> src, std::span<const Vec3> dst,
                    const Mat3& fallback_rotation = Mat3::Identity());

struct IcpOptions {
  double tolerance = 1e-6;
  int max_iterations = 50;
  std::size_t min_pairs = 3;
};

struct IcpResult {
  RigidTransform transform;
  std::vector<double> residuals;  // mean residual after each fit
  bool used_init = false;         // too few pairs
  bool degenerate = false;
};

/// Fit, re-pair every source with the nearest transformed target among
/// `dst`, refit, until the mean residual changes by less than the tolerance.
IcpResult icp(std::span<const Vec3> src, std::span<const Vec3> dst, const RigidTransform& init,
              const IcpOptions& options = {});

/// Per-part ICP on matched pairs grouped by the part of the source vertex.
std::vector<RigidTransform> estimate_part_transforms(const Correspondence& map,
                                                     const SurfaceMesh& src,
                                                     const SurfaceMesh& dst,
                                                     const BodyModel& body,
                                                     std::span<const RigidTransform> init,
                                                     const IcpOptions& options = {});

/// Each joint is the average of prev[joint] moved by every part that has the
/// joint as an endpoint.
JointState update_joints(std::span<const RigidTransform> transforms, const JointState& prev,
                         const BodyModel& body);

struct TrackerConfig {
  double e_max = 0.10;
  double e_max_slope = 0.0;
  double anchor_radius = kDefaultAnchorRadius;
  std::size_t n_anchors = 5;
  std::size_t subset_size = 3;
  int look_ahead = 3;
  std::vector<double> scales{0.5, 1.0, 2.0};
  std::size_t history = kDefaultHistoryWindow;
  std::size_t node_budget = 20000;
  std::uint64_t seed = 7;
  std::size_t tracked_vertices = 500;  // 0 tracks every vertex
  double dormant_penalty = 0.05;
  double reseed_distance = 0.05;
  double label_distance = 0.3;  // anchors farther than this from a known label get a new one
  double min_part_fraction = 0.5;  // matched share of a part's tracks needed to refit it
  double outlier_factor = 3.0;     // refit without pairs beyond this multiple of the median residual
  IcpOptions icp;
};

TrackerConfig tracker_config_from_json(const std::string& text);
std::string tracker_config_to_json(const TrackerConfig& config);

struct FrameDiagnostics {
  std::size_t frame = 0;
  std::size_t anchors = 0;
  std::size_t active_tracks = 0;
  std::size_t matched = 0;
  std::size_t dormant = 0;
  std::size_t reseeded = 0;
  std::size_t pruned = 0;
  std::size_t tree_leaves = 0;
  std::size_t predicted_parts = 0;  // parts that kept the predicted transform
  std::vector<std::size_t> part_pairs;  // matched tracks per body part
  std::vector<std::size_t> hypothesis_histogram;  // chosen subset index counts
  bool empty_frame = false;
};

struct TrackedSequence {
  std::vector<JointState> joints;
  std::vector<Correspondence> correspondences;  // frame t -> t+1, size n-1
  std::vector<FrameDiagnostics> diagnostics;    // size n
  std::vector<std::vector<RigidTransform>> part_transforms;  // frame 0 -> t, per part
};

/// Frames are fetched on demand so long sequences need not stay in memory.
struct FrameSource {
  std::size_t count = 0;
  std::function<SurfaceMesh(std::size_t)> mesh;
};

TrackedSequence track_sequence(const FrameSource& frames, const JointState& skeleton0,
                               const MotionLibrary& library, const TrackerConfig& config = {});
TrackedSequence track_sequence(const std::vector<SurfaceMesh>& frames, const JointState& skeleton0,
                               const MotionLibrary& library, const TrackerConfig& config = {});

}  // namespace geotrack
