#include "geotrack/mht.hpp"

#include "geotrack/error.hpp"

#include <json.hpp>

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <random>
#include <set>
#include <tuple>

namespace geotrack {

HypothesisSpace HypothesisSpace::make(std::vector<int> labels, std::size_t subset_size) {
  std::sort(labels.begin(), labels.end());
  if (std::adjacent_find(labels.begin(), labels.end()) != labels.end())
    throw UsageError("HypothesisSpace: duplicate anchor labels");
  if (subset_size == 0 || subset_size > labels.size())
    throw UsageError("HypothesisSpace: subset size " + std::to_string(subset_size) +
                     " is not in [1, " + std::to_string(labels.size()) + "]");
  HypothesisSpace space;
  space.subset_size = subset_size;
  for (const auto& combo : combinations(labels.size(), subset_size)) {
    std::vector<int> subset;
    for (std::size_t i : combo) subset.push_back(labels[i]);
    space.subsets.push_back(std::move(subset));
  }
  space.labels = std::move(labels);
  return space;
}

FrameData::FrameData(SurfaceMesh mesh, AnchorSet anchors)
    : mesh_(std::move(mesh)),
      anchors_(std::move(anchors)),
      table_(mesh_, anchors_),
      positions_(KdTree::from_points(mesh_.vertices())) {}

const DescriptorIndex* FrameData::subset_index(const HypothesisSpace& space, std::size_t m) const {
  const std::vector<int>& labels = space.subsets.at(m);
  auto it = indexes_.find(labels);
  if (it != indexes_.end()) return it->second.get();
  std::unique_ptr<DescriptorIndex> index;
  std::vector<std::size_t> slots;
  for (int label : labels) {
    const int s = table_.slot_of(label);
    if (s < 0) break;
    slots.push_back(static_cast<std::size_t>(s));
  }
  if (slots.size() == labels.size()) index = std::make_unique<DescriptorIndex>(table_, slots);
  return indexes_.emplace(labels, std::move(index)).first->second.get();
}

VertexId FrameData::nearest_vertex(const Vec3& p, double max_distance) const {
  if (mesh_.empty()) return -1;
  const double bound = std::isinf(max_distance) ? kInfinity : max_distance * max_distance;
  return positions_.nearest(p, bound).id;
}

std::vector<Hypothesis> gate_hypotheses(VertexId v, const FrameData& src, const FrameData& dst,
                                        const HypothesisSpace& space, const MatchOptions& options) {
  if (!src.mesh().valid_vertex(v))
    throw UsageError("gate_hypotheses: vertex " + std::to_string(v) + " is not in the source frame");
  std::vector<Hypothesis> out;
  if (dst.mesh().empty()) return out;
  const auto row = src.table().row(v);
  const double gate = gate_threshold(options, src.mesh().vertex(v));
  std::vector<double> query(dst.table().slots(), 0.0);
  for (std::size_t m = 0; m < space.size(); ++m) {
    const DescriptorIndex* index = dst.subset_index(space, m);
    if (!index) continue;
    const auto& labels = space.subsets[m];
    bool usable = true;
    bool all_infinite = true;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const int s = src.table().slot_of(labels[i]);
      if (s < 0) {
        usable = false;
        break;
      }
      const double value = row[static_cast<std::size_t>(s)];
      all_infinite = all_infinite && std::isinf(value);
      query[index->slots()[i]] = value;
    }
    if (!usable || all_infinite) continue;
    const auto hit = index->nearest(query, gate);
    if (!hit.found()) continue;
    const bool seen = std::any_of(out.begin(), out.end(),
                                  [&](const Hypothesis& h) { return h.candidate == hit.vertex; });
    if (!seen) out.push_back({hit.vertex, m, hit.distance});
  }
  return out;
}

TrackTree TrackTree::from_roots(std::vector<VertexId> roots, int max_depth) {
  TrackTree tree;
  tree.max_depth = max_depth;
  for (std::size_t i = 0; i < roots.size(); ++i) {
    TrackNode node;
    node.vertex = roots[i];
    node.root = static_cast<int>(i);
    tree.nodes.push_back(node);
  }
  tree.roots = std::move(roots);
  return tree;
}

namespace {

std::vector<int> live_child_counts(const TrackTree& tree) {
  std::vector<int> count(tree.nodes.size(), 0);
  for (const TrackNode& n : tree.nodes)
    if (!n.removed && n.parent >= 0) ++count[static_cast<std::size_t>(n.parent)];
  return count;
}

}  // namespace

std::vector<int> TrackTree::leaves() const {
  const auto count = live_child_counts(*this);
  std::vector<int> out;
  for (std::size_t i = 0; i < nodes.size(); ++i)
    if (!nodes[i].removed && count[i] == 0) out.push_back(static_cast<int>(i));
  return out;
}

std::vector<int> TrackTree::children(int node) const {
  std::vector<int> out;
  for (std::size_t i = 0; i < nodes.size(); ++i)
    if (!nodes[i].removed && nodes[i].parent == node) out.push_back(static_cast<int>(i));
  return out;
}

std::size_t TrackTree::live_nodes() const {
  return static_cast<std::size_t>(
      std::count_if(nodes.begin(), nodes.end(), [](const TrackNode& n) { return !n.removed; }));
}

std::vector<int> TrackTree::branch(int node) const {
  std::vector<int> out;
  for (int n = node; n >= 0; n = nodes[static_cast<std::size_t>(n)].parent) out.push_back(n);
  std::reverse(out.begin(), out.end());
  return out;
}

void grow_tree(TrackTree& tree, const FrameData& src, const FrameData& dst,
               const HypothesisSpace& space, const MatchOptions& options,
               std::span<const Vec3> predicted, double dormant_penalty, GateCache* cache) {
  if (tree.depth >= tree.max_depth)
    throw UsageError("grow_tree: tree already has depth " + std::to_string(tree.depth));
  if (!predicted.empty() && predicted.size() != tree.roots.size())
    throw UsageError("grow_tree: need one prediction per root");

  std::vector<Hypothesis> scratch;
  for (int id : tree.leaves()) {
    auto& leaf = tree.nodes[static_cast<std::size_t>(id)];
    if (leaf.dormant || leaf.depth != tree.depth) {
      leaf.dormant = true;
      leaf.score += dormant_penalty;
      continue;
    }
    const std::vector<Hypothesis>* hyps = &scratch;
    if (cache) {
      auto it = cache->find(leaf.vertex);
      if (it == cache->end())
        it = cache->emplace(leaf.vertex, gate_hypotheses(leaf.vertex, src, dst, space, options)).first;
      hyps = &it->second;
    } else {
      scratch = gate_hypotheses(leaf.vertex, src, dst, space, options);
    }
    if (hyps->empty()) {
      leaf.dormant = true;
      leaf.score += dormant_penalty;
      continue;
    }
    leaf.expanded = true;
    const TrackNode parent = leaf;
    for (const Hypothesis& h : *hyps) {
      TrackNode child;
      child.depth = parent.depth + 1;
      child.vertex = h.candidate;
      child.subset = static_cast<int>(h.subset);
      child.parent = id;
      child.root = parent.root;
      child.score = parent.score;
      if (!predicted.empty())
        child.score += (dst.mesh().vertex(h.candidate) - predicted[static_cast<std::size_t>(parent.root)]).norm();
      tree.nodes.push_back(child);
    }
  }
  ++tree.depth;
}

double score_branch(std::span<const Vec3> positions, std::span<const Vec3> predicted) {
  if (predicted.size() < positions.size())
    throw UsageError("score_branch: missing prediction for frame " + std::to_string(predicted.size()));
  double sum = 0.0;
  for (std::size_t i = 0; i < positions.size(); ++i) sum += (positions[i] - predicted[i]).norm();
  return sum;
}

namespace {

int first_step_subset(const TrackTree& tree, int leaf) {
  int n = leaf;
  while (n >= 0 && tree.nodes[static_cast<std::size_t>(n)].depth > 1)
    n = tree.nodes[static_cast<std::size_t>(n)].parent;
  return n >= 0 ? tree.nodes[static_cast<std::size_t>(n)].subset : -1;
}

// (score, first-step subset, node id)
using LeafKey = std::tuple<double, int, int>;

LeafKey leaf_key(const TrackTree& tree, int leaf) {
  return {tree.nodes[static_cast<std::size_t>(leaf)].score, first_step_subset(tree, leaf), leaf};
}

std::vector<int> best_leaf_per_root(const TrackTree& tree, const std::vector<int>& leaves) {
  std::vector<int> best(tree.roots.size(), -1);
  std::vector<LeafKey> best_key(tree.roots.size());
  for (int leaf : leaves) {
    const auto r = static_cast<std::size_t>(tree.nodes[static_cast<std::size_t>(leaf)].root);
    const LeafKey key = leaf_key(tree, leaf);
    if (best[r] < 0 || key < best_key[r]) {
      best[r] = leaf;
      best_key[r] = key;
    }
  }
  return best;
}

}  // namespace

std::size_t prune(TrackTree& tree, std::size_t max_leaves) {
  if (max_leaves < tree.roots.size())
    throw UsageError("prune: budget " + std::to_string(max_leaves) + " is below the root count " +
                     std::to_string(tree.roots.size()));
  const std::vector<int> leaves = tree.leaves();
  if (leaves.size() <= max_leaves) return 0;

  const std::vector<int> best = best_leaf_per_root(tree, leaves);
  std::vector<char> keep(tree.nodes.size(), 0);
  std::size_t kept = 0;
  for (int b : best)
    if (b >= 0) {
      keep[static_cast<std::size_t>(b)] = 1;
      ++kept;
    }
  std::vector<int> others;
  for (int leaf : leaves)
    if (!keep[static_cast<std::size_t>(leaf)]) others.push_back(leaf);
  std::sort(others.begin(), others.end(), [&](int a, int b) {
    const double sa = tree.nodes[static_cast<std::size_t>(a)].score;
    const double sb = tree.nodes[static_cast<std::size_t>(b)].score;
    return sa != sb ? sa < sb : a < b;
  });

  std::vector<int> child_count = live_child_counts(tree);
  std::size_t removed = 0;
  for (std::size_t i = 0; i < others.size(); ++i) {
    if (kept < max_leaves) {
      ++kept;
      continue;
    }
    int n = others[i];
    tree.nodes[static_cast<std::size_t>(n)].removed = true;
    ++removed;
    for (int p = tree.nodes[static_cast<std::size_t>(n)].parent; p >= 0;
         p = tree.nodes[static_cast<std::size_t>(p)].parent) {
      if (--child_count[static_cast<std::size_t>(p)] > 0 || tree.nodes[static_cast<std::size_t>(p)].depth == 0)
        break;
      tree.nodes[static_cast<std::size_t>(p)].removed = true;
    }
  }
  return removed;
}

std::vector<RootChoice> best_hypotheses(const TrackTree& tree, double max_score) {
  const std::vector<int> best = best_leaf_per_root(tree, tree.leaves());
  std::vector<RootChoice> out(tree.roots.size());
  for (std::size_t r = 0; r < best.size(); ++r) {
    RootChoice& c = out[r];
    c.leaf = best[r];
    if (c.leaf < 0) continue;
    const TrackNode& leaf = tree.nodes[static_cast<std::size_t>(c.leaf)];
    c.score = leaf.score;
    if (leaf.depth == 0 || leaf.score > max_score) continue;
    const auto path = tree.branch(c.leaf);
    const TrackNode& step = tree.nodes[static_cast<std::size_t>(path[1])];
    c.next_vertex = step.vertex;
    c.subset = step.subset;
  }
  return out;
}

Correspondence best_global_hypothesis(const TrackTree& tree, double max_score) {
  Correspondence out;
  const auto choices = best_hypotheses(tree, max_score);
  for (std::size_t r = 0; r < choices.size(); ++r) {
    const VertexId root = tree.roots[r];
    if (choices[r].next_vertex >= 0) {
      if (!out.pairs.count(root)) out.pairs.emplace(root, choices[r].next_vertex);
    } else if (!out.pairs.count(root)) {
      out.unmatched_source.insert(root);
    }
  }
  for (const auto& [v, _] : out.pairs) out.unmatched_source.erase(v);
  return out;
}

FitResult fit_rigid(std::span<const Vec3> src, std::span<const Vec3> dst,
                    const Mat3& fallback_rotation) {
  if (src.size() != dst.size() || src.empty())
    throw UsageError("fit_rigid: need matching, non-empty point lists");
  const double n = static_cast<double>(src.size());
  Vec3 cs = Vec3::Zero(), cd = Vec3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    cs += src[i];
    cd += dst[i];
  }
  cs /= n;
  cd /= n;
  Mat3 scatter = Mat3::Zero(), cross = Mat3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const Vec3 a = src[i] - cs;
    scatter += a * a.transpose();
    cross += a * (dst[i] - cd).transpose();
  }
  FitResult out;
  const Eigen::JacobiSVD<Mat3> spread(scatter);
  const Vec3 sv = spread.singularValues();
  if (!(sv(0) > 0.0) || sv(1) <= 1e-12 * sv(0)) {
    out.degenerate = true;
    out.transform = {fallback_rotation, cd - fallback_rotation * cs};
    return out;
  }
  const Eigen::JacobiSVD<Mat3> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 v = svd.matrixV();
  Mat3 r = v * svd.matrixU().transpose();
  if (r.determinant() < 0.0) {
    v.col(2) *= -1.0;
    r = v * svd.matrixU().transpose();
  }
  out.transform = {r, cd - r * cs};
  return out;
}

namespace {

double rms_residual(std::span<const Vec3> src, std::span<const Vec3> dst,
                    const std::vector<std::int32_t>& pairing, const RigidTransform& t) {
  double sum = 0.0;
  for (std::size_t i = 0; i < src.size(); ++i)
    sum += (t(src[i]) - dst[static_cast<std::size_t>(pairing[i])]).squaredNorm();
  return std::sqrt(sum / static_cast<double>(src.size()));
}

}  // namespace

IcpResult icp(std::span<const Vec3> src, std::span<const Vec3> dst, const RigidTransform& init,
              const IcpOptions& options) {
  if (src.size() != dst.size()) throw UsageError("icp: source and target sizes differ");
  IcpResult out;
  out.transform = init;
  if (src.size() < std::max<std::size_t>(options.min_pairs, 1)) {
    out.used_init = true;
    return out;
  }
  const KdTree targets = KdTree::from_points(dst);
  std::vector<std::int32_t> pairing(src.size());
  std::iota(pairing.begin(), pairing.end(), 0);
  std::vector<Vec3> paired(src.size());
  for (int it = 0; it < options.max_iterations; ++it) {
    for (std::size_t i = 0; i < src.size(); ++i) paired[i] = dst[static_cast<std::size_t>(pairing[i])];
    const FitResult fit = fit_rigid(src, paired, out.transform.rotation);
    out.degenerate = out.degenerate || fit.degenerate;
    out.transform = fit.transform;
    const double residual = rms_residual(src, dst, pairing, out.transform);
    const bool converged = !out.residuals.empty() &&
                           std::abs(out.residuals.back() - residual) < options.tolerance;
    out.residuals.push_back(residual);
    if (converged || residual == 0.0) break;
    bool changed = false;
    for (std::size_t i = 0; i < src.size(); ++i) {
      const Vec3 moved = out.transform(src[i]);
      const auto hit = targets.nearest(moved);
      const double current = (moved - dst[static_cast<std::size_t>(pairing[i])]).squaredNorm();
      if (hit.dist2 < current) {
        pairing[i] = hit.id;
        changed = true;
      }
    }
    if (!changed) break;
  }
  return out;
}

std::vector<RigidTransform> estimate_part_transforms(const Correspondence& map,
                                                     const SurfaceMesh& src,
                                                     const SurfaceMesh& dst,
                                                     const BodyModel& body,
                                                     std::span<const RigidTransform> init,
                                                     const IcpOptions& options) {
  if (body.part_of_vertex.size() != src.num_vertices())
    throw UsageError("estimate_part_transforms: part assignment does not cover the source mesh");
  if (init.size() != body.num_parts())
    throw UsageError("estimate_part_transforms: need one initial transform per part");
  std::vector<std::vector<Vec3>> from(body.num_parts()), to(body.num_parts());
  for (const auto& [a, b] : map.pairs) {
    if (!src.valid_vertex(a) || !dst.valid_vertex(b))
      throw UsageError("estimate_part_transforms: correspondence references a missing vertex");
    const auto p = static_cast<std::size_t>(body.part_of_vertex[static_cast<std::size_t>(a)]);
    from[p].push_back(src.vertex(a));
    to[p].push_back(dst.vertex(b));
  }
  std::vector<RigidTransform> out;
  std::string sparse, degenerate;
  for (std::size_t p = 0; p < body.num_parts(); ++p) {
    const IcpResult r = icp(from[p], to[p], init[p], options);
    if (r.used_init) sparse += " " + std::to_string(p);
    if (r.degenerate) degenerate += " " + std::to_string(p);
    out.push_back(r.transform);
  }
  if (!sparse.empty())
    warn("estimate_part_transforms: too few pairs, keeping the initial transform for parts" + sparse);
  if (!degenerate.empty())
    warn("estimate_part_transforms: collinear pairs, translation-only fit for parts" + degenerate);
  return out;
}

JointState update_joints(std::span<const RigidTransform> transforms, const JointState& prev,
                         const BodyModel& body) {
  if (transforms.size() != body.num_parts())
    throw UsageError("update_joints: need one transform per part");
  JointState out = prev;
  for (std::size_t j = 0; j < kNumJoints; ++j) {
    const auto parts = body.parts_at_joint(static_cast<int>(j));
    if (parts.empty()) continue;
    Vec3 sum = Vec3::Zero();
    for (int p : parts) sum += transforms[static_cast<std::size_t>(p)](prev.joints[j]);
    out.joints[j] = sum / static_cast<double>(parts.size());
  }
  return out;
}

TrackerConfig tracker_config_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("tracker config: ") + e.what());
  }
  if (!j.is_object()) throw FormatError("tracker config: expected an object");
  TrackerConfig c;
  static const std::set<std::string> known = {
      "e_max",          "e_max_slope",      "anchor_radius",   "n_anchors",     "subset_size",
      "look_ahead",     "scales",           "history",         "node_budget",   "seed",
      "tracked_vertices", "dormant_penalty", "reseed_distance", "label_distance", "icp_tolerance",
      "icp_max_iterations", "min_part_fraction", "outlier_factor"};
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) throw FormatError("tracker config: unknown key '" + key + "'");
  try {
    c.e_max = j.value("e_max", c.e_max);
    c.e_max_slope = j.value("e_max_slope", c.e_max_slope);
    c.anchor_radius = j.value("anchor_radius", c.anchor_radius);
    c.n_anchors = j.value("n_anchors", c.n_anchors);
    c.subset_size = j.value("subset_size", c.subset_size);
    c.look_ahead = j.value("look_ahead", c.look_ahead);
    c.scales = j.value("scales", c.scales);
    c.history = j.value("history", c.history);
    c.node_budget = j.value("node_budget", c.node_budget);
    c.seed = j.value("seed", c.seed);
    c.tracked_vertices = j.value("tracked_vertices", c.tracked_vertices);
    c.dormant_penalty = j.value("dormant_penalty", c.dormant_penalty);
    c.reseed_distance = j.value("reseed_distance", c.reseed_distance);
    c.label_distance = j.value("label_distance", c.label_distance);
    c.icp.tolerance = j.value("icp_tolerance", c.icp.tolerance);
    c.icp.max_iterations = j.value("icp_max_iterations", c.icp.max_iterations);
    c.min_part_fraction = j.value("min_part_fraction", c.min_part_fraction);
    c.outlier_factor = j.value("outlier_factor", c.outlier_factor);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("tracker config: ") + e.what());
  }
  return c;
}

std::string tracker_config_to_json(const TrackerConfig& c) {
  nlohmann::ordered_json j;
  j["e_max"] = c.e_max;
  j["e_max_slope"] = c.e_max_slope;
  j["anchor_radius"] = c.anchor_radius;
  j["n_anchors"] = c.n_anchors;
  j["subset_size"] = c.subset_size;
  j["look_ahead"] = c.look_ahead;
  j["scales"] = c.scales;
  j["history"] = c.history;
  j["node_budget"] = c.node_budget;
  j["seed"] = c.seed;
  j["tracked_vertices"] = c.tracked_vertices;
  j["dormant_penalty"] = c.dormant_penalty;
  j["reseed_distance"] = c.reseed_distance;
  j["label_distance"] = c.label_distance;
  j["icp_tolerance"] = c.icp.tolerance;
  j["icp_max_iterations"] = c.icp.max_iterations;
  j["min_part_fraction"] = c.min_part_fraction;
  j["outlier_factor"] = c.outlier_factor;
  return j.dump(2);
}

namespace {

void check_config(const TrackerConfig& c) {
  if (!(c.e_max >= 0.0)) throw UsageError("tracker: e_max must be >= 0");
  if (!(c.anchor_radius > 0.0)) throw UsageError("tracker: anchor_radius must be > 0");
  if (c.subset_size == 0 || c.subset_size > c.n_anchors)
    throw UsageError("tracker: subset_size must be in [1, n_anchors]");
  if (c.look_ahead < 1) throw UsageError("tracker: look_ahead must be >= 1");
  if (c.node_budget == 0) throw UsageError("tracker: node_budget must be >= 1");
  if (!(c.reseed_distance > 0.0)) throw UsageError("tracker: reseed_distance must be > 0");
  if (!(c.outlier_factor >= 0.0)) throw UsageError("tracker: outlier_factor must be >= 0");
}

struct Track {
  int part = 0;
  Vec3 ref;         // position in frame-0 coordinates of its part
  VertexId vertex;  // -1 while dormant
  Vec3 position;
};


// Labels anchors consistently over time against the last known position of
// every label seen so far.
class LabelMemory {
 public:
  explicit LabelMemory(double max_distance) : max_distance_(max_distance) {}

  AnchorSet label(const AnchorSet& detected, bool first) {
    AnchorSet out = first ? detected : order_anchors(detected, known_, max_distance_);
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (auto k = known_.find_label(out.labels[i])) {
        known_.positions[*k] = out.positions[i];
        known_.vertices[*k] = out.vertices[i];
      } else {
        known_.labels.push_back(out.labels[i]);
        known_.positions.push_back(out.positions[i]);
        known_.vertices.push_back(out.vertices[i]);
      }
    }
    known_.sort_by_label();
    return out;
  }

 private:
  double max_distance_;
  AnchorSet known_;
};

std::vector<int> choose_labels(const AnchorSet& anchors, const SurfaceMesh& mesh, std::size_t n) {
  std::vector<int> labels = anchors.labels;
  if (labels.size() != n)
    warn("tracker: frame 0 has " + std::to_string(labels.size()) + " anchors, expected " +
         std::to_string(n));
  if (labels.size() <= n) return labels;
  Vec3 centroid = Vec3::Zero();
  for (const Vec3& p : mesh.vertices()) centroid += p;
  centroid /= static_cast<double>(mesh.num_vertices());
  std::vector<std::size_t> order(anchors.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return (anchors.positions[a] - centroid).norm() > (anchors.positions[b] - centroid).norm();
  });
  labels.clear();
  for (std::size_t i = 0; i < n; ++i) labels.push_back(anchors.labels[order[i]]);
  return labels;
}

}  // namespace

namespace {

// ICP, then a refit without pairs beyond outlier_factor times the median
// residual. Parts with too few pairs keep `start`.
RigidTransform fit_part(const std::vector<Vec3>& from, const std::vector<Vec3>& to,
                        const RigidTransform& start, const IcpOptions& opt, double outlier_factor,
                        std::size_t& kept_start) {
  const IcpResult r = icp(from, to, start, opt);
  if (r.used_init) {
    ++kept_start;
    return start;
  }
  if (outlier_factor <= 0.0) return r.transform;
  std::vector<double> res(from.size());
  for (std::size_t i = 0; i < res.size(); ++i) res[i] = (r.transform(from[i]) - to[i]).norm();
  std::vector<double> sorted = res;
  const auto mid = sorted.begin() + static_cast<std::ptrdiff_t>(sorted.size() / 2);
  std::nth_element(sorted.begin(), mid, sorted.end());
  const double cut = outlier_factor * *mid;
  std::vector<Vec3> a, b;
  for (std::size_t i = 0; i < res.size(); ++i)
    if (res[i] <= cut) {
      a.push_back(from[i]);
      b.push_back(to[i]);
    }
  if (a.size() == from.size() || a.size() < opt.min_pairs) return r.transform;
  return icp(a, b, r.transform, opt).transform;
}

}  // namespace

TrackedSequence track_sequence(const FrameSource& frames, const JointState& skeleton0,
                               const MotionLibrary& library, const TrackerConfig& config) {
  check_config(config);
  if (frames.count < 2) throw UsageError("track_sequence: need at least 2 frames");
  if (!skeleton0.finite()) throw UsageError("track_sequence: frame-0 skeleton is not finite");

  const MatchOptions match{config.e_max, config.e_max_slope};
  LabelMemory memory(config.label_distance);

  std::deque<FrameData> window;  // frames [base, base + window.size())
  std::deque<GateCache> caches;
  std::size_t base = 0;
  std::vector<std::size_t> anchor_counts;
  auto load_until = [&](std::size_t last) {
    while (base + window.size() <= last) {
      const std::size_t f = base + window.size();
      SurfaceMesh mesh = frames.mesh(f);
      AnchorSet anchors;
      if (!mesh.empty()) anchors = memory.label(detect_anchors(mesh, config.anchor_radius), f == 0);
      anchor_counts.push_back(anchors.size());
      window.emplace_back(std::move(mesh), std::move(anchors));
      caches.emplace_back();
    }
  };
  auto frame = [&](std::size_t f) -> const FrameData& { return window[f - base]; };

  load_until(0);
  const SurfaceMesh& mesh0 = frame(0).mesh();
  if (mesh0.empty()) throw UsageError("track_sequence: frame 0 is empty");
  const HypothesisSpace space = HypothesisSpace::make(
      choose_labels(frame(0).anchors(), mesh0, config.n_anchors), config.subset_size);
  const BodyModel body = BodyModel::from_skeleton(mesh0, skeleton0);
  const std::size_t n_parts = body.num_parts();

  std::vector<VertexId> seeds(mesh0.num_vertices());
  std::iota(seeds.begin(), seeds.end(), 0);
  if (config.tracked_vertices > 0 && config.tracked_vertices < seeds.size()) {
    std::vector<VertexId> picked;
    std::mt19937_64 rng(config.seed);
    std::sample(seeds.begin(), seeds.end(), std::back_inserter(picked), config.tracked_vertices, rng);
    seeds = std::move(picked);
  }
  std::vector<Track> tracks;
  std::vector<std::size_t> part_tracks(n_parts, 0);
  for (VertexId v : seeds) ++part_tracks[static_cast<std::size_t>(body.part_of_vertex[static_cast<std::size_t>(v)])];
  for (VertexId v : seeds)
    tracks.push_back({body.part_of_vertex[static_cast<std::size_t>(v)], mesh0.vertex(v), v,
                      mesh0.vertex(v)});

  TrackedSequence out;
  out.joints.push_back(skeleton0);
  FrameDiagnostics d0;
  d0.anchors = anchor_counts[0];
  d0.active_tracks = tracks.size();
  d0.hypothesis_histogram.assign(space.size(), 0);
  out.diagnostics.push_back(d0);

  std::vector<RigidTransform> absolute(n_parts);
  out.part_transforms.push_back(absolute);

  for (std::size_t t = 0; t + 1 < frames.count; ++t) {
    const int levels = static_cast<int>(std::min<std::size_t>(config.look_ahead, frames.count - 1 - t));
    load_until(t + static_cast<std::size_t>(levels));

    // Shared joint predictions for the look-ahead frames.
    std::vector<JointState> rolled(
        out.joints.end() - static_cast<std::ptrdiff_t>(std::min(out.joints.size(), config.history + 1)),
        out.joints.end());
    std::vector<std::vector<RigidTransform>> motion(static_cast<std::size_t>(levels) + 1);
    JointState predicted_next;
    for (int d = 1; d <= levels; ++d) {
      const JointState p = predict_next(library, rolled, config.history);
      if (d == 1) predicted_next = p;
      rolled.push_back(p);
      for (const BodyPart& part : body.parts)
        motion[static_cast<std::size_t>(d)].push_back(part_transform(out.joints[t], p, part).transform);
    }

    std::vector<std::size_t> root_track;
    std::vector<VertexId> roots;
    for (std::size_t i = 0; i < tracks.size(); ++i)
      if (tracks[i].vertex >= 0) {
        root_track.push_back(i);
        roots.push_back(tracks[i].vertex);
      }
    TrackTree tree = TrackTree::from_roots(roots, levels);
    std::size_t pruned = 0;
    for (int d = 1; d <= levels; ++d) {
      std::vector<Vec3> predicted(roots.size());
      for (std::size_t r = 0; r < roots.size(); ++r) {
        const Track& tr = tracks[root_track[r]];
        predicted[r] = motion[static_cast<std::size_t>(d)][static_cast<std::size_t>(tr.part)](tr.position);
      }
      const std::size_t f = t + static_cast<std::size_t>(d);
      grow_tree(tree, frame(f - 1), frame(f), space, match, predicted, config.dormant_penalty,
                &caches[f - 1 - base]);
      pruned += prune(tree, std::max(config.node_budget, roots.size()));
    }
    // Staying unobserved for every level costs dormant_penalty per level.
    const std::vector<RootChoice> choices =
        best_hypotheses(tree, config.dormant_penalty * static_cast<double>(tree.depth));

    const FrameData& next = frame(t + 1);
    FrameDiagnostics diag;
    diag.frame = t + 1;
    diag.anchors = anchor_counts[t + 1];
    diag.pruned = pruned;
    diag.tree_leaves = tree.leaves().size();
    diag.hypothesis_histogram.assign(space.size(), 0);

    Correspondence corr;
    std::vector<VertexId> matched(tracks.size(), -1);
    for (std::size_t r = 0; r < choices.size(); ++r) {
      const VertexId src_v = roots[r];
      if (choices[r].next_vertex >= 0) {
        matched[root_track[r]] = choices[r].next_vertex;
        ++diag.hypothesis_histogram[static_cast<std::size_t>(choices[r].subset)];
        corr.pairs.emplace(src_v, choices[r].next_vertex);
      }
    }
    for (std::size_t r = 0; r < choices.size(); ++r)
      if (choices[r].next_vertex < 0 && !corr.pairs.count(roots[r])) corr.unmatched_source.insert(roots[r]);

    std::vector<RigidTransform> init(n_parts);
    for (std::size_t p = 0; p < n_parts; ++p) init[p] = motion[1][p] * absolute[p];

    if (next.mesh().empty()) {
      diag.empty_frame = true;
      absolute = init;
      out.joints.push_back(predicted_next);
      for (Track& tr : tracks) {
        tr.vertex = -1;
        tr.position = absolute[static_cast<std::size_t>(tr.part)](tr.ref);
      }
      diag.dormant = tracks.size();
    } else {
      std::vector<std::vector<Vec3>> from(n_parts), to(n_parts);
      for (std::size_t i = 0; i < tracks.size(); ++i)
        if (matched[i] >= 0) {
          const auto p = static_cast<std::size_t>(tracks[i].part);
          from[p].push_back(tracks[i].ref);
          to[p].push_back(next.mesh().vertex(matched[i]));
        }
      for (std::size_t p = 0; p < n_parts; ++p) diag.part_pairs.push_back(from[p].size());
      for (std::size_t p = 0; p < n_parts; ++p) {
        IcpOptions opt = config.icp;
        opt.min_pairs = std::max(opt.min_pairs, static_cast<std::size_t>(std::ceil(
                                                    config.min_part_fraction * static_cast<double>(part_tracks[p]))));
        absolute[p] = fit_part(from[p], to[p], init[p], opt, config.outlier_factor, diag.predicted_parts);
      }
      out.joints.push_back(update_joints(absolute, skeleton0, body));

      for (std::size_t i = 0; i < tracks.size(); ++i) {
        Track& tr = tracks[i];
        const Vec3 target = absolute[static_cast<std::size_t>(tr.part)](tr.ref);
        if (matched[i] >= 0 && (next.mesh().vertex(matched[i]) - target).norm() <= config.reseed_distance) {
          tr.vertex = matched[i];
          tr.position = next.mesh().vertex(matched[i]);
          ++diag.matched;
          continue;
        }
        tr.vertex = next.nearest_vertex(target, config.reseed_distance);
        if (tr.vertex >= 0) {
          tr.position = next.mesh().vertex(tr.vertex);
          ++diag.reseeded;
        } else {
          tr.position = target;
          ++diag.dormant;
        }
      }
    }
    diag.active_tracks = static_cast<std::size_t>(
        std::count_if(tracks.begin(), tracks.end(), [](const Track& tr) { return tr.vertex >= 0; }));
    out.diagnostics.push_back(std::move(diag));
    out.part_transforms.push_back(absolute);
    out.correspondences.push_back(std::move(corr));

    window.pop_front();
    caches.pop_front();
    ++base;
  }
  return out;
}

TrackedSequence track_sequence(const std::vector<SurfaceMesh>& frames, const JointState& skeleton0,
                               const MotionLibrary& library, const TrackerConfig& config) {
  FrameSource source{frames.size(), [&frames](std::size_t i) { return frames[i]; }};
  return track_sequence(source, skeleton0, library, config);
}

}  // namespace geotrack
