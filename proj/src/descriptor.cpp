#include "geotrack/descriptor.hpp"

#include "geotrack/error.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

namespace geotrack {

namespace {

// Contribution of one slot; returns false when the pair is at infinite distance.
inline bool slot_term(double a, double b, double& term) {
  const bool ia = std::isinf(a), ib = std::isinf(b);
  if (ia && ib) {
    term = 0.0;
    return true;
  }
  if (ia || ib) return false;
  const double d = a - b;
  term = d * d;
  return true;
}

// |a - b| with the descriptor rule for infinite values.
double pair_gap(double a, double b) {
  const bool ia = std::isinf(a), ib = std::isinf(b);
  if (ia && ib) return 0.0;
  if (ia || ib) return kInfinity;
  return std::abs(a - b);
}

}  // namespace

FeatureVector full_descriptor(const SurfaceMesh& mesh, VertexId v) {
  if (!mesh.valid_vertex(v)) throw UsageError("full_descriptor: invalid vertex");
  FeatureVector f;
  f.values = shortest_distances(mesh, v).distances;
  f.all_vertices = true;
  return f;
}

DescriptorTable::DescriptorTable(const SurfaceMesh& mesh, const AnchorSet& anchors)
    : rows_(mesh.num_vertices()) {
  AnchorSet sorted = anchors;
  sorted.sort_by_label();
  labels_ = sorted.labels;
  const std::size_t k = labels_.size();
  data_.assign(rows_ * k, kInfinity);
  for (std::size_t j = 0; j < k; ++j) {
    const DistanceField field = shortest_distances(mesh, sorted.vertices[j]);
    std::size_t unreachable = 0;
    for (std::size_t v = 0; v < rows_; ++v) {
      data_[v * k + j] = field.distances[v];
      unreachable += std::isinf(field.distances[v]) ? 1 : 0;
    }
    if (unreachable > 0) {
      warn("anchor " + std::to_string(labels_[j]) + " is disconnected from " +
           std::to_string(unreachable) + " vertices; their slot is +infinity");
    }
  }
}

FeatureVector DescriptorTable::descriptor(VertexId v) const {
  FeatureVector f;
  const auto r = row(v);
  f.values.assign(r.begin(), r.end());
  f.labels = labels_;
  return f;
}

int DescriptorTable::slot_of(int label) const {
  const auto it = std::find(labels_.begin(), labels_.end(), label);
  return it == labels_.end() ? -1 : static_cast<int>(it - labels_.begin());
}

FeatureVector anchor_descriptor(const SurfaceMesh& mesh, const AnchorSet& anchors, VertexId v) {
  if (anchors.empty()) throw UsageError("anchor_descriptor: anchor set is empty");
  if (!mesh.valid_vertex(v)) throw UsageError("anchor_descriptor: invalid vertex");
  AnchorSet sorted = anchors;
  sorted.sort_by_label();
  FeatureVector f;
  f.labels = sorted.labels;
  for (VertexId a : sorted.vertices) {
    const double d = shortest_distances(mesh, a).distances[static_cast<std::size_t>(v)];
    if (std::isinf(d)) warn("anchor_descriptor: vertex is disconnected from an anchor");
    f.values.push_back(d);
  }
  return f;
}

double descriptor_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw UsageError("descriptor_distance: length mismatch (" + std::to_string(a.size()) +
                     " vs " + std::to_string(b.size()) + ")");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double term = 0.0;
    if (!slot_term(a[i], b[i], term)) return kInfinity;
    sum += term;
  }
  return std::sqrt(sum);
}

double descriptor_distance(const FeatureVector& a, const FeatureVector& b) {
  if (!a.labels.empty() && !b.labels.empty() && a.labels != b.labels)
    throw UsageError("descriptor_distance: descriptors use different anchor labels");
  if (a.all_vertices != b.all_vertices)
    throw UsageError("descriptor_distance: cannot compare full and anchor descriptors");
  return descriptor_distance(std::span<const double>(a.values), std::span<const double>(b.values));
}

DescriptorIndex::DescriptorIndex(const DescriptorTable& table, std::vector<std::size_t> slots)
    : slots_(std::move(slots)) {
  if (slots_.size() > 63) throw UsageError("DescriptorIndex: at most 63 slots");
  for (std::size_t s : slots_)
    if (s >= table.slots()) throw UsageError("DescriptorIndex: slot out of range");

  struct Bucket {
    std::vector<double> coords;
    std::vector<std::int32_t> ids;
    std::size_t dim = 0;
  };
  std::map<std::uint64_t, Bucket> staging;
  for (std::size_t v = 0; v < table.rows(); ++v) {
    const auto row = table.row(static_cast<VertexId>(v));
    std::uint64_t mask = 0;
    for (std::size_t k = 0; k < slots_.size(); ++k)
      if (std::isinf(row[slots_[k]])) mask |= std::uint64_t{1} << k;
    Bucket& b = staging[mask];
    b.dim = slots_.size() - static_cast<std::size_t>(std::popcount(mask));
    for (std::size_t k = 0; k < slots_.size(); ++k)
      if (!(mask >> k & 1)) b.coords.push_back(row[slots_[k]]);
    b.ids.push_back(static_cast<std::int32_t>(v));
  }
  for (auto& [mask, b] : staging)
    buckets_.emplace(mask, KdTree(b.dim, std::move(b.coords), std::move(b.ids)));
}

DescriptorIndex::Hit DescriptorIndex::nearest(std::span<const double> query,
                                              double max_distance) const {
  std::uint64_t mask = 0;
  double projected[64];
  std::size_t dim = 0;
  for (std::size_t k = 0; k < slots_.size(); ++k) {
    const double q = query[slots_[k]];
    if (std::isinf(q))
      mask |= std::uint64_t{1} << k;
    else
      projected[dim++] = q;
  }
  const auto it = buckets_.find(mask);
  if (it == buckets_.end()) return {};
  // Search slightly past the bound, then apply the exact sqrt comparison.
  const double bound2 =
      std::isinf(max_distance) ? kInfinity : max_distance * max_distance * (1.0 + 1e-9) + 1e-300;
  const KdTree::Hit hit = it->second.nearest(std::span<const double>(projected, dim), bound2);
  if (!hit.found()) return {};
  const double distance = std::sqrt(hit.dist2);
  if (distance > max_distance) return {};
  return {hit.id, distance};
}

SharedSlots shared_slots(const DescriptorTable& src, const DescriptorTable& dst) {
  SharedSlots out;
  for (std::size_t i = 0; i < src.labels().size(); ++i) {
    const int j = dst.slot_of(src.labels()[i]);
    if (j < 0) continue;
    out.labels.push_back(src.labels()[i]);
    out.src_slots.push_back(i);
    out.dst_slots.push_back(static_cast<std::size_t>(j));
  }
  return out;
}

Correspondence match_vertices(const SurfaceMesh& src_mesh, const DescriptorTable& src,
                              const SurfaceMesh& dst_mesh, const DescriptorTable& dst,
                              const MatchOptions& options) {
  const SharedSlots shared = shared_slots(src, dst);
  if (shared.labels.empty()) throw UsageError("match_vertices: no shared anchor labels");

  const DescriptorIndex index(dst, shared.dst_slots);
  Correspondence out;
  std::vector<char> hit(dst_mesh.num_vertices(), 0);
  // The index expects queries laid out in dst slot order.
  std::vector<double> query(dst.slots(), 0.0);
  for (std::size_t v = 0; v < src_mesh.num_vertices(); ++v) {
    const auto row = src.row(static_cast<VertexId>(v));
    for (std::size_t k = 0; k < shared.labels.size(); ++k)
      query[shared.dst_slots[k]] = row[shared.src_slots[k]];
    const double gate = gate_threshold(options, src_mesh.vertices()[v]);
    const auto best = index.nearest(query, gate);
    if (best.found()) {
      out.pairs.emplace(static_cast<VertexId>(v), best.vertex);
      hit[static_cast<std::size_t>(best.vertex)] = 1;
    } else {
      out.unmatched_source.insert(static_cast<VertexId>(v));
    }
  }
  for (std::size_t u = 0; u < hit.size(); ++u)
    if (!hit[u]) out.unmatched_target.insert(static_cast<VertexId>(u));
  return out;
}

Correspondence match_vertices(const SurfaceMesh& src_mesh, const AnchorSet& src_anchors,
                              const SurfaceMesh& dst_mesh, const AnchorSet& dst_anchors,
                              const MatchOptions& options) {
  return match_vertices(src_mesh, DescriptorTable(src_mesh, src_anchors), dst_mesh,
                        DescriptorTable(dst_mesh, dst_anchors), options);
}

std::size_t binomial(std::size_t n, std::size_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  std::size_t r = 1;
  for (std::size_t i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

std::vector<std::vector<std::size_t>> combinations(std::size_t n, std::size_t k) {
  std::vector<std::vector<std::size_t>> out;
  if (k > n) return out;
  std::vector<std::size_t> cur(k);
  for (std::size_t i = 0; i < k; ++i) cur[i] = i;
  while (true) {
    out.push_back(cur);
    std::size_t i = k;
    while (i > 0 && cur[i - 1] == n - k + i - 1) --i;
    if (i == 0) break;
    ++cur[i - 1];
    for (std::size_t j = i; j < k; ++j) cur[j] = cur[j - 1] + 1;
  }
  return out;
}

std::vector<FeatureVector> subset_descriptors(const SurfaceMesh& mesh, const AnchorSet& anchors,
                                              VertexId v, std::size_t subset_size) {
  if (subset_size < 1 || subset_size > anchors.size())
    throw UsageError("subset_descriptors: subset size " + std::to_string(subset_size) +
                     " outside [1, " + std::to_string(anchors.size()) + "]");
  const FeatureVector full = anchor_descriptor(mesh, anchors, v);
  std::vector<FeatureVector> out;
  for (const auto& combo : combinations(full.values.size(), subset_size)) {
    FeatureVector f;
    for (std::size_t idx : combo) {
      f.values.push_back(full.values[idx]);
      f.labels.push_back(full.labels[idx]);
    }
    out.push_back(std::move(f));
  }
  return out;
}

double mesh_distortion(const SurfaceMesh& src, const SurfaceMesh& dst, const Correspondence& map) {
  if (map.pairs.size() < 2) throw UsageError("mesh_distortion: need at least 2 mapped pairs");
  std::vector<std::pair<VertexId, VertexId>> pairs(map.pairs.begin(), map.pairs.end());
  for (const auto& [s, t] : pairs) {
    if (!src.valid_vertex(s) || !dst.valid_vertex(t))
      throw UsageError("mesh_distortion: correspondence references an invalid vertex");
  }
  std::map<VertexId, std::vector<double>> dst_fields;
  double worst = 0.0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto src_field = shortest_distances(src, pairs[i].first).distances;
    auto& df = dst_fields[pairs[i].second];
    if (df.empty()) df = shortest_distances(dst, pairs[i].second).distances;
    for (std::size_t j = i + 1; j < pairs.size(); ++j) {
      worst = std::max(worst, pair_gap(src_field[pairs[j].first], df[pairs[j].second]));
    }
  }
  return worst;
}

GmdsResult gmds_distance(const SurfaceMesh& src, const SurfaceMesh& dst) {
  const std::size_t n = src.num_vertices();
  const std::size_t m = dst.num_vertices();
  if (n > kGmdsVertexLimit || m > kGmdsVertexLimit)
    throw UsageError("gmds_distance: meshes are limited to " + std::to_string(kGmdsVertexLimit) +
                     " vertices (got " + std::to_string(n) + " and " + std::to_string(m) + ")");
  if (n == 0 || m == 0) throw UsageError("gmds_distance: meshes must be non-empty");

  std::vector<std::vector<double>> gs(n), gd(m);
  for (std::size_t i = 0; i < n; ++i) gs[i] = shortest_distances(src, static_cast<VertexId>(i)).distances;
  for (std::size_t j = 0; j < m; ++j) gd[j] = shortest_distances(dst, static_cast<VertexId>(j)).distances;

  std::vector<std::size_t> assign(n, 0), best_assign;
  double best = kInfinity;
  // Depth-first over maps in lexicographic order; a branch is cut once its
  // partial distortion can no longer beat the incumbent.
  auto recurse = [&](auto&& self, std::size_t i, double current) -> void {
    if (i == n) {
      if (current < best) {
        best = current;
        best_assign = assign;
      }
      return;
    }
    for (std::size_t j = 0; j < m; ++j) {
      double worst = current;
      for (std::size_t k = 0; k < i && worst < best; ++k)
        worst = std::max(worst, pair_gap(gs[i][k], gd[j][assign[k]]));
      if (worst >= best) continue;
      assign[i] = j;
      self(self, i + 1, worst);
    }
  };
  recurse(recurse, 0, 0.0);

  GmdsResult out;
  if (best_assign.empty()) {
    // Every map has infinite distortion (disconnected pairs that cannot be matched).
    out.distance = kInfinity;
    best_assign.assign(n, 0);
  } else {
    out.distance = 0.5 * best;
  }
  for (std::size_t i = 0; i < n; ++i)
    out.argmin.pairs.emplace(static_cast<VertexId>(i), static_cast<VertexId>(best_assign[i]));
  std::vector<char> hit(m, 0);
  for (auto j : best_assign) hit[j] = 1;
  for (std::size_t j = 0; j < m; ++j)
    if (!hit[j]) out.argmin.unmatched_target.insert(static_cast<VertexId>(j));
  return out;
}

}  // namespace geotrack
