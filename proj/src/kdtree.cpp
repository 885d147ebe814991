#include "geotrack/kdtree.hpp"

#include "geotrack/error.hpp"

#include <algorithm>
#include <numeric>

namespace geotrack {

namespace {
constexpr std::uint32_t kLeafSize = 8;
}

KdTree::KdTree(std::size_t dim, std::vector<double> coords, std::vector<std::int32_t> ids)
    : dim_(dim), coords_(std::move(coords)), ids_(std::move(ids)) {
  if (coords_.size() != dim_ * ids_.size())
    throw UsageError("KdTree: coordinate count does not match dim * ids");
  order_.resize(ids_.size());
  std::iota(order_.begin(), order_.end(), 0u);
  if (!ids_.empty()) {
    nodes_.reserve(2 * ids_.size() / kLeafSize + 2);
    build(0, static_cast<std::uint32_t>(ids_.size()));
  }
}

KdTree KdTree::from_points(std::span<const Vec3> points) {
  std::vector<double> coords;
  coords.reserve(points.size() * 3);
  std::vector<std::int32_t> ids(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    coords.insert(coords.end(), {points[i].x(), points[i].y(), points[i].z()});
    ids[i] = static_cast<std::int32_t>(i);
  }
  return KdTree(3, std::move(coords), std::move(ids));
}

std::int32_t KdTree::build(std::uint32_t begin, std::uint32_t end) {
  const auto index = static_cast<std::int32_t>(nodes_.size());
  nodes_.push_back({begin, end});
  if (end - begin <= kLeafSize || dim_ == 0) return index;

  std::size_t best_axis = 0;
  double best_spread = -1.0;
  for (std::size_t a = 0; a < dim_; ++a) {
    double lo = kInfinity, hi = -kInfinity;
    for (std::uint32_t s = begin; s < end; ++s) {
      lo = std::min(lo, point(s, a));
      hi = std::max(hi, point(s, a));
    }
    if (hi - lo > best_spread) {
      best_spread = hi - lo;
      best_axis = a;
    }
  }
  if (best_spread <= 0.0) return index;

  const std::uint32_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](std::uint32_t x, std::uint32_t y) {
                     const double vx = coords_[x * dim_ + best_axis];
                     const double vy = coords_[y * dim_ + best_axis];
                     return vx != vy ? vx < vy : x < y;
                   });
  const double split = point(mid, best_axis);
  const std::int32_t left = build(begin, mid);
  const std::int32_t right = build(mid, end);
  Node& node = nodes_[static_cast<std::size_t>(index)];
  node.left = left;
  node.right = right;
  node.axis = static_cast<std::uint32_t>(best_axis);
  node.split = split;
  return index;
}

void KdTree::search(std::int32_t node_index, const double* q, Hit& best) const {
  const Node& node = nodes_[static_cast<std::size_t>(node_index)];
  if (node.left < 0) {
    for (std::uint32_t s = node.begin; s < node.end; ++s) {
      const double* p = coords_.data() + static_cast<std::size_t>(order_[s]) * dim_;
      double d2 = 0.0;
      for (std::size_t a = 0; a < dim_; ++a) {
        const double diff = q[a] - p[a];
        d2 += diff * diff;
      }
      const std::int32_t id = ids_[order_[s]];
      if (d2 < best.dist2 || (d2 == best.dist2 && (best.id < 0 || id < best.id))) {
        best.dist2 = d2;
        best.id = id;
      }
    }
    return;
  }
  // Left holds values <= split, right holds values >= split.
  const double diff = q[node.axis] - node.split;
  const std::int32_t near = diff <= 0.0 ? node.left : node.right;
  const std::int32_t far = diff <= 0.0 ? node.right : node.left;
  search(near, q, best);
  // Equal distance must still be explored: a lower id may sit on the far side.
  if (diff * diff <= best.dist2) search(far, q, best);
}

KdTree::Hit KdTree::nearest(std::span<const double> query, double max_dist2) const {
  if (query.size() != dim_) throw UsageError("KdTree: query dimension mismatch");
  Hit best;
  best.dist2 = max_dist2;
  if (nodes_.empty()) return {};
  search(0, query.data(), best);
  if (best.id < 0) return {};
  return best;
}

KdTree::Hit KdTree::nearest(const Vec3& query, double max_dist2) const {
  const double q[3] = {query.x(), query.y(), query.z()};
  return nearest(std::span<const double>(q, 3), max_dist2);
}

}  // namespace geotrack
