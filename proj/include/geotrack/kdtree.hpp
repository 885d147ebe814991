#pragma once

#include "geotrack/geometry.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace geotrack {

/// Static k-d tree over finite points of a fixed (runtime) dimension.
///
/// Nearest-neighbor queries are exact and deterministic: among points at the
/// same squared distance the lowest id wins. Squared distances are summed in
/// axis order so results agree bit-for-bit with a linear scan that does the same.
class KdTree {
 public:
  struct Hit {
    std::int32_t id = -1;
    double dist2 = kInfinity;
    bool found() const { return id >= 0; }
  };

  KdTree() = default;

  /// `coords` holds `ids.size()` points of `dim` values each, row-major.
  KdTree(std::size_t dim, std::vector<double> coords, std::vector<std::int32_t> ids);

  static KdTree from_points(std::span<const Vec3> points);

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return ids_.size(); }

  /// Closest point with dist2 <= max_dist2, or an empty hit.
  Hit nearest(std::span<const double> query, double max_dist2 = kInfinity) const;
  Hit nearest(const Vec3& query, double max_dist2 = kInfinity) const;

 private:
  struct Node {
    std::uint32_t begin = 0;
    std::uint32_t end = 0;
    std::int32_t left = -1;
    std::int32_t right = -1;
    std::uint32_t axis = 0;
    double split = 0.0;
  };

  std::int32_t build(std::uint32_t begin, std::uint32_t end);
  void search(std::int32_t node, const double* q, Hit& best) const;
  double point(std::uint32_t slot, std::size_t axis) const {
    return coords_[static_cast<std::size_t>(order_[slot]) * dim_ + axis];
  }

  std::size_t dim_ = 0;
  std::vector<double> coords_;
  std::vector<std::int32_t> ids_;
  std::vector<std::uint32_t> order_;  // permutation of point rows
  std::vector<Node> nodes_;
};

}  // namespace geotrack
