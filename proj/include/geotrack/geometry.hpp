#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>

namespace geotrack {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using VertexId = std::int32_t;

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

/// x -> rotation * x + translation
struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static RigidTransform identity() { return {}; }
  static RigidTransform from_translation(const Vec3& t) { return {Mat3::Identity(), t}; }

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  Vec3 operator()(const Vec3& p) const { return apply(p); }

  /// (a * b)(x) == a(b(x))
  friend RigidTransform operator*(const RigidTransform& a, const RigidTransform& b) {
    return {a.rotation * b.rotation, a.rotation * b.translation + a.translation};
  }

  RigidTransform inverse() const {
    const Mat3 rt = rotation.transpose();
    return {rt, -(rt * translation)};
  }
};

/// Angle of the relative rotation between two rotation matrices, in radians.
inline double rotation_angle_between(const Mat3& a, const Mat3& b) {
  const Mat3 rel = a.transpose() * b;
  const double c = std::clamp((rel.trace() - 1.0) * 0.5, -1.0, 1.0);
  return std::acos(c);
}

inline Mat3 axis_angle(const Vec3& axis, double radians) {
  return Eigen::AngleAxisd(radians, axis.normalized()).toRotationMatrix();
}

}  // namespace geotrack
