#include "geotrack/bench.hpp"

#include "geotrack/descriptor.hpp"
#include "geotrack/error.hpp"
#include "geotrack/geodesic.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <thread>

#ifndef GEOTRACK_BUILD_TYPE
#define GEOTRACK_BUILD_TYPE "unknown"
#endif

namespace geotrack {

MotionType parse_motion_type(const std::string& name) {
  if (name == "upper") return MotionType::upper;
  if (name == "lower") return MotionType::lower;
  if (name == "shift") return MotionType::shift;
  throw UsageError("unknown motion type '" + name + "' (upper, lower, shift)");
}

Speed parse_speed(const std::string& name) {
  if (name == "slow") return Speed::slow;
  if (name == "normal") return Speed::normal;
  if (name == "fast") return Speed::fast;
  throw UsageError("unknown speed '" + name + "' (slow, normal, fast)");
}

double speed_multiplier(Speed s) {
  switch (s) {
    case Speed::slow: return 0.5;
    case Speed::normal: return 1.0;
    case Speed::fast: return 2.0;
  }
  return 1.0;
}

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;
constexpr double kArmRest = 30.0 * kDeg;
constexpr double kArmSwing = 50.0 * kDeg;
constexpr double kLegRest = 3.0 * kDeg;
constexpr double kLegSwing = 25.0 * kDeg;
constexpr double kShiftPerFrame = 0.004;
// Silhouette fringes can leave a few isolated triangles behind.
constexpr std::size_t kMinComponent = 30;

// Image window, meters.
constexpr double kMinX = -1.0, kMaxX = 1.0, kMinY = -0.1, kMaxY = 1.9;

struct PoseParams {
  double arm = kArmRest;
  double leg = kLegRest;
  double shift = 0.0;
};

JointState build_pose(const PoseParams& q) {
  using J = Joint;
  JointState s;
  s[J::spine_base] = {0.0, 1.00, 0.0};
  s[J::spine_mid] = {0.0, 1.20, 0.0};
  s[J::spine_top] = {0.0, 1.40, 0.0};
  s[J::neck] = {0.0, 1.50, 0.0};
  s[J::head] = {0.0, 1.66, 0.0};
  for (int side : {1, -1}) {
    const bool left = side > 0;
    const Vec3 arm(side * std::sin(q.arm), -std::cos(q.arm), 0.0);
    const Vec3 shoulder(side * 0.18, 1.40, 0.0);
    s[left ? J::shoulder_left : J::shoulder_right] = shoulder;
    s[left ? J::elbow_left : J::elbow_right] = shoulder + 0.28 * arm;
    s[left ? J::wrist_left : J::wrist_right] = shoulder + 0.53 * arm;
    s[left ? J::hand_left : J::hand_right] = shoulder + 0.61 * arm;

    const Vec3 leg(side * std::sin(q.leg), -std::cos(q.leg), 0.0);
    const Vec3 hip(side * 0.10, 0.95, 0.0);
    const Vec3 ankle = hip + 0.86 * leg;
    s[left ? J::hip_left : J::hip_right] = hip;
    s[left ? J::knee_left : J::knee_right] = hip + 0.44 * leg;
    s[left ? J::ankle_left : J::ankle_right] = ankle;
    s[left ? J::foot_left : J::foot_right] =
        ankle + axis_angle(Vec3::UnitZ(), side * q.leg) * Vec3(0.0, -0.07, 0.03);
  }
  return s.translated(Vec3(q.shift, 0.0, 0.0));
}

PoseParams pose_at(MotionType motion, double cycles, double frames) {
  const double wave = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * cycles));
  PoseParams q;
  switch (motion) {
    case MotionType::upper: q.arm = kArmRest + kArmSwing * wave; break;
    case MotionType::lower: q.leg = kLegRest + kLegSwing * wave; break;
    case MotionType::shift: q.shift = kShiftPerFrame * frames; break;
  }
  return q;
}

// Capsules sit behind their bone so that every front surface peaks at the same
// depth; junctions between thick and thin parts then stay connected in the mesh.
Vec3 capsule_offset(double radius) { return {0.0, 0.0, -0.9 * radius}; }

// Smallest ray parameter where ro + t*rd enters the capsule, or -1.
double capsule_hit(const Vec3& ro, const Vec3& rd, const Vec3& pa, const Vec3& pb, double r) {
  const Vec3 ba = pb - pa;
  const Vec3 oa = ro - pa;
  const double baba = ba.dot(ba), bard = ba.dot(rd), baoa = ba.dot(oa);
  const double rdoa = rd.dot(oa), oaoa = oa.dot(oa);
  const double a = baba - bard * bard;
  auto sphere = [&](const Vec3& c) {
    const Vec3 oc = ro - c;
    const double b = rd.dot(oc);
    const double h = b * b - (oc.dot(oc) - r * r);
    return h >= 0.0 ? -b - std::sqrt(h) : -1.0;
  };
  if (a > 1e-12 * baba) {
    const double b = baba * rdoa - baoa * bard;
    const double c = baba * oaoa - baoa * baoa - r * r * baba;
    const double h = b * b - a * c;
    if (h < 0.0) return -1.0;
    const double t = (-b - std::sqrt(h)) / a;
    const double y = baoa + t * bard;
    if (y > 0.0 && y < baba) return t;
    return sphere(y <= 0.0 ? pa : pb);
  }
  double best = -1.0;
  for (const Vec3& c : {pa, pb}) {
    const double t = sphere(c);
    if (t >= 0.0 && (best < 0.0 || t < best)) best = t;
  }
  return best;
}

}  // namespace

SyntheticBody::SyntheticBody(SyntheticSpec spec) : spec_(spec) {
  if (!(spec_.pitch > 0.0)) throw UsageError("synthetic body: pitch must be > 0");
  if (spec_.period == 0) throw UsageError("synthetic body: period must be > 0");
  if (!(spec_.noise_sigma >= 0.0)) throw UsageError("synthetic body: noise sigma must be >= 0");
}

JointState SyntheticBody::rest_pose() { return build_pose({}); }

const std::vector<double>& SyntheticBody::part_radii() {
  // By child joint: head, neck, spine_top, spine_mid, then per arm shoulder,
  // upper arm, forearm, hand, then per leg hip, thigh, shin, foot.
  static const std::vector<double> radii = {0.09,  0.055, 0.14, 0.13,  0.06, 0.05, 0.04,
                                            0.035, 0.06,  0.05, 0.04,  0.035, 0.09, 0.07,
                                            0.05,  0.035, 0.09, 0.07,  0.05, 0.035};
  return radii;
}

JointState SyntheticBody::skeleton(std::size_t frame) const {
  const double f = static_cast<double>(frame) * speed_multiplier(spec_.speed);
  return build_pose(pose_at(spec_.motion, f / static_cast<double>(spec_.period), f));
}

PointCloud SyntheticBody::render(const JointState& pose, std::size_t frame) const {
  const double pitch = spec_.pitch;
  const auto width = static_cast<std::size_t>(std::floor((kMaxX - kMinX) / pitch)) + 1;
  const auto height = static_cast<std::size_t>(std::floor((kMaxY - kMinY) / pitch)) + 1;
  std::vector<double> depth(width * height, -kInfinity);

  const BodyModel body = BodyModel::standard();
  const auto& radii = part_radii();
  const double top = 10.0;
  const Vec3 down(0.0, 0.0, -1.0);
  for (std::size_t p = 0; p < body.num_parts(); ++p) {
    const double r = radii[p];
    const Vec3 a = pose.joints[body.parts[p].parent_joint] + capsule_offset(r);
    const Vec3 b = pose.joints[body.parts[p].child_joint] + capsule_offset(r);
    const double x0 = std::min(a.x(), b.x()) - r, x1 = std::max(a.x(), b.x()) + r;
    const double y0 = std::min(a.y(), b.y()) - r, y1 = std::max(a.y(), b.y()) + r;
    const auto c0 = static_cast<long>(std::max(0.0, std::ceil((x0 - kMinX) / pitch)));
    const auto c1 = std::min(static_cast<long>(width) - 1, static_cast<long>(std::floor((x1 - kMinX) / pitch)));
    const auto r0 = std::max(0L, static_cast<long>(std::ceil((kMaxY - y1) / pitch)));
    const auto r1 = std::min(static_cast<long>(height) - 1, static_cast<long>(std::floor((kMaxY - y0) / pitch)));
    for (long row = r0; row <= r1; ++row)
      for (long col = c0; col <= c1; ++col) {
        const Vec3 ro(kMinX + static_cast<double>(col) * pitch, kMaxY - static_cast<double>(row) * pitch, top);
        const double t = capsule_hit(ro, down, a, b, r);
        if (t < 0.0) continue;
        double& d = depth[static_cast<std::size_t>(row) * width + static_cast<std::size_t>(col)];
        d = std::max(d, top - t);
      }
  }

  std::mt19937_64 rng(spec_.seed ^ (0x9e3779b97f4a7c15ULL * (frame + 1)));
  std::normal_distribution<double> noise(0.0, spec_.noise_sigma);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::vector<Vec3> pts(width * height);
  for (std::size_t row = 0; row < height; ++row)
    for (std::size_t col = 0; col < width; ++col) {
      const std::size_t i = row * width + col;
      if (std::isinf(depth[i])) {
        pts[i] = Vec3(nan, nan, nan);
        continue;
      }
      const double z = spec_.noise_sigma > 0.0 ? depth[i] + noise(rng) : depth[i];
      pts[i] = Vec3(kMinX + static_cast<double>(col) * pitch, kMaxY - static_cast<double>(row) * pitch, z);
    }
  return PointCloud::organized_grid(width, height, std::move(pts));
}

SurfaceMesh SyntheticBody::mesh(std::size_t frame) const {
  TriangulationParams params;
  params.mode = TriangulationMode::grid;
  params.max_edge_length = max_edge_length();
  params.min_component_size = kMinComponent;
  return triangulate(cloud(frame), params);
}

double capsule_union_distance(const JointState& pose, const Vec3& p) {
  const BodyModel body = BodyModel::standard();
  const auto& radii = SyntheticBody::part_radii();
  double best = kInfinity;
  for (std::size_t i = 0; i < body.num_parts(); ++i) {
    const Vec3 a = pose.joints[body.parts[i].parent_joint] + capsule_offset(radii[i]);
    const Vec3 b = pose.joints[body.parts[i].child_joint] + capsule_offset(radii[i]);
    const Vec3 ab = b - a;
    const double t = std::clamp((p - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
    best = std::min(best, (p - (a + t * ab)).norm() - radii[i]);
  }
  return best;
}

GeneratedSequence generate_sequence(const SyntheticSpec& spec) {
  const SyntheticBody body(spec);
  GeneratedSequence out;
  for (std::size_t f = 0; f < spec.n_frames; ++f) {
    out.skeletons.push_back(body.skeleton(f));
    out.frames.push_back(body.render(out.skeletons.back(), f));
  }
  return out;
}

std::vector<JointState> reference_motion(MotionType motion, std::size_t period) {
  SyntheticSpec spec;
  spec.motion = motion;
  spec.period = period;
  const SyntheticBody body(spec);
  std::vector<JointState> out;
  for (std::size_t f = 0; f < period; ++f) out.push_back(body.skeleton(f));
  return out;
}

Timing time_operation(const std::function<void()>& op, std::size_t runs) {
  if (runs == 0) throw UsageError("time_operation: need at least one run");
  op();
  Timing out;
  for (std::size_t i = 0; i < runs; ++i) {
    const auto start = std::chrono::steady_clock::now();
    op();
    const auto stop = std::chrono::steady_clock::now();
    out.runs.push_back(std::chrono::duration<double>(stop - start).count());
  }
  std::vector<double> sorted = out.runs;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  out.median = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  out.noisy = sorted.front() > 0.0 ? sorted.back() / sorted.front() >= 3.0 : false;
  return out;
}

MachineInfo machine_info() {
  MachineInfo info;
  std::ifstream cpuinfo("/proc/cpuinfo");
  std::string line;
  while (std::getline(cpuinfo, line))
    if (line.rfind("model name", 0) == 0) {
      const auto colon = line.find(':');
      if (colon != std::string::npos) info.cpu = line.substr(colon + 2);
      break;
    }
  if (info.cpu.empty()) info.cpu = "unknown";
  info.threads = std::thread::hardware_concurrency();
#if defined(__clang__)
  info.compiler = "clang " __clang_version__;
#elif defined(__GNUC__)
  info.compiler = "gcc " __VERSION__;
#else
  info.compiler = "unknown";
#endif
  info.build_type = GEOTRACK_BUILD_TYPE;
  return info;
}

BenchReport run_bench(double pitch, std::size_t runs) {
  SyntheticSpec spec;
  spec.pitch = pitch;
  spec.n_frames = 1;
  const SyntheticBody body(spec);
  const PointCloud cloud = body.cloud(0);
  TriangulationParams params;
  params.max_edge_length = body.max_edge_length();
  params.min_component_size = 30;

  BenchReport rep;
  rep.pitch = pitch;
  SurfaceMesh mesh;
  rep.mesh_build = time_operation([&] { mesh = triangulate(cloud, params); }, runs);
  rep.vertices = mesh.num_vertices();
  rep.edges = mesh.num_edges();
  rep.anchor_feature = time_operation([&] {
    const AnchorSet anchors = detect_anchors(mesh);
    const DescriptorTable table(mesh, anchors);
    rep.anchors = anchors.size();
  }, runs);
  rep.machine = machine_info();
  return rep;
}

std::string bench_to_json(const BenchReport& r) {
  auto timing = [](const Timing& t) {
    nlohmann::ordered_json j;
    j["median_s"] = t.median;
    j["runs_s"] = t.runs;
    j["noisy"] = t.noisy;
    return j;
  };
  nlohmann::ordered_json j;
  j["pitch"] = r.pitch;
  j["vertices"] = r.vertices;
  j["edges"] = r.edges;
  j["anchors"] = r.anchors;
  j["mesh_build"] = timing(r.mesh_build);
  j["anchor_feature"] = timing(r.anchor_feature);
  j["machine"] = {{"cpu", r.machine.cpu},
                  {"threads", r.machine.threads},
                  {"compiler", r.machine.compiler},
                  {"build_type", r.machine.build_type}};
  return j.dump(2) + "\n";
}

}  // namespace geotrack
