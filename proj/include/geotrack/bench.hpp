#pragma once

#include "geotrack/dynamics.hpp"
#include "geotrack/ingest.hpp"
#include "geotrack/mesh.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace geotrack {

enum class MotionType { upper, lower, shift };
enum class Speed { slow, normal, fast };

MotionType parse_motion_type(const std::string& name);
Speed parse_speed(const std::string& name);
double speed_multiplier(Speed s);  // 0.5, 1, 2

/// Capsule-per-bone body seen by an orthographic depth camera looking down -z.
struct SyntheticSpec {
  MotionType motion = MotionType::upper;
  Speed speed = Speed::normal;
  std::size_t n_frames = 200;
  double pitch = 0.007;         // pixel spacing, meters
  std::uint64_t seed = 7;
  double noise_sigma = 0.0;     // Gaussian depth jitter, meters
  std::size_t period = 60;      // frames per motion cycle at normal speed
};

class SyntheticBody {
 public:
  explicit SyntheticBody(SyntheticSpec spec);

  const SyntheticSpec& spec() const { return spec_; }
  static JointState rest_pose();
  /// Capsule radius of every part of BodyModel::standard().
  static const std::vector<double>& part_radii();

  JointState skeleton(std::size_t frame) const;
  PointCloud render(const JointState& pose, std::size_t frame) const;
  PointCloud cloud(std::size_t frame) const { return render(skeleton(frame), frame); }
  SurfaceMesh mesh(std::size_t frame) const;
  double max_edge_length() const { return 2.0 * spec_.pitch; }

 private:
  SyntheticSpec spec_;
};

/// Distance from p to the union of the body capsules (<= 0 inside).
double capsule_union_distance(const JointState& pose, const Vec3& p);

struct GeneratedSequence {
  std::vector<PointCloud> frames;
  std::vector<JointState> skeletons;
};

GeneratedSequence generate_sequence(const SyntheticSpec& spec);

/// One normal-speed cycle of the motion, as motion-library reference data.
std::vector<JointState> reference_motion(MotionType motion, std::size_t period = 60);

struct Timing {
  std::vector<double> runs;  // seconds
  double median = 0.0;
  bool noisy = false;  // max/min >= 3
};

/// One warm-up call, then `runs` timed calls.
Timing time_operation(const std::function<void()>& op, std::size_t runs = 5);

struct MachineInfo {
  std::string cpu;
  unsigned threads = 0;
  std::string compiler;
  std::string build_type;
};
MachineInfo machine_info();

/// Pitch at which frame 0 of the synthetic body meshes to about 15.5k vertices.
inline constexpr double kBenchPitch = 0.00563;

struct BenchReport {
  double pitch = 0.0;
  std::size_t vertices = 0;
  std::size_t edges = 0;
  std::size_t anchors = 0;
  Timing mesh_build;      // triangulate one frame
  Timing anchor_feature;  // detect anchors and build the descriptor table
  MachineInfo machine;
};

BenchReport run_bench(double pitch = kBenchPitch, std::size_t runs = 5);
std::string bench_to_json(const BenchReport& report);

}  // namespace geotrack
