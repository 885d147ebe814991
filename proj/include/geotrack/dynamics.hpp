#pragma once

#include "geotrack/geometry.hpp"
#include "geotrack/mesh.hpp"

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace geotrack {

inline constexpr std::size_t kNumJoints = 21;

// Hand tips and thumbs are not modeled.
enum class Joint : int {
  head,
  neck,
  spine_top,
  spine_mid,
  spine_base,
  shoulder_left,
  elbow_left,
  wrist_left,
  hand_left,
  shoulder_right,
  elbow_right,
  wrist_right,
  hand_right,
  hip_left,
  knee_left,
  ankle_left,
  foot_left,
  hip_right,
  knee_right,
  ankle_right,
  foot_right,
};

inline constexpr std::array<std::string_view, kNumJoints> kJointNames = {
    "head",       "neck",        "spine_top",   "spine_mid",   "spine_base",  "shoulder_left",
    "elbow_left", "wrist_left",  "hand_left",   "shoulder_right", "elbow_right", "wrist_right",
    "hand_right", "hip_left",    "knee_left",   "ankle_left",  "foot_left",   "hip_right",
    "knee_right", "ankle_right", "foot_right"};

/// Parent joint of each joint; spine_base is the root (-1).
inline constexpr std::array<int, kNumJoints> kJointParents = {
    1, 2, 3, 4, -1, 2, 5, 6, 7, 2, 9, 10, 11, 4, 13, 14, 15, 4, 17, 18, 19};

constexpr int joint_index(Joint j) { return static_cast<int>(j); }
int joint_index(std::string_view name);  // throws UsageError for unknown names

/// The 21 joint positions of the articulated model (meters).
struct JointState {
  std::array<Vec3, kNumJoints> joints{};

  Vec3& operator[](Joint j) { return joints[static_cast<std::size_t>(j)]; }
  const Vec3& operator[](Joint j) const { return joints[static_cast<std::size_t>(j)]; }
  Vec3& operator[](std::size_t i) { return joints[i]; }
  const Vec3& operator[](std::size_t i) const { return joints[i]; }

  bool finite() const;
  JointState translated(const Vec3& t) const;
  friend bool operator==(const JointState& a, const JointState& b) { return a.joints == b.joints; }
};

/// Sum over joints of the Euclidean distance between corresponding joints.
double joint_distance(const JointState& a, const JointState& b);

/// Reference motion resampled at several speeds. sequences[i] belongs to scales[i];
/// scales are ascending.
struct MotionLibrary {
  std::vector<double> scales;
  std::vector<std::vector<JointState>> sequences;
  std::size_t source_length = 0;
};

inline constexpr std::array<double, 3> kDefaultScales = {0.5, 1.0, 2.0};

/// Piecewise-linear resampling of every joint trajectory to round(s * N_D)
/// uniformly spaced samples with both endpoints kept. Scale 1 is an exact copy.
MotionLibrary build_motion_library(const std::vector<JointState>& reference,
                                   std::span<const double> scales = kDefaultScales);

struct HistoryMatch {
  std::size_t scale_index = 0;
  double scale = 1.0;
  std::size_t index = 0;  // j: history[k - v] aligns with sequence[j - v]
  double cost = 0.0;
};

/// argmin over (s, j) of sum_{v=1..k} ed(history[k-v], lib_s[j-v]) with
/// j - k >= 0 and j + 1 inside the sequence. Ties go to the smallest scale,
/// then the smallest j. `history` is oldest first.
HistoryMatch match_history(const MotionLibrary& lib, std::span<const JointState> history);

inline constexpr std::size_t kDefaultHistoryWindow = 3;

/// history = [theta^{t-k}, ..., theta^t] (oldest first, current last). The
/// last min(window, n-1) states before the current one are matched; the
/// prediction is theta^t + lib[j+1] - lib[j]. With a single state the current
/// state itself is matched against lib[j].
JointState predict_next(const MotionLibrary& lib, std::span<const JointState> history,
                        std::size_t window = kDefaultHistoryWindow);

struct BodyPart {
  int parent_joint = 0;
  int child_joint = 0;
};

/// Joint hierarchy, one rigid part per bone, and a part id per mesh vertex.
struct BodyModel {
  std::array<int, kNumJoints> parent = kJointParents;
  std::vector<BodyPart> parts;
  std::vector<int> part_of_vertex;

  /// Standard hierarchy and parts, no vertex assignment.
  static BodyModel standard();
  /// Standard parts plus nearest-bone-segment assignment of every vertex.
  static BodyModel from_skeleton(const SurfaceMesh& mesh, const JointState& skeleton);

  std::size_t num_parts() const { return parts.size(); }
  /// Parts that have `joint` as an endpoint.
  std::vector<int> parts_at_joint(int joint) const;
};

/// Index of the bone segment closest to `p` (ties to the lowest part index).
int nearest_part(const BodyModel& body, const JointState& skeleton, const Vec3& p);

struct PartMotion {
  RigidTransform transform;
  bool degenerate = false;  // bone too short; translation only
};

/// Rigid motion taking a part's bone in `current` onto the same bone in
/// `predicted`: parent joint displacement plus the minimal rotation between the
/// bone directions (no roll about the bone).
PartMotion part_transform(const JointState& current, const JointState& predicted,
                          const BodyPart& part);

std::vector<Vec3> predict_vertex_locations(const SurfaceMesh& mesh, const BodyModel& body,
                                           const JointState& current, const JointState& predicted);

/// JSON lines: {"frame": n, "joints": {"head": [x,y,z], ...}}
std::string joint_state_to_json_line(std::size_t frame, const JointState& state);
JointState joint_state_from_json_line(const std::string& line, std::size_t* frame = nullptr);
std::vector<JointState> load_joint_states(const std::filesystem::path& path);
void save_joint_states(const std::filesystem::path& path, std::span<const JointState> states);

}  // namespace geotrack
