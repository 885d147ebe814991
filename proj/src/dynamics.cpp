#include "geotrack/dynamics.hpp"

#include "geotrack/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace geotrack {

int joint_index(std::string_view name) {
  for (std::size_t i = 0; i < kNumJoints; ++i)
    if (kJointNames[i] == name) return static_cast<int>(i);
  throw UsageError("unknown joint name '" + std::string(name) + "'");
}

bool JointState::finite() const {
  return std::all_of(joints.begin(), joints.end(), [](const Vec3& p) { return p.allFinite(); });
}

JointState JointState::translated(const Vec3& t) const {
  JointState out = *this;
  for (Vec3& p : out.joints) p += t;
  return out;
}

double joint_distance(const JointState& a, const JointState& b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < kNumJoints; ++i) sum += (a.joints[i] - b.joints[i]).norm();
  return sum;
}

MotionLibrary build_motion_library(const std::vector<JointState>& reference,
                                   std::span<const double> scales) {
  if (reference.empty()) throw UsageError("build_motion_library: empty reference");
  if (reference.size() < 2) throw UsageError("build_motion_library: reference needs >= 2 samples");
  std::vector<double> sorted(scales.begin(), scales.end());
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  if (std::find(sorted.begin(), sorted.end(), 1.0) == sorted.end())
    throw UsageError("build_motion_library: scales must include 1");

  const std::size_t n = reference.size();
  MotionLibrary lib;
  lib.source_length = n;
  for (double s : sorted) {
    if (!(s > 0.0) || !std::isfinite(s)) throw UsageError("build_motion_library: scales must be positive");
    const auto len = static_cast<std::size_t>(std::llround(s * static_cast<double>(n)));
    if (len < 2) throw UsageError("build_motion_library: scale too small for the reference length");
    std::vector<JointState> seq;
    if (s == 1.0) {
      seq = reference;
    } else {
      seq.resize(len);
      for (std::size_t i = 0; i < len; ++i) {
        const double u = static_cast<double>(i * (n - 1)) / static_cast<double>(len - 1);
        const auto lo = std::min(static_cast<std::size_t>(u), n - 2);
        const double f = u - static_cast<double>(lo);
        for (std::size_t k = 0; k < kNumJoints; ++k) {
          const Vec3& a = reference[lo].joints[k];
          const Vec3& b = reference[lo + 1].joints[k];
          seq[i].joints[k] = f == 0.0 ? a : (f == 1.0 ? b : Vec3(a + (b - a) * f));
        }
      }
    }
    lib.scales.push_back(s);
    lib.sequences.push_back(std::move(seq));
  }
  return lib;
}

namespace {

// states[i] aligns with seq[j - m + shift + i].
HistoryMatch best_alignment(const MotionLibrary& lib, std::span<const JointState> states,
                            std::size_t shift) {
  const std::size_t m = states.size();
  HistoryMatch best;
  best.cost = kInfinity;
  bool any = false;
  for (std::size_t s = 0; s < lib.sequences.size(); ++s) {
    const auto& seq = lib.sequences[s];
    // j - m + shift >= 0 and j + 1 < seq.size()
    const std::size_t j_min = m > shift ? m - shift : 0;
    for (std::size_t j = j_min; j + 1 < seq.size(); ++j) {
      double cost = 0.0;
      for (std::size_t i = 0; i < m && cost < best.cost; ++i)
        cost += joint_distance(states[i], seq[j - m + shift + i]);
      if (!any || cost < best.cost) {
        best = {s, lib.scales[s], j, cost};
        any = true;
      }
    }
  }
  if (!any) throw UsageError("match_history: every library sequence is shorter than the history window");
  return best;
}

}  // namespace

HistoryMatch match_history(const MotionLibrary& lib, std::span<const JointState> history) {
  if (history.empty()) throw UsageError("match_history: empty history");
  return best_alignment(lib, history, 0);
}

JointState predict_next(const MotionLibrary& lib, std::span<const JointState> history,
                        std::size_t window) {
  if (history.empty()) throw UsageError("predict_next: empty history");
  const JointState& current = history.back();
  const std::size_t k = std::min(window, history.size() - 1);
  const HistoryMatch match = k == 0 ? best_alignment(lib, history, 1)
                                    : match_history(lib, history.subspan(history.size() - 1 - k, k));
  const auto& seq = lib.sequences[match.scale_index];
  // Written so that replaying lib[j] yields lib[j+1] exactly.
  JointState out;
  for (std::size_t i = 0; i < kNumJoints; ++i) {
    const Vec3& from = seq[match.index].joints[i];
    const Vec3& to = seq[match.index + 1].joints[i];
    out.joints[i] = current.joints[i] == from ? to : Vec3(current.joints[i] + (to - from));
  }
  return out;
}

BodyModel BodyModel::standard() {
  BodyModel body;
  for (std::size_t j = 0; j < kNumJoints; ++j)
    if (kJointParents[j] >= 0) body.parts.push_back({kJointParents[j], static_cast<int>(j)});
  return body;
}

std::vector<int> BodyModel::parts_at_joint(int joint) const {
  std::vector<int> out;
  for (std::size_t p = 0; p < parts.size(); ++p)
    if (parts[p].parent_joint == joint || parts[p].child_joint == joint)
      out.push_back(static_cast<int>(p));
  return out;
}

namespace {

double segment_distance2(const Vec3& p, const Vec3& a, const Vec3& b) {
  const Vec3 ab = b - a;
  const double len2 = ab.squaredNorm();
  const double t = len2 > 0.0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
  return (p - (a + t * ab)).squaredNorm();
}

}  // namespace

int nearest_part(const BodyModel& body, const JointState& skeleton, const Vec3& p) {
  int best = -1;
  double best_d2 = kInfinity;
  for (std::size_t i = 0; i < body.parts.size(); ++i) {
    const BodyPart& part = body.parts[i];
    const double d2 = segment_distance2(p, skeleton.joints[part.parent_joint],
                                        skeleton.joints[part.child_joint]);
    if (d2 < best_d2) {
      best_d2 = d2;
      best = static_cast<int>(i);
    }
  }
  return best;
}

BodyModel BodyModel::from_skeleton(const SurfaceMesh& mesh, const JointState& skeleton) {
  BodyModel body = standard();
  body.part_of_vertex.resize(mesh.num_vertices());
  for (std::size_t v = 0; v < mesh.num_vertices(); ++v)
    body.part_of_vertex[v] = nearest_part(body, skeleton, mesh.vertex(static_cast<VertexId>(v)));
  return body;
}

PartMotion part_transform(const JointState& current, const JointState& predicted,
                          const BodyPart& part) {
  const Vec3& c0 = current.joints[part.parent_joint];
  const Vec3& p0 = predicted.joints[part.parent_joint];
  const Vec3 bone = current.joints[part.child_joint] - c0;
  const Vec3 next = predicted.joints[part.child_joint] - p0;
  PartMotion out;
  if (bone.norm() < 1e-9 || next.norm() < 1e-9) {
    out.degenerate = true;
    out.transform = RigidTransform::from_translation(p0 - c0);
    return out;
  }
  const Mat3 r = Eigen::Quaterniond::FromTwoVectors(bone, next).toRotationMatrix();
  out.transform = {r, p0 - r * c0};
  return out;
}

std::vector<Vec3> predict_vertex_locations(const SurfaceMesh& mesh, const BodyModel& body,
                                           const JointState& current, const JointState& predicted) {
  if (body.part_of_vertex.size() != mesh.num_vertices())
    throw UsageError("predict_vertex_locations: part assignment does not cover the mesh");
  std::vector<RigidTransform> motions;
  motions.reserve(body.parts.size());
  for (std::size_t p = 0; p < body.parts.size(); ++p) {
    PartMotion m = part_transform(current, predicted, body.parts[p]);
    if (m.degenerate)
      warn("predict_vertex_locations: degenerate bone for part " + std::to_string(p) +
           ", using translation only");
    motions.push_back(m.transform);
  }
  std::vector<Vec3> out(mesh.num_vertices());
  for (std::size_t v = 0; v < out.size(); ++v)
    out[v] = motions[static_cast<std::size_t>(body.part_of_vertex[v])](
        mesh.vertex(static_cast<VertexId>(v)));
  return out;
}

std::string joint_state_to_json_line(std::size_t frame, const JointState& state) {
  nlohmann::ordered_json joints = nlohmann::ordered_json::object();
  for (std::size_t i = 0; i < kNumJoints; ++i) {
    const Vec3& p = state.joints[i];
    joints[std::string(kJointNames[i])] = {p.x(), p.y(), p.z()};
  }
  nlohmann::ordered_json line;
  line["frame"] = frame;
  line["joints"] = std::move(joints);
  return line.dump();
}

JointState joint_state_from_json_line(const std::string& text, std::size_t* frame) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("joint state: ") + e.what());
  }
  if (!j.is_object() || !j.contains("joints") || !j["joints"].is_object())
    throw FormatError("joint state: missing \"joints\" object");
  JointState state;
  std::array<bool, kNumJoints> seen{};
  for (const auto& [name, value] : j["joints"].items()) {
    int idx;
    try {
      idx = joint_index(name);
    } catch (const UsageError&) {
      throw FormatError("joint state: unknown joint '" + name + "'");
    }
    if (!value.is_array() || value.size() != 3 || !value[0].is_number() ||
        !value[1].is_number() || !value[2].is_number())
      throw FormatError("joint state: joint '" + name + "' is not a 3-vector");
    state.joints[idx] = Vec3(value[0].get<double>(), value[1].get<double>(), value[2].get<double>());
    seen[idx] = true;
  }
  for (std::size_t i = 0; i < kNumJoints; ++i)
    if (!seen[i]) throw FormatError("joint state: missing joint '" + std::string(kJointNames[i]) + "'");
  if (frame) *frame = j.value("frame", std::size_t{0});
  return state;
}

std::vector<JointState> load_joint_states(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<JointState> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(joint_state_from_json_line(line));
    } catch (const FormatError& e) {
      throw FormatError(e.what(), line_no);
    }
  }
  return out;
}

void save_joint_states(const std::filesystem::path& path, std::span<const JointState> states) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (std::size_t i = 0; i < states.size(); ++i) out << joint_state_to_json_line(i, states[i]) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace geotrack
