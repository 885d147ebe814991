#include "support.hpp"

#include "geotrack/dynamics.hpp"

#include <doctest.h>

#include <filesystem>

using namespace geotrack;
using namespace gt_test;

namespace {

std::vector<JointState> random_walk(std::mt19937_64& rng, std::size_t n, double step) {
  std::vector<JointState> seq{random_state(rng)};
  std::uniform_real_distribution<double> u(-step, step);
  for (std::size_t i = 1; i < n; ++i) {
    JointState s = seq.back();
    for (auto& p : s.joints) p += Vec3(u(rng), u(rng), u(rng));
    seq.push_back(s);
  }
  return seq;
}

JointState uniform(const Vec3& p) {
  JointState s;
  s.joints.fill(p);
  return s;
}

// Brute-force argmin over (scale, j) with the documented tie order.
HistoryMatch scan(const MotionLibrary& lib, const std::vector<JointState>& h) {
  HistoryMatch best;
  best.cost = kInfinity;
  const std::size_t k = h.size();
  for (std::size_t s = 0; s < lib.sequences.size(); ++s)
    for (std::size_t j = k; j + 1 < lib.sequences[s].size(); ++j) {
      double cost = 0;
      for (std::size_t v = 1; v <= k; ++v) cost += joint_distance(h[k - v], lib.sequences[s][j - v]);
      if (cost < best.cost) best = {s, lib.scales[s], j, cost};
    }
  return best;
}

}  // namespace

TEST_CASE("joint names") {
  CHECK(joint_index("head") == 0);
  CHECK(joint_index("foot_right") == 20);
  CHECK_THROWS_AS(joint_index("tail"), UsageError);
  CHECK(kJointParents[joint_index(Joint::spine_base)] == -1);
}

TEST_CASE("library at scale one copies the reference") {
  std::mt19937_64 rng(1);
  const auto ref = random_walk(rng, 20, 0.01);
  const MotionLibrary lib = build_motion_library(ref);
  CHECK(lib.scales == std::vector<double>{0.5, 1.0, 2.0});
  CHECK(lib.sequences[1] == ref);
  CHECK(lib.sequences[0].size() == 10);
  CHECK(lib.sequences[2].size() == 40);
  CHECK_THROWS_AS(build_motion_library({}), UsageError);
}

TEST_CASE("double speed on a straight line inserts midpoints") {
  std::vector<JointState> ref;
  for (int i = 0; i < 10; ++i) ref.push_back(uniform(Vec3(0.1 * i, -0.05 * i, 0.02 * i)));
  const double scale[] = {1.0, 2.0};
  const MotionLibrary lib = build_motion_library(ref, scale);
  const auto& s2 = lib.sequences[1];
  REQUIRE(s2.size() == 20);
  for (std::size_t i = 1; i + 1 < s2.size(); ++i)
    for (std::size_t k = 0; k < kNumJoints; ++k)
      CHECK((s2[i][k] - 0.5 * (s2[i - 1][k] + s2[i + 1][k])).norm() < 1e-12);
}

TEST_CASE("triple resampling of a quadratic path") {
  std::vector<JointState> ref;
  for (int i = 0; i < 4; ++i) {
    JointState s;
    for (std::size_t k = 0; k < kNumJoints; ++k) s[k] = Vec3(i, i * i, 0.1 * k);
    ref.push_back(s);
  }
  const double scale[] = {1.0, 3.0};
  const auto& seq = build_motion_library(ref, scale).sequences[1];
  REQUIRE(seq.size() == 12);
  for (int i = 0; i < 12; ++i) {
    const double u = 3.0 * i / 11.0;
    const int lo = std::min(static_cast<int>(std::floor(u)), 2);
    const double f = u - lo;
    for (std::size_t k = 0; k < kNumJoints; ++k) {
      const Vec3 expect = ref[lo][k] * (1 - f) + ref[lo + 1][k] * f;
      CHECK((seq[i][k] - expect).norm() < 1e-12);
    }
  }
}

TEST_CASE("match history") {
  std::mt19937_64 rng(2);
  const auto ref = random_walk(rng, 30, 0.02);
  const MotionLibrary lib = build_motion_library(ref);
  for (std::size_t j = 3; j + 1 < 30; ++j) {
    const std::vector<JointState> h(ref.begin() + (j - 3), ref.begin() + j);
    const HistoryMatch m = match_history(lib, h);
    CHECK(m.scale == 1.0);
    CHECK(m.index == j);
    CHECK(m.cost == 0.0);
  }

  CHECK_THROWS_AS(match_history(lib, std::vector<JointState>(70, ref[0])), UsageError);
}

TEST_CASE("match history under jitter") {
  // Joints move 5 cm per step, so any misaligned window costs far more than the jitter.
  std::vector<JointState> ref;
  for (int i = 0; i < 25; ++i) ref.push_back(uniform(Vec3(0.05 * i, std::sin(0.3 * i), 0)));
  const MotionLibrary lib = build_motion_library(ref);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-0.001, 0.001);
  for (std::size_t j = 3; j + 1 < 25; j += 2) {
    std::vector<JointState> h(ref.begin() + (j - 3), ref.begin() + j);
    for (auto& s : h)
      for (auto& p : s.joints) p += Vec3(u(rng), u(rng), u(rng));
    const HistoryMatch m = match_history(lib, h);
    const HistoryMatch oracle = scan(lib, h);
    CHECK(m.scale_index == oracle.scale_index);
    CHECK(m.index == oracle.index);
    CHECK(m.scale == 1.0);
    CHECK(m.index == j);
  }
}

TEST_CASE("match history tie prefers the smaller scale") {
  MotionLibrary lib;
  std::mt19937_64 rng(4);
  const auto seq = random_walk(rng, 12, 0.01);
  lib.scales = {1.0, 2.0};
  lib.sequences = {seq, seq};
  lib.source_length = 12;
  const std::vector<JointState> h(seq.begin() + 2, seq.begin() + 5);
  const HistoryMatch m = match_history(lib, h);
  CHECK(m.scale == 1.0);
  CHECK(m.index == 5);
}

TEST_CASE("prediction") {
  const MotionLibrary still = build_motion_library(std::vector<JointState>(10, uniform(Vec3(1, 2, 3))));
  std::mt19937_64 rng(5);
  const JointState cur = random_state(rng);
  const std::vector<JointState> h1{random_state(rng), random_state(rng), cur};
  CHECK(predict_next(still, h1) == cur);

  const auto ref = random_walk(rng, 40, 0.03);
  const MotionLibrary lib = build_motion_library(ref);
  for (std::size_t t = 3; t + 1 < 40; ++t) {
    const std::vector<JointState> h(ref.begin() + (t - 3), ref.begin() + t + 1);
    CHECK(predict_next(lib, h) == ref[t + 1]);
  }

  std::vector<JointState> line;
  const Vec3 vel(0.01, -0.02, 0.005);
  for (int i = 0; i < 20; ++i) line.push_back(uniform(vel * i));
  const MotionLibrary lin = build_motion_library(line);
  const std::vector<JointState> on_track(line.begin() + 4, line.begin() + 8);
  const JointState next = predict_next(lin, on_track);
  for (std::size_t k = 0; k < kNumJoints; ++k) CHECK((next[k] - vel * 8).norm() < 1e-12);

  const std::vector<JointState> single{ref[6]};
  CHECK(predict_next(lib, single) == ref[7]);
}

namespace {

// Two parts: 0 -> 1 along x, then 1 -> 2 continuing along x.
struct TwoPart {
  BodyModel body;
  JointState skel;
  SurfaceMesh mesh;
  TwoPart() {
    body.parts = {{0, 1}, {1, 2}};
    for (std::size_t k = 0; k < kNumJoints; ++k) skel[k] = Vec3(0, 0, -5.0 - k);
    skel[0] = Vec3(0, 0, 0);
    skel[1] = Vec3(1, 0, 0);
    skel[2] = Vec3(2, 0, 0);
    mesh = SurfaceMesh::from_edges({Vec3(0.3, 0.1, 0), Vec3(0.7, -0.1, 0.2), Vec3(1.5, 0, 0.2),
                                    Vec3(1.8, 0.1, -0.1)},
                                   {{0, 1}, {1, 2}, {2, 3}});
    body.part_of_vertex = {0, 0, 1, 1};
  }
};

}  // namespace

TEST_CASE("vertex prediction") {
  const TwoPart tp;
  const auto same = predict_vertex_locations(tp.mesh, tp.body, tp.skel, tp.skel);
  for (VertexId v = 0; v < 4; ++v) CHECK((same[v] - tp.mesh.vertex(v)).norm() < 1e-12);

  const Vec3 shift(0.01, 0, 0);
  const auto moved = predict_vertex_locations(tp.mesh, tp.body, tp.skel, tp.skel.translated(shift));
  for (VertexId v = 0; v < 4; ++v) CHECK((moved[v] - tp.mesh.vertex(v) - shift).norm() < 1e-12);

  JointState bent = tp.skel;
  bent[2] = Vec3(1, 1, 0);
  const auto out = predict_vertex_locations(tp.mesh, tp.body, tp.skel, bent);
  const Mat3 rz = axis_angle(Vec3::UnitZ(), M_PI / 2);
  for (VertexId v = 0; v < 2; ++v) CHECK((out[v] - tp.mesh.vertex(v)).norm() < 1e-9);
  for (VertexId v = 2; v < 4; ++v) {
    const Vec3 expect = tp.skel[1] + rz * (tp.mesh.vertex(v) - tp.skel[1]);
    CHECK((out[v] - expect).norm() < 1e-9);
  }
  CHECK((out[2] - Vec3(1, 0.5, 0.2)).norm() < 1e-9);

  JointState collapsed = tp.skel;
  collapsed[2] = collapsed[1];
  WarningLog log;
  const auto deg = predict_vertex_locations(tp.mesh, tp.body, tp.skel, collapsed);
  CHECK_FALSE(log.messages.empty());
  CHECK((deg[2] - tp.mesh.vertex(2)).norm() < 1e-12);
}

TEST_CASE("part assignment by nearest bone") {
  const TwoPart tp;
  const BodyModel fresh = [&] {
    BodyModel b = tp.body;
    b.part_of_vertex.clear();
    return b;
  }();
  for (VertexId v = 0; v < 4; ++v)
    CHECK(nearest_part(fresh, tp.skel, tp.mesh.vertex(v)) == tp.body.part_of_vertex[v]);
  const BodyModel std_body = BodyModel::standard();
  CHECK(std_body.num_parts() == kNumJoints - 1);
  CHECK(std_body.parts_at_joint(joint_index(Joint::spine_top)).size() == 4);
}

TEST_CASE("joint state json lines") {
  std::mt19937_64 rng(6);
  const JointState s = random_state(rng);
  std::size_t frame = 0;
  const JointState back = joint_state_from_json_line(joint_state_to_json_line(42, s), &frame);
  CHECK(back == s);
  CHECK(frame == 42);
  CHECK_THROWS_AS(joint_state_from_json_line("{\"joints\":{\"head\":[0,0,0]}}"), FormatError);
  CHECK_THROWS_AS(joint_state_from_json_line("not json"), FormatError);

  const auto path = std::filesystem::temp_directory_path() / "geotrack_joints.jsonl";
  const std::vector<JointState> seq{s, random_state(rng), random_state(rng)};
  save_joint_states(path, seq);
  CHECK(load_joint_states(path) == seq);
  std::filesystem::remove(path);
}
