#include "support.hpp"

#include "geotrack/bench.hpp"
#include "geotrack/mht.hpp"

#include <doctest.h>

#include <algorithm>
#include <functional>
#include <set>

using namespace geotrack;
using namespace gt_test;

namespace {

// Jittered grid so that no two vertices share an anchor descriptor.
SurfaceMesh jittered_grid(int w, int h, std::uint64_t seed) {
  const SurfaceMesh g = grid_mesh(w, h, 0.05);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.01, 0.01);
  std::vector<Vec3> pts(g.vertices().begin(), g.vertices().end());
  for (Vec3& p : pts) p += Vec3(u(rng), u(rng), u(rng));
  return g.with_positions(pts);
}

AnchorSet labeled(const SurfaceMesh& m, const std::vector<VertexId>& ids) {
  AnchorSet a;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    a.vertices.push_back(ids[i]);
    a.labels.push_back(static_cast<int>(i));
    a.positions.push_back(m.vertex(ids[i]));
  }
  return a;
}

// Gate by linear scan: per subset the lowest-id nearest target within the gate,
// each candidate kept under its first subset.
std::vector<Hypothesis> scan_gate(VertexId v, const FrameData& src, const FrameData& dst,
                                  const HypothesisSpace& space, const MatchOptions& opt) {
  std::vector<Hypothesis> out;
  for (std::size_t m = 0; m < space.size(); ++m) {
    std::vector<double> a;
    std::vector<std::size_t> dslots;
    bool ok = true;
    for (int label : space.subsets[m]) {
      const int ss = src.table().slot_of(label), ds = dst.table().slot_of(label);
      if (ss < 0 || ds < 0) {
        ok = false;
        break;
      }
      a.push_back(src.table().value(v, static_cast<std::size_t>(ss)));
      dslots.push_back(static_cast<std::size_t>(ds));
    }
    if (!ok || std::all_of(a.begin(), a.end(), [](double x) { return std::isinf(x); })) continue;
    VertexId best = -1;
    double best_d = kInfinity;
    for (VertexId t = 0; t < static_cast<VertexId>(dst.mesh().num_vertices()); ++t) {
      std::vector<double> b;
      for (std::size_t s : dslots) b.push_back(dst.table().value(t, s));
      const double d = descriptor_distance(a, b);
      if (d < best_d) best_d = d, best = t;
    }
    if (best < 0 || best_d > gate_threshold(opt, src.mesh().vertex(v))) continue;
    if (std::none_of(out.begin(), out.end(), [&](const Hypothesis& h) { return h.candidate == best; }))
      out.push_back({best, m, best_d});
  }
  return out;
}

using Path = std::vector<std::pair<VertexId, int>>;

std::set<Path> tree_paths(const TrackTree& tree) {
  std::set<Path> out;
  for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
    if (tree.nodes[i].removed) continue;
    Path p;
    for (int n : tree.branch(static_cast<int>(i))) p.emplace_back(tree.nodes[n].vertex, tree.nodes[n].subset);
    out.insert(p);
  }
  return out;
}

TrackTree random_scored_tree(std::mt19937_64& rng, std::size_t roots, int depth) {
  std::vector<VertexId> ids(roots);
  std::iota(ids.begin(), ids.end(), 0);
  TrackTree tree = TrackTree::from_roots(ids, depth);
  std::uniform_int_distribution<int> kids(0, 3);
  std::uniform_real_distribution<double> cost(0.0, 0.1);
  for (int d = 0; d < depth; ++d) {
    const std::size_t n = tree.nodes.size();
    for (std::size_t i = 0; i < n; ++i) {
      if (tree.nodes[i].depth != d || tree.nodes[i].dormant) continue;
      const int k = kids(rng);
      if (k == 0) {
        tree.nodes[i].dormant = true;
        continue;
      }
      for (int c = 0; c < k; ++c) {
        TrackNode child = tree.nodes[i];
        child.depth = d + 1;
        child.vertex = static_cast<VertexId>(100 + tree.nodes.size());
        child.subset = c;
        child.parent = static_cast<int>(i);
        child.score = tree.nodes[i].score + cost(rng);
        child.dormant = false;
        tree.nodes.push_back(child);
      }
    }
    tree.depth = d + 1;
  }
  return tree;
}

}  // namespace

TEST_CASE("hypothesis space") {
  const HypothesisSpace s = HypothesisSpace::make({7, 3, 5, 9, 1}, 3);
  CHECK(s.labels == std::vector<int>{1, 3, 5, 7, 9});
  CHECK(s.size() == 10);
  CHECK(s.subsets.front() == std::vector<int>{1, 3, 5});
  CHECK(s.subsets.back() == std::vector<int>{5, 7, 9});
  CHECK_THROWS_AS(HypothesisSpace::make({1, 1, 2}, 2), UsageError);
  CHECK_THROWS_AS(HypothesisSpace::make({1, 2}, 3), UsageError);
}

TEST_CASE("gate on identical frames") {
  const SurfaceMesh m = jittered_grid(10, 10, 1);
  const AnchorSet a = labeled(m, {0, 9, 45, 90, 99});
  const FrameData f(m, a);
  const HypothesisSpace space = HypothesisSpace::make(a.labels, 3);
  for (VertexId v = 0; v < 100; ++v) {
    const auto h = gate_hypotheses(v, f, f, space, {});
    REQUIRE(h.size() == 1);
    CHECK(h[0].candidate == v);
    CHECK(h[0].subset == 0);
    CHECK(h[0].distance == 0.0);
  }
}

TEST_CASE("gate matches a linear scan and the binomial bound") {
  const SurfaceMesh m0 = jittered_grid(8, 6, 2), m1 = jittered_grid(8, 6, 3);
  const AnchorSet a0 = labeled(m0, {0, 7, 20, 40, 47}), a1 = labeled(m1, {0, 7, 20, 40, 47});
  const FrameData f0(m0, a0), f1(m1, a1);
  const HypothesisSpace space = HypothesisSpace::make(a0.labels, 3);
  MatchOptions opt;
  opt.e_max = 0.05;
  for (VertexId v = 0; v < 48; ++v) {
    const auto h = gate_hypotheses(v, f0, f1, space, opt);
    CHECK(h.size() <= binomial(5, 3));
    const auto oracle = scan_gate(v, f0, f1, space, opt);
    REQUIRE(h.size() == oracle.size());
    for (std::size_t i = 0; i < h.size(); ++i) {
      CHECK(h[i].candidate == oracle[i].candidate);
      CHECK(h[i].subset == oracle[i].subset);
    }
  }
  MatchOptions closed;
  closed.e_max = 0.0;
  for (VertexId v = 0; v < 48; ++v) CHECK(gate_hypotheses(v, f0, f1, space, closed).empty());
}

TEST_CASE("tree growth bounds and dormancy") {
  const SurfaceMesh m0 = jittered_grid(6, 6, 4), m1 = jittered_grid(6, 6, 5);
  const AnchorSet a0 = labeled(m0, {0, 5, 30, 35}), a1 = labeled(m1, {0, 5, 30, 35});
  const FrameData f0(m0, a0), f1(m1, a1);
  const HypothesisSpace space = HypothesisSpace::make(a0.labels, 3);
  MatchOptions opt;
  opt.e_max = 0.2;
  const FrameData* frames[] = {&f0, &f1, &f0, &f1};

  TrackTree tree = TrackTree::from_roots({14}, 3);
  for (int d = 0; d < 3; ++d) grow_tree(tree, *frames[d], *frames[d + 1], space, opt);
  CHECK(tree.leaves().size() <= 64);  // 4 subsets, depth 3
  CHECK_THROWS_AS(grow_tree(tree, f0, f1, space, opt), UsageError);

  MatchOptions closed;
  closed.e_max = 0.0;
  TrackTree dead = TrackTree::from_roots({14}, 3);
  grow_tree(dead, f0, f1, space, closed, {}, 0.05);
  CHECK(dead.leaves() == std::vector<int>{0});
  CHECK(dead.nodes[0].dormant);
  CHECK(dead.nodes[0].score == 0.05);
}

TEST_CASE("two candidates per step give at most eight leaves") {
  // Two labels taken one at a time: two subsets, so at most two children per node.
  const SurfaceMesh m0 = jittered_grid(5, 5, 6), m1 = jittered_grid(5, 5, 7);
  const AnchorSet a0 = labeled(m0, {0, 24}), a1 = labeled(m1, {0, 24});
  const FrameData f0(m0, a0), f1(m1, a1);
  const HypothesisSpace space = HypothesisSpace::make(a0.labels, 1);
  REQUIRE(space.size() == 2);
  MatchOptions opt;
  opt.e_max = 0.2;
  TrackTree tree = TrackTree::from_roots({12}, 3);
  const FrameData* frames[] = {&f0, &f1, &f0, &f1};
  for (int d = 0; d < 3; ++d) grow_tree(tree, *frames[d], *frames[d + 1], space, opt);
  CHECK(tree.leaves().size() <= 8);
  CHECK(tree.leaves().size() >= 1);
}

TEST_CASE("full growth equals chain enumeration") {
  const SurfaceMesh m[4] = {jittered_grid(5, 4, 10), jittered_grid(5, 4, 11), jittered_grid(5, 4, 12),
                            jittered_grid(5, 4, 13)};
  std::vector<FrameData> frames;
  for (const auto& mesh : m) frames.emplace_back(mesh, labeled(mesh, {0, 4, 15, 19}));
  const HypothesisSpace space = HypothesisSpace::make({0, 1, 2, 3}, 2);
  MatchOptions opt;
  opt.e_max = 0.15;
  TrackTree tree = TrackTree::from_roots({0, 7, 12}, 3);
  for (int d = 0; d < 3; ++d) grow_tree(tree, frames[d], frames[d + 1], space, opt);

  std::set<Path> expected;
  std::function<void(Path, int)> walk = [&](Path p, int d) {
    expected.insert(p);
    if (d == 3) return;
    for (const Hypothesis& h : scan_gate(p.back().first, frames[d], frames[d + 1], space, opt)) {
      Path q = p;
      q.emplace_back(h.candidate, static_cast<int>(h.subset));
      walk(q, d + 1);
    }
  };
  for (VertexId r : tree.roots) walk({{r, -1}}, 0);
  CHECK(tree_paths(tree) == expected);
}

TEST_CASE("branch score") {
  const std::vector<Vec3> pos{Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(2, 0, 0)};
  CHECK(score_branch(pos, pos) == 0.0);
  const std::vector<Vec3> one{Vec3(0.02, 0, 0)}, origin{Vec3(0, 0, 0)};
  CHECK(score_branch(one, origin) == doctest::Approx(0.02).epsilon(1e-15));
  const std::vector<Vec3> off{Vec3(0.01, 0, 0), Vec3(1, 0.02, 0), Vec3(2, 0, 0.03)};
  CHECK(score_branch(off, pos) == doctest::Approx(0.06).epsilon(1e-14));
  CHECK_THROWS_AS(score_branch(pos, one), UsageError);
}

TEST_CASE("prune") {
  std::mt19937_64 rng(20);
  TrackTree small = random_scored_tree(rng, 2, 1);
  const TrackTree copy = small;
  CHECK(prune(small, 1000) == 0);
  CHECK(tree_paths(small) == tree_paths(copy));

  TrackTree ten = TrackTree::from_roots({0}, 1);
  for (int i = 0; i < 10; ++i) {
    TrackNode c;
    c.depth = 1;
    c.vertex = i + 1;
    c.subset = i;
    c.parent = 0;
    c.score = 0.1 * ((i * 7) % 10);
    ten.nodes.push_back(c);
  }
  ten.depth = 1;
  CHECK(prune(ten, 5) == 5);
  std::vector<double> scores;
  for (int leaf : ten.leaves()) scores.push_back(ten.nodes[leaf].score);
  std::sort(scores.begin(), scores.end());
  CHECK(scores.size() == 5);
  CHECK(scores.back() == doctest::Approx(0.4));

  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t roots = std::uniform_int_distribution<std::size_t>(1, 4)(rng);
    TrackTree t = random_scored_tree(rng, roots, 3);
    const auto leaves = t.leaves();
    const std::size_t budget = std::uniform_int_distribution<std::size_t>(roots, roots + 10)(rng);

    // sort-and-truncate oracle with the best leaf of each root reserved
    std::vector<int> best(roots, -1);
    for (int l : leaves) {
      const int r = t.nodes[l].root;
      if (best[r] < 0 || t.nodes[l].score < t.nodes[best[r]].score) best[r] = l;
    }
    std::set<int> survivors(best.begin(), best.end());
    std::vector<int> rest;
    for (int l : leaves)
      if (!survivors.count(l)) rest.push_back(l);
    std::sort(rest.begin(), rest.end(), [&](int a, int b) {
      return t.nodes[a].score != t.nodes[b].score ? t.nodes[a].score < t.nodes[b].score : a < b;
    });
    const std::size_t room = leaves.size() <= budget ? rest.size() : budget - survivors.size();
    for (std::size_t i = 0; i < std::min(room, rest.size()); ++i) survivors.insert(rest[i]);

    prune(t, budget);
    const auto after = t.leaves();
    CHECK(std::set<int>(after.begin(), after.end()) == survivors);
    CHECK(after.size() <= std::max(budget, leaves.size() <= budget ? leaves.size() : budget));
  }
}

TEST_CASE("best hypotheses") {
  TrackTree t = TrackTree::from_roots({5}, 1);
  TrackNode a;
  a.depth = 1, a.vertex = 8, a.subset = 2, a.parent = 0, a.score = 0.4;
  TrackNode b = a;
  b.vertex = 9, b.subset = 3, b.score = 0.1;
  t.nodes.push_back(a);
  t.nodes.push_back(b);
  t.depth = 1;
  auto choice = best_hypotheses(t);
  CHECK(choice[0].next_vertex == 9);
  CHECK(best_global_hypothesis(t).pairs.at(5) == 9);

  t.nodes[2].score = 0.4;  // tie goes to the smaller subset
  CHECK(best_hypotheses(t)[0].next_vertex == 8);
  CHECK(best_hypotheses(t, 0.3)[0].next_vertex == -1);
  CHECK(best_global_hypothesis(t, 0.3).unmatched_source.count(5) == 1);

  TrackTree single = TrackTree::from_roots({1, 2}, 1);
  TrackNode c;
  c.depth = 1, c.vertex = 4, c.subset = 0, c.parent = 0, c.root = 0;
  single.nodes.push_back(c);
  single.nodes[1].dormant = true;
  single.depth = 1;
  const Correspondence g = best_global_hypothesis(single);
  CHECK(g.pairs.at(1) == 4);
  CHECK(g.unmatched_source == std::set<VertexId>{2});

  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 100; ++trial) {
    const TrackTree r = random_scored_tree(rng, 3, 3);
    const auto got = best_hypotheses(r);
    for (std::size_t root = 0; root < 3; ++root) {
      double best = kInfinity;
      for (int l : r.leaves())
        if (r.nodes[l].root == static_cast<int>(root)) best = std::min(best, r.nodes[l].score);
      CHECK(got[root].score == best);
    }
  }
}

TEST_CASE("rigid fit and icp") {
  std::mt19937_64 rng(30);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  std::vector<Vec3> src(50);
  for (auto& p : src) p = Vec3(u(rng), u(rng), u(rng));

  const IcpResult same = icp(src, src, RigidTransform::identity());
  CHECK(same.transform.rotation.isApprox(Mat3::Identity(), 1e-12));
  CHECK(same.transform.translation.norm() < 1e-12);

  std::vector<Vec3> shifted;
  for (const auto& p : src) shifted.push_back(p + Vec3(0.05, 0, 0));
  const IcpResult t = icp(src, shifted, RigidTransform::identity());
  CHECK((t.transform.translation - Vec3(0.05, 0, 0)).norm() < 1e-9);

  const Mat3 rz = axis_angle(Vec3::UnitZ(), 20.0 * M_PI / 180.0);
  std::vector<Vec3> turned;
  for (const auto& p : src) turned.push_back(rz * p);
  const IcpResult r = icp(src, turned, RigidTransform::identity());
  CHECK(rotation_angle_between(r.transform.rotation, rz) < 1e-6);

  const std::vector<Vec3> line{Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(2, 0, 0)};
  std::vector<Vec3> line2;
  for (const auto& p : line) line2.push_back(p + Vec3(0, 1, 0));
  const FitResult deg = fit_rigid(line, line2);
  CHECK(deg.degenerate);
  CHECK((deg.transform.translation - Vec3(0, 1, 0)).norm() < 1e-12);

  const std::vector<Vec3> two{Vec3(0, 0, 0), Vec3(1, 0, 0)};
  CHECK(icp(two, two, RigidTransform::from_translation(Vec3(1, 1, 1))).used_init);
}

TEST_CASE("part transforms and joint update") {
  const SurfaceMesh g = jittered_grid(6, 6, 40);
  BodyModel body;
  body.parts = {{0, 1}, {1, 2}};
  for (VertexId v = 0; v < 36; ++v) body.part_of_vertex.push_back(v < 18 ? 0 : 1);
  Correspondence id;
  for (VertexId v = 0; v < 36; ++v) id.pairs[v] = v;
  const std::vector<RigidTransform> init(2);

  const auto same = estimate_part_transforms(id, g, g, body, init);
  for (const auto& t : same) CHECK(t.translation.norm() < 1e-12);

  const SurfaceMesh moved = g.transformed(RigidTransform::from_translation(Vec3(0.05, 0, 0)));
  for (const auto& t : estimate_part_transforms(id, g, moved, body, init))
    CHECK((t.translation - Vec3(0.05, 0, 0)).norm() < 1e-9);

  JointState prev;
  for (std::size_t k = 0; k < kNumJoints; ++k) prev[k] = Vec3(0.1 * k, 0, 0);
  const std::vector<RigidTransform> ident(2);
  CHECK(update_joints(ident, prev, body) == prev);

  const Vec3 shift(0.3, -0.1, 0.2);
  const std::vector<RigidTransform> both(2, RigidTransform::from_translation(shift));
  const JointState up = update_joints(both, prev, body);
  for (int j = 0; j < 3; ++j) CHECK((up[j] - prev[j] - shift).norm() < 1e-12);

  JointState at;
  at[1] = Vec3(0.5, 0.5, 0);
  const std::vector<RigidTransform> apart{RigidTransform::from_translation(Vec3(-0.5, -0.5, 0)),
                                          RigidTransform::from_translation(Vec3(-0.48, -0.5, 0))};
  CHECK((update_joints(apart, at, body)[1] - Vec3(0.01, 0, 0)).norm() < 1e-12);
}

TEST_CASE("tracker config json") {
  TrackerConfig c;
  c.e_max = 0.07;
  c.look_ahead = 2;
  const TrackerConfig back = tracker_config_from_json(tracker_config_to_json(c));
  CHECK(back.e_max == 0.07);
  CHECK(back.look_ahead == 2);
  CHECK_THROWS_AS(tracker_config_from_json("{\"bogus\":1}"), FormatError);
}

TEST_CASE("tracking a static body") {
  SyntheticSpec spec;
  spec.n_frames = 1;
  spec.pitch = 0.012;
  const SyntheticBody body(spec);
  const SurfaceMesh m = body.mesh(0);
  const std::vector<SurfaceMesh> frames(10, m);
  const MotionLibrary lib = build_motion_library(reference_motion(spec.motion));
  const JointState rest = SyntheticBody::rest_pose();
  const TrackedSequence out = track_sequence(frames, rest, lib);
  REQUIRE(out.joints.size() == 10);
  for (const auto& j : out.joints)
    for (std::size_t k = 0; k < kNumJoints; ++k) CHECK((j[k] - rest[k]).norm() < 1e-6);
}

TEST_CASE("tracking a rigid translation") {
  SyntheticSpec spec;
  spec.n_frames = 1;
  spec.pitch = 0.012;
  const SyntheticBody body(spec);
  const SurfaceMesh m = body.mesh(0);
  const Vec3 step(0.004, 0.002, 0);
  std::vector<SurfaceMesh> frames;
  for (int t = 0; t < 10; ++t) frames.push_back(m.transformed(RigidTransform::from_translation(step * t)));
  const MotionLibrary lib = build_motion_library(reference_motion(spec.motion));
  const JointState rest = SyntheticBody::rest_pose();
  const TrackedSequence out = track_sequence(frames, rest, lib);
  for (int t = 0; t < 10; ++t)
    for (std::size_t k = 0; k < kNumJoints; ++k) CHECK((out.joints[t][k] - rest[k] - step * t).norm() < 1e-4);
}

TEST_CASE("tracking an articulated sequence") {
  SyntheticSpec spec;
  spec.n_frames = 30;
  const SyntheticBody body(spec);
  std::vector<SurfaceMesh> frames;
  std::vector<JointState> truth;
  for (std::size_t t = 0; t < spec.n_frames; ++t) {
    frames.push_back(body.mesh(t));
    truth.push_back(body.skeleton(t));
  }
  const MotionLibrary lib = build_motion_library(reference_motion(spec.motion));
  const TrackedSequence out = track_sequence(frames, truth[0], lib);
  double sum = 0;
  for (std::size_t t = 0; t < spec.n_frames; ++t)
    for (std::size_t k = 0; k < kNumJoints; ++k) sum += (out.joints[t][k] - truth[t][k]).norm();
  const double mean = sum / static_cast<double>(spec.n_frames * kNumJoints);
  MESSAGE("mean joint error " << mean);
  CHECK(mean <= body.max_edge_length());

  const TrackedSequence again = track_sequence(frames, truth[0], lib);
  CHECK(again.joints == out.joints);
}

TEST_CASE("empty frames carry the prediction") {
  SyntheticSpec spec;
  spec.n_frames = 1;
  spec.pitch = 0.012;
  const SurfaceMesh m = SyntheticBody(spec).mesh(0);
  const std::vector<SurfaceMesh> frames{m, m, SurfaceMesh{}, m};
  const MotionLibrary lib = build_motion_library(reference_motion(spec.motion));
  const TrackedSequence out = track_sequence(frames, SyntheticBody::rest_pose(), lib);
  CHECK(out.diagnostics[2].empty_frame);
  CHECK(out.joints[2].finite());
}
