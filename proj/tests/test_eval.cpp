#include "support.hpp"

#include "geotrack/eval.hpp"

#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#ifndef GEOTRACK_TEST_DATA
#define GEOTRACK_TEST_DATA "tests/data"
#endif

using namespace geotrack;
using namespace gt_test;

namespace {

std::vector<JointState> random_seq(std::mt19937_64& rng, std::size_t n) {
  std::vector<JointState> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(random_state(rng));
  return out;
}

std::vector<JointState> offset(const std::vector<JointState>& seq, const Vec3& d) {
  std::vector<JointState> out;
  for (const auto& s : seq) out.push_back(s.translated(d));
  return out;
}

RunMap exact_runs(const std::vector<JointState>& truth) {
  RunMap runs;
  for (double r : kEvalRadii) runs[r] = truth;
  return runs;
}

// Fixed fixture used for the golden CSV; no random numbers involved.
EvalReport golden_report() {
  std::vector<JointState> truth(4);
  for (std::size_t t = 0; t < 4; ++t)
    for (std::size_t k = 0; k < kNumJoints; ++k) truth[t][k] = Vec3(0.1 * k, 0.01 * t, 1.0);
  RunMap runs;
  for (double r : kEvalRadii) {
    std::vector<JointState> est = truth;
    for (std::size_t t = 0; t < 4; ++t)
      for (std::size_t k = 0; k < kNumJoints; ++k) est[t][k] += Vec3(0.5 * r + 0.001 * k, 0.002 * t, 0);
    runs[r] = est;
  }
  return evaluate_runs(runs, truth, fnv1a_hex("golden"), 7);
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("per occlusion error") {
  std::mt19937_64 rng(1);
  const auto truth = random_seq(rng, 8);
  CHECK(per_occlusion_error(truth, truth) == 0.0);
  CHECK(per_occlusion_error(offset(truth, Vec3(0.01, 0, 0)), truth) == doctest::Approx(0.01).epsilon(1e-12));

  auto one = truth;
  for (auto& s : one) s[Joint::elbow_left] += Vec3(0, 0.21, 0);
  CHECK(per_occlusion_error(one, truth) == doctest::Approx(0.01).epsilon(1e-12));

  const std::vector<JointState> shorter(truth.begin(), truth.end() - 1);
  CHECK_THROWS_AS(per_occlusion_error(shorter, truth), UsageError);
}

TEST_CASE("per joint error") {
  std::mt19937_64 rng(2);
  const auto truth = random_seq(rng, 5);
  for (double x : per_joint_error(exact_runs(truth), truth)) CHECK(x == 0.0);

  RunMap runs = exact_runs(truth);
  runs[0.09] = offset(truth, Vec3(0, 0, 0.06));
  for (double x : per_joint_error(runs, truth)) CHECK(x == doctest::Approx(0.01).epsilon(1e-12));

  RunMap missing = exact_runs(truth);
  missing.erase(0.03);
  missing.erase(0.12);
  try {
    per_joint_error(missing, truth);
    FAIL("no error");
  } catch (const UsageError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("0.03") != std::string::npos);
    CHECK(msg.find("0.12") != std::string::npos);
  }
}

TEST_CASE("spreadsheet recomputation") {
  std::mt19937_64 rng(3);
  const auto truth = random_seq(rng, 7);
  RunMap runs;
  for (double r : kEvalRadii) runs[r] = random_seq(rng, 7);
  const EvalReport rep = evaluate_runs(runs, truth);

  // cell[r][f][j] = |est - truth|, then plain row and column sums
  std::size_t ri = 0;
  std::array<double, kNumJoints> col{};
  for (const auto& [r, est] : runs) {
    double total = 0;
    for (std::size_t f = 0; f < 7; ++f)
      for (std::size_t j = 0; j < kNumJoints; ++j) {
        const Vec3 d = est[f][j] - truth[f][j];
        const double cell = std::sqrt(d.x() * d.x() + d.y() * d.y() + d.z() * d.z());
        total += cell;
        col[j] += cell;
      }
    CHECK(std::abs(rep.r_or[ri] - total / (7.0 * 21.0)) <= 1e-12);
    ++ri;
  }
  for (std::size_t j = 0; j < kNumJoints; ++j) CHECK(std::abs(rep.r_i[j] - col[j] / (6.0 * 7.0)) <= 1e-12);
}

TEST_CASE("standard deviation") {
  const std::vector<double> same{0.3, 0.3, 0.3};
  CHECK(error_stddev(same) == 0.0);
  const std::vector<double> two{0.0, 0.02};
  CHECK(error_stddev(two) == doctest::Approx(0.01).epsilon(1e-15));
  const std::vector<double> one{1.0};
  CHECK_THROWS_AS(error_stddev(one), UsageError);

  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0, 0.2);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> x(2 + trial);
    for (double& v : x) v = u(rng);
    double mean = 0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(x.size());
    double ss = 0;
    for (double v : x) ss += (v - mean) * (v - mean);
    CHECK(std::abs(error_stddev(x) - std::sqrt(ss / static_cast<double>(x.size()))) <= 1e-12);
  }
}

TEST_CASE("frame order does not matter") {
  std::mt19937_64 rng(5);
  const auto truth = random_seq(rng, 12);
  const auto est = random_seq(rng, 12);
  std::vector<std::size_t> perm(12);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<JointState> pt, pe;
  for (std::size_t i : perm) pt.push_back(truth[i]), pe.push_back(est[i]);
  CHECK(std::abs(per_occlusion_error(est, truth) - per_occlusion_error(pe, pt)) <= 1e-12);
  const auto a = joint_errors(est, truth), b = joint_errors(pe, pt);
  for (std::size_t j = 0; j < kNumJoints; ++j) CHECK(std::abs(a[j] - b[j]) <= 1e-12);
}

TEST_CASE("metrics scale linearly") {
  std::mt19937_64 rng(6);
  const std::vector<JointState> zero(6);
  RunMap runs, doubled;
  for (double r : kEvalRadii) {
    runs[r] = random_seq(rng, 6);
    for (const auto& s : runs[r]) {
      JointState t;
      for (std::size_t k = 0; k < kNumJoints; ++k) t[k] = 2.0 * s[k];
      doubled[r].push_back(t);
    }
  }
  const EvalReport a = evaluate_runs(runs, zero), b = evaluate_runs(doubled, zero);
  for (std::size_t i = 0; i < a.radii.size(); ++i) {
    CHECK(b.r_or[i] == 2.0 * a.r_or[i]);
    CHECK(b.r_or_std[i] == doctest::Approx(2.0 * a.r_or_std[i]).epsilon(1e-14));
  }
  for (std::size_t j = 0; j < kNumJoints; ++j) {
    CHECK(b.r_i[j] == 2.0 * a.r_i[j]);
    CHECK(b.r_i_std[j] == doctest::Approx(2.0 * a.r_i_std[j]).epsilon(1e-14));
  }
}

TEST_CASE("csv round trip") {
  const EvalReport rep = golden_report();
  const std::string csv = report_csv(rep);
  const auto rows = parse_report_csv(csv);
  const auto expect = report_rows(rep);
  REQUIRE(rows.size() == expect.size());
  CHECK(rows.size() == 2 * 6 + 2 * 21 + 6 * 4);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].metric == expect[i].metric);
    CHECK(rows[i].key == expect[i].key);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", expect[i].value);
    CHECK(rows[i].value == std::strtod(buf, nullptr));
  }
  std::string again = "metric,key,value\n";
  for (const auto& r : rows) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", r.value);
    again += r.metric + "," + r.key + "," + buf + "\n";
  }
  CHECK(again == csv);
  CHECK_THROWS_AS(parse_report_csv("a,b\n"), FormatError);
}

TEST_CASE("report files") {
  const auto dir = std::filesystem::temp_directory_path() / "geotrack_eval_test";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  const EvalReport rep = golden_report();
  emit_report(rep, dir);
  for (const char* f : {"report.csv", "summary.json", "r_or.svg", "r_i.svg"})
    CHECK(std::filesystem::exists(dir / f));
  CHECK(read_report_csv(dir / "report.csv").size() == report_rows(rep).size());
  CHECK(slurp(dir / "r_or.svg").find("<svg") != std::string::npos);
  std::filesystem::remove_all(dir);
  CHECK_THROWS_AS(emit_report(rep, "/proc/geotrack_no_such_dir"), IoError);
}

TEST_CASE("golden report csv") {
  const std::string csv = report_csv(golden_report());
  const auto path = std::filesystem::path(GEOTRACK_TEST_DATA) / "golden_report.csv";
  REQUIRE(std::filesystem::exists(path));
  CHECK(slurp(path) == csv);
}

TEST_CASE("fnv1a") {
  CHECK(fnv1a_hex("") == "cbf29ce484222325");
  CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
}
