#pragma once

#include "geotrack/dynamics.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace geotrack {

/// Occluder radii of the evaluation sweep, the unoccluded run first.
inline const std::vector<double> kEvalRadii = {0.0, 0.03, 0.06, 0.09, 0.12, 0.15};

using JointErrors = std::array<double, kNumJoints>;

struct EvalReport {
  std::vector<double> radii;                     // ascending
  std::vector<double> r_or;                      // per radius
  std::vector<double> r_or_std;                  // over frames, per radius
  JointErrors r_i{};
  JointErrors r_i_std{};                         // over every frame of every run
  std::vector<std::vector<double>> frame_errors; // [radius][frame], 21-joint average
  std::string config_hash;
  std::uint64_t seed = 0;

  void check() const;  // throws UsageError
};

/// Per-frame mean over the 21 joints of the Euclidean joint error.
std::vector<double> frame_errors(std::span<const JointState> est, std::span<const JointState> truth);

/// Mean of frame_errors.
double per_occlusion_error(std::span<const JointState> est, std::span<const JointState> truth);

/// Mean over frames of each joint's error.
JointErrors joint_errors(std::span<const JointState> est, std::span<const JointState> truth);

using RunMap = std::map<double, std::vector<JointState>>;

/// Average of joint_errors over the six runs of kEvalRadii. Radii match
/// within 1e-9.
JointErrors per_joint_error(const RunMap& runs, std::span<const JointState> truth);

/// Population standard deviation; needs at least two samples.
double error_stddev(std::span<const double> samples);

EvalReport evaluate_runs(const RunMap& runs, std::span<const JointState> truth,
                         std::string config_hash = {}, std::uint64_t seed = 0);

/// 64-bit FNV-1a, 16 lowercase hex digits.
std::string fnv1a_hex(std::string_view text);

struct CsvRow {
  std::string metric;
  std::string key;
  double value = 0.0;
};

std::vector<CsvRow> report_rows(const EvalReport& report);
/// "metric,key,value" header, values printed with %.9g.
std::string report_csv(const EvalReport& report);
std::vector<CsvRow> parse_report_csv(const std::string& text);
std::vector<CsvRow> read_report_csv(const std::filesystem::path& path);

/// Bar chart with one whisker of +-err per bar.
std::string bar_chart_svg(const std::string& title, const std::vector<std::string>& labels,
                          std::span<const double> values, std::span<const double> err);

/// report.csv, summary.json, r_or.svg, r_i.svg.
void emit_report(const EvalReport& report, const std::filesystem::path& out_dir);

}  // namespace geotrack
