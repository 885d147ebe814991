#include "geotrack/eval.hpp"

#include "geotrack/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace geotrack {

namespace {

std::string fmt9(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

void check_lengths(std::span<const JointState> est, std::span<const JointState> truth) {
  if (est.size() != truth.size())
    throw UsageError("eval: estimate has " + std::to_string(est.size()) + " frames, truth has " +
                     std::to_string(truth.size()));
  if (est.empty()) throw UsageError("eval: no frames");
}

const std::vector<JointState>* find_run(const RunMap& runs, double radius) {
  for (const auto& [r, seq] : runs)
    if (std::abs(r - radius) <= 1e-9) return &seq;
  return nullptr;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace

void EvalReport::check() const {
  if (radii.empty()) throw UsageError("eval report: no radii");
  if (r_or.size() != radii.size() || r_or_std.size() != radii.size() ||
      frame_errors.size() != radii.size())
    throw UsageError("eval report: per-radius arrays differ in length");
  auto bad = [](double v) { return !(v >= 0.0) || !std::isfinite(v); };
  if (std::any_of(r_or.begin(), r_or.end(), bad) || std::any_of(r_or_std.begin(), r_or_std.end(), bad) ||
      std::any_of(r_i.begin(), r_i.end(), bad) || std::any_of(r_i_std.begin(), r_i_std.end(), bad))
    throw UsageError("eval report: errors must be finite and >= 0");
  for (const auto& f : frame_errors)
    if (std::any_of(f.begin(), f.end(), bad)) throw UsageError("eval report: frame errors must be >= 0");
}

std::vector<double> frame_errors(std::span<const JointState> est, std::span<const JointState> truth) {
  check_lengths(est, truth);
  std::vector<double> out(est.size());
  for (std::size_t f = 0; f < est.size(); ++f)
    out[f] = joint_distance(est[f], truth[f]) / static_cast<double>(kNumJoints);
  return out;
}

double per_occlusion_error(std::span<const JointState> est, std::span<const JointState> truth) {
  const std::vector<double> e = frame_errors(est, truth);
  double sum = 0.0;
  for (double x : e) sum += x;
  return sum / static_cast<double>(e.size());
}

JointErrors joint_errors(std::span<const JointState> est, std::span<const JointState> truth) {
  check_lengths(est, truth);
  JointErrors out{};
  for (std::size_t f = 0; f < est.size(); ++f)
    for (std::size_t j = 0; j < kNumJoints; ++j) out[j] += (est[f].joints[j] - truth[f].joints[j]).norm();
  for (double& x : out) x /= static_cast<double>(est.size());
  return out;
}

JointErrors per_joint_error(const RunMap& runs, std::span<const JointState> truth) {
  std::string missing;
  for (double r : kEvalRadii)
    if (!find_run(runs, r)) missing += (missing.empty() ? "" : ", ") + fmt9(r);
  if (!missing.empty()) throw UsageError("per_joint_error: missing runs for radii " + missing);
  JointErrors out{};
  for (double r : kEvalRadii) {
    const JointErrors e = joint_errors(*find_run(runs, r), truth);
    for (std::size_t j = 0; j < kNumJoints; ++j) out[j] += e[j];
  }
  for (double& x : out) x /= static_cast<double>(kEvalRadii.size());
  return out;
}

double error_stddev(std::span<const double> samples) {
  if (samples.size() < 2) throw UsageError("error_stddev: need at least 2 samples");
  double mean = 0.0;
  for (double x : samples) mean += x;
  mean /= static_cast<double>(samples.size());
  double ss = 0.0;
  for (double x : samples) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(samples.size()));
}

EvalReport evaluate_runs(const RunMap& runs, std::span<const JointState> truth,
                         std::string config_hash, std::uint64_t seed) {
  if (runs.empty()) throw UsageError("evaluate_runs: no runs");
  EvalReport rep;
  rep.config_hash = std::move(config_hash);
  rep.seed = seed;
  std::array<std::vector<double>, kNumJoints> pooled;
  for (const auto& [radius, seq] : runs) {
    rep.radii.push_back(radius);
    std::vector<double> e = frame_errors(seq, truth);
    double sum = 0.0;
    for (double x : e) sum += x;
    rep.r_or.push_back(sum / static_cast<double>(e.size()));
    rep.r_or_std.push_back(e.size() >= 2 ? error_stddev(e) : 0.0);
    rep.frame_errors.push_back(std::move(e));
    for (std::size_t f = 0; f < seq.size(); ++f)
      for (std::size_t j = 0; j < kNumJoints; ++j)
        pooled[j].push_back((seq[f].joints[j] - truth[f].joints[j]).norm());
  }
  rep.r_i = per_joint_error(runs, truth);
  for (std::size_t j = 0; j < kNumJoints; ++j)
    rep.r_i_std[j] = pooled[j].size() >= 2 ? error_stddev(pooled[j]) : 0.0;
  return rep;
}

std::string fnv1a_hex(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::vector<CsvRow> report_rows(const EvalReport& report) {
  report.check();
  std::vector<CsvRow> rows;
  for (std::size_t i = 0; i < report.radii.size(); ++i) {
    rows.push_back({"r_or", fmt9(report.radii[i]), report.r_or[i]});
    rows.push_back({"r_or_std", fmt9(report.radii[i]), report.r_or_std[i]});
  }
  for (std::size_t j = 0; j < kNumJoints; ++j) {
    rows.push_back({"r_i", std::string(kJointNames[j]), report.r_i[j]});
    rows.push_back({"r_i_std", std::string(kJointNames[j]), report.r_i_std[j]});
  }
  for (std::size_t i = 0; i < report.radii.size(); ++i)
    for (std::size_t f = 0; f < report.frame_errors[i].size(); ++f)
      rows.push_back({"frame_error", fmt9(report.radii[i]) + "/" + std::to_string(f),
                      report.frame_errors[i][f]});
  return rows;
}

std::string report_csv(const EvalReport& report) {
  std::string out = "metric,key,value\n";
  for (const CsvRow& row : report_rows(report))
    out += row.metric + "," + row.key + "," + fmt9(row.value) + "\n";
  return out;
}

std::vector<CsvRow> parse_report_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::vector<CsvRow> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1) {
      if (line != "metric,key,value") throw FormatError("report.csv: bad header", 1);
      continue;
    }
    if (line.empty()) continue;
    const auto a = line.find(',');
    const auto b = a == std::string::npos ? a : line.find(',', a + 1);
    if (b == std::string::npos) throw FormatError("report.csv: expected 3 fields", line_no);
    CsvRow row{line.substr(0, a), line.substr(a + 1, b - a - 1), 0.0};
    const std::string value = line.substr(b + 1);
    char* end = nullptr;
    row.value = std::strtod(value.c_str(), &end);
    if (value.empty() || *end != '\0') throw FormatError("report.csv: bad value '" + value + "'", line_no);
    rows.push_back(std::move(row));
  }
  if (line_no == 0) throw FormatError("report.csv: empty");
  return rows;
}

std::vector<CsvRow> read_report_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_report_csv(ss.str());
}

std::string bar_chart_svg(const std::string& title, const std::vector<std::string>& labels,
                          std::span<const double> values, std::span<const double> err) {
  if (labels.size() != values.size() || err.size() != values.size())
    throw UsageError("bar_chart_svg: labels, values and errors differ in length");
  const double bar = 28.0, gap = 8.0, left = 60.0, top = 40.0, plot_h = 240.0;
  const double width = left + static_cast<double>(values.size()) * (bar + gap) + 20.0;
  const double height = top + plot_h + 90.0;
  double vmax = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) vmax = std::max(vmax, values[i] + err[i]);
  if (vmax <= 0.0) vmax = 1.0;
  auto y = [&](double v) { return top + plot_h * (1.0 - v / vmax); };

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
    << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s << "<text x=\"" << left << "\" y=\"20\" font-size=\"14\">" << title << "</text>\n";
  s << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + plot_h
    << "\" stroke=\"black\"/>\n";
  s << "<line x1=\"" << left << "\" y1=\"" << top + plot_h << "\" x2=\"" << width - 10.0 << "\" y2=\""
    << top + plot_h << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double v = vmax * k / 4.0;
    s << "<text x=\"" << left - 4.0 << "\" y=\"" << y(v) + 4.0 << "\" text-anchor=\"end\">" << fmt9(v)
      << "</text>\n";
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double x = left + gap + static_cast<double>(i) * (bar + gap);
    const double cx = x + bar / 2.0;
    s << "<rect x=\"" << x << "\" y=\"" << y(values[i]) << "\" width=\"" << bar << "\" height=\""
      << top + plot_h - y(values[i]) << "\" fill=\"#4a7ab5\"/>\n";
    const double lo = y(std::max(0.0, values[i] - err[i])), hi = y(values[i] + err[i]);
    s << "<line x1=\"" << cx << "\" y1=\"" << lo << "\" x2=\"" << cx << "\" y2=\"" << hi
      << "\" stroke=\"black\"/>\n";
    s << "<line x1=\"" << cx - 5.0 << "\" y1=\"" << hi << "\" x2=\"" << cx + 5.0 << "\" y2=\"" << hi
      << "\" stroke=\"black\"/>\n";
    s << "<text transform=\"translate(" << cx << "," << top + plot_h + 8.0
      << ") rotate(60)\">" << labels[i] << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

void emit_report(const EvalReport& report, const std::filesystem::path& out_dir) {
  report.check();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  write_file(out_dir / "report.csv", report_csv(report));

  nlohmann::ordered_json j;
  j["config_hash"] = report.config_hash;
  j["seed"] = report.seed;
  j["radii"] = report.radii;
  j["r_or"] = report.r_or;
  j["r_or_std"] = report.r_or_std;
  nlohmann::ordered_json ri = nlohmann::ordered_json::object();
  for (std::size_t k = 0; k < kNumJoints; ++k) ri[std::string(kJointNames[k])] = report.r_i[k];
  j["r_i"] = std::move(ri);
  write_file(out_dir / "summary.json", j.dump(2) + "\n");

  std::vector<std::string> radius_labels;
  for (double r : report.radii) radius_labels.push_back(fmt9(r));
  write_file(out_dir / "r_or.svg",
             bar_chart_svg("mean joint error per occluder radius (m)", radius_labels, report.r_or,
                           report.r_or_std));
  std::vector<std::string> joint_labels(kJointNames.begin(), kJointNames.end());
  write_file(out_dir / "r_i.svg",
             bar_chart_svg("mean error per joint (m)", joint_labels, report.r_i, report.r_i_std));
}

}  // namespace geotrack
