#include "geotrack/bench.hpp"
#include "geotrack/descriptor.hpp"
#include "geotrack/error.hpp"
#include "geotrack/eval.hpp"
#include "geotrack/geodesic.hpp"
#include "geotrack/ingest.hpp"
#include "geotrack/mht.hpp"
#include "geotrack/occlusion.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace geotrack;

namespace {

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

std::string frame_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%05zu.ply", i);
  return buf;
}

// frame_*.ply / frame_*.csv in name order.
std::vector<fs::path> list_frames(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError(dir.string() + " is not a directory");
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const fs::path& p = entry.path();
    const std::string name = p.filename().string();
    if (name.rfind("frame_", 0) == 0 && (p.extension() == ".ply" || p.extension() == ".csv"))
      out.push_back(p);
  }
  std::sort(out.begin(), out.end());
  if (out.empty()) throw IoError("no frame_* files in " + dir.string());
  return out;
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

int cmd_generate(const std::string& motion, const std::string& speed, std::size_t frames, double pitch,
                 std::uint64_t seed, double noise, const fs::path& out) {
  SyntheticSpec spec;
  spec.motion = parse_motion_type(motion);
  spec.speed = parse_speed(speed);
  spec.n_frames = frames;
  spec.pitch = pitch;
  spec.seed = seed;
  spec.noise_sigma = noise;
  const GeneratedSequence seq = generate_sequence(spec);
  make_dir(out);
  for (std::size_t i = 0; i < seq.frames.size(); ++i) save_point_cloud_ply(seq.frames[i], out / frame_name(i));
  save_joint_states(out / "skeleton.jsonl", seq.skeletons);
  save_joint_states(out / "reference.jsonl", reference_motion(spec.motion, spec.period));
  std::cout << "wrote " << seq.frames.size() << " frames to " << out.string() << "\n";
  return 0;
}

int cmd_simulate(const fs::path& frames_dir, double radius, double prob, std::uint64_t seed,
                 const fs::path& out) {
  const auto files = list_frames(frames_dir);
  OcclusionSpec spec;
  spec.radius = radius;
  spec.probability = prob;
  spec.seed = seed;
  const auto schedule = build_schedule(files.size(), spec);
  make_dir(out);
  std::vector<char> hit(files.size(), 0);
  for (const auto& e : schedule) hit[e.frame] = 1;
  for (std::size_t i = 0; i < files.size(); ++i) {
    PointCloud cloud = load_point_cloud(files[i]).cloud;
    if (hit[i] && radius > 0.0 && cloud.valid_count() > 0)
      cloud = apply_occlusion(cloud, body_center(cloud), radius);
    save_point_cloud_ply(cloud, out / frame_name(i));
  }
  const std::string json = schedule_to_json(schedule, spec);
  write_text(out / "schedule.json", json + "\n");
  std::cout << json << "\n";
  return 0;
}

SurfaceMesh load_frame_mesh(const fs::path& file, const RigConfig* rig, const TriangulationParams& params) {
  PointCloud cloud = load_point_cloud(file).cloud;
  if (rig) {
    if (!rig->cameras.empty()) cloud = apply_rig_transform(cloud, rig->cameras.front());
    cloud = subtract_background(cloud, rig->device);
  }
  return triangulate(cloud, params);
}

int cmd_track(const fs::path& frames_dir, const std::string& rig_path, const fs::path& skeleton0_path,
              const std::string& config_path, const std::string& library_path, double max_edge,
              std::size_t min_component, const fs::path& out) {
  const auto files = list_frames(frames_dir);
  RigConfig rig;
  if (!rig_path.empty()) rig = load_rig_config(rig_path);
  const TrackerConfig config =
      config_path.empty() ? TrackerConfig{} : tracker_config_from_json(read_text(config_path));
  const auto skeletons = load_joint_states(skeleton0_path);
  if (skeletons.empty()) throw UsageError(skeleton0_path.string() + " holds no joint state");
  const fs::path lib_file = library_path.empty() ? frames_dir / "reference.jsonl" : fs::path(library_path);
  const MotionLibrary library = build_motion_library(load_joint_states(lib_file), config.scales);

  TriangulationParams params;
  params.max_edge_length = max_edge;
  params.min_component_size = min_component;
  const FrameSource source{files.size(), [&](std::size_t i) {
                             return load_frame_mesh(files[i], rig_path.empty() ? nullptr : &rig, params);
                           }};
  const TrackedSequence result = track_sequence(source, skeletons.front(), library, config);
  save_joint_states(out, result.joints);
  std::cout << "tracked " << result.joints.size() << " frames -> " << out.string() << "\n";
  return 0;
}

int cmd_anchors(const fs::path& mesh_path, double radius, const fs::path& out) {
  const SurfaceMesh mesh = load_mesh(mesh_path);
  const AnchorSet anchors = detect_anchors(mesh, radius);
  nlohmann::ordered_json list = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    const Vec3& p = anchors.positions[i];
    list.push_back({{"vertex", anchors.vertices[i]}, {"label", anchors.labels[i]}, {"position", {p.x(), p.y(), p.z()}}});
  }
  nlohmann::ordered_json j;
  j["anchors"] = std::move(list);
  write_text(out, j.dump(2) + "\n");
  return 0;
}

int cmd_describe(const fs::path& mesh_path, double radius, const fs::path& out) {
  const SurfaceMesh mesh = load_mesh(mesh_path);
  const AnchorSet anchors = detect_anchors(mesh, radius);
  const DescriptorTable table(mesh, anchors);
  std::ostringstream s;
  s << "vertex_id";
  for (int label : table.labels()) s << ",d_A" << label;
  s << "\n";
  char buf[64];
  for (std::size_t v = 0; v < table.rows(); ++v) {
    s << v;
    for (double d : table.row(static_cast<VertexId>(v))) {
      std::snprintf(buf, sizeof buf, "%.9g", d);
      s << ',' << buf;
    }
    s << "\n";
  }
  write_text(out, s.str());
  return 0;
}

int cmd_evaluate(const std::vector<std::string>& tracked, const fs::path& truth_path,
                 const std::vector<double>& radii, const std::string& config_path, std::uint64_t seed,
                 const fs::path& out) {
  if (tracked.size() != radii.size())
    throw UsageError("evaluate: " + std::to_string(tracked.size()) + " tracked files for " +
                     std::to_string(radii.size()) + " radii");
  const auto truth = load_joint_states(truth_path);
  RunMap runs;
  for (std::size_t i = 0; i < tracked.size(); ++i) runs[radii[i]] = load_joint_states(tracked[i]);
  const std::string hash = config_path.empty() ? fnv1a_hex("") : fnv1a_hex(read_text(config_path));
  const EvalReport report = evaluate_runs(runs, truth, hash, seed);
  emit_report(report, out);
  for (std::size_t i = 0; i < report.radii.size(); ++i)
    std::printf("r_or[%g] = %.6f m\n", report.radii[i], report.r_or[i]);
  return 0;
}

int cmd_bench(double pitch, std::size_t runs, const fs::path& out) {
  const BenchReport rep = run_bench(pitch, runs);
  const std::string json = bench_to_json(rep);
  write_text(out, json);
  std::cout << json;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"geodesic anchor tracking of a deforming body surface"};
  app.require_subcommand(1);

  std::string motion = "upper", speed = "normal";
  std::size_t n_frames = 200;
  double pitch = SyntheticSpec{}.pitch, noise = 0.0;
  std::uint64_t seed = 7;
  fs::path out;
  auto* gen = app.add_subcommand("generate", "write a synthetic frame sequence with its skeleton truth");
  gen->add_option("--motion", motion, "upper | lower | shift");
  gen->add_option("--speed", speed, "slow | normal | fast");
  gen->add_option("--frames", n_frames);
  gen->add_option("--pitch", pitch, "pixel spacing (m)");
  gen->add_option("--seed", seed);
  gen->add_option("--noise", noise, "depth jitter sigma (m)");
  gen->add_option("--out", out)->required();

  fs::path frames_dir;
  double radius = 0.09, prob = 0.5;
  auto* sim = app.add_subcommand("simulate", "remove a ball around the body center from random frames");
  sim->add_option("--frames", frames_dir)->required();
  sim->add_option("--radius", radius);
  sim->add_option("--prob", prob);
  sim->add_option("--seed", seed);
  sim->add_option("--out", out)->required();

  std::string rig_path, config_path, library_path;
  fs::path skeleton0;
  double max_edge = 0.05;
  std::size_t min_component = 1;
  auto* track = app.add_subcommand("track", "track the skeleton through a frame directory");
  track->add_option("--frames", frames_dir)->required();
  track->add_option("--rig", rig_path);
  track->add_option("--skeleton0", skeleton0, "JSON lines; the first state is used")->required();
  track->add_option("--config", config_path);
  track->add_option("--library", library_path, "reference motion (default <frames>/reference.jsonl)");
  track->add_option("--max-edge", max_edge, "triangulation edge limit (m)");
  track->add_option("--min-component", min_component, "drop smaller mesh pieces");
  track->add_option("--out", out)->required();

  fs::path mesh_path;
  double anchor_radius = kDefaultAnchorRadius;
  auto* anchors = app.add_subcommand("anchors", "detect anchors on a mesh");
  anchors->add_option("--mesh", mesh_path)->required();
  anchors->add_option("--radius", anchor_radius);
  anchors->add_option("--out", out)->required();

  auto* describe = app.add_subcommand("describe", "per-vertex anchor distances as CSV");
  describe->add_option("--mesh", mesh_path)->required();
  describe->add_option("--radius", anchor_radius);
  describe->add_option("--out", out)->required();

  std::vector<std::string> tracked;
  fs::path truth;
  std::vector<double> radii = kEvalRadii;
  auto* evaluate = app.add_subcommand("evaluate", "error report over an occlusion sweep");
  evaluate->add_option("--tracked", tracked, "one file per radius, in --radii order")->required();
  evaluate->add_option("--truth", truth)->required();
  evaluate->add_option("--radii", radii)->delimiter(',');
  evaluate->add_option("--config", config_path, "tracker config, hashed into summary.json");
  evaluate->add_option("--seed", seed);
  evaluate->add_option("--out", out)->required();

  double bench_pitch = kBenchPitch;
  std::size_t runs = 5;
  auto* bench = app.add_subcommand("bench", "time mesh construction and anchor features");
  bench->add_option("--pitch", bench_pitch);
  bench->add_option("--runs", runs);
  bench->add_option("--out", out)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) return cmd_generate(motion, speed, n_frames, pitch, seed, noise, out);
    if (*sim) return cmd_simulate(frames_dir, radius, prob, seed, out);
    if (*track)
      return cmd_track(frames_dir, rig_path, skeleton0, config_path, library_path, max_edge, min_component, out);
    if (*anchors) return cmd_anchors(mesh_path, anchor_radius, out);
    if (*describe) return cmd_describe(mesh_path, anchor_radius, out);
    if (*evaluate) return cmd_evaluate(tracked, truth, radii, config_path, seed, out);
    if (*bench) return cmd_bench(bench_pitch, runs, out);
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return 3;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return 4;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
