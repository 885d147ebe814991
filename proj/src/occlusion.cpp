#include "geotrack/occlusion.hpp"

#include "geotrack/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

namespace geotrack {

void OcclusionSpec::check() const {
  if (!(radius >= 0.0) || !std::isfinite(radius)) throw UsageError("occlusion: radius must be >= 0");
  if (!(probability >= 0.0 && probability <= 1.0))
    throw UsageError("occlusion: probability must be in [0, 1]");
  if (center_mode == CenterMode::fixed && !center.allFinite())
    throw UsageError("occlusion: fixed center is not finite");
}

Vec3 body_center(const SurfaceMesh& mesh) {
  if (mesh.empty()) throw UsageError("body_center: mesh is empty");
  Vec3 sum = Vec3::Zero();
  for (const Vec3& p : mesh.vertices()) sum += p;
  return sum / static_cast<double>(mesh.num_vertices());
}

Vec3 body_center(const PointCloud& cloud) {
  Vec3 sum = Vec3::Zero();
  std::size_t n = 0;
  for (std::size_t i = 0; i < cloud.size(); ++i)
    if (cloud.valid[i]) {
      sum += cloud.points[i];
      ++n;
    }
  if (n == 0) throw UsageError("body_center: cloud has no valid points");
  return sum / static_cast<double>(n);
}

SubMesh apply_occlusion(const SurfaceMesh& mesh, const Vec3& center, double radius) {
  if (!(radius >= 0.0)) throw UsageError("apply_occlusion: radius must be >= 0");
  std::vector<char> keep(mesh.num_vertices(), 1);
  std::size_t kept = 0;
  for (std::size_t v = 0; v < keep.size(); ++v) {
    keep[v] = (mesh.vertices()[v] - center).norm() >= radius;
    kept += keep[v] ? 1 : 0;
  }
  if (kept == 0 && !mesh.empty()) warn("apply_occlusion: every vertex removed");
  return induced_submesh(mesh, keep);
}

PointCloud apply_occlusion(const PointCloud& cloud, const Vec3& center, double radius) {
  if (!(radius >= 0.0)) throw UsageError("apply_occlusion: radius must be >= 0");
  PointCloud out;
  if (cloud.organized()) {
    out = cloud;
    for (std::size_t i = 0; i < out.size(); ++i)
      if (out.valid[i] && (out.points[i] - center).norm() < radius) {
        out.valid[i] = 0;
        out.points[i] = Vec3::Zero();
      }
  } else {
    std::vector<Vec3> pts;
    for (std::size_t i = 0; i < cloud.size(); ++i)
      if (cloud.valid[i] && (cloud.points[i] - center).norm() >= radius) pts.push_back(cloud.points[i]);
    out = PointCloud::unorganized(std::move(pts));
  }
  if (out.valid_count() == 0 && cloud.valid_count() > 0) warn("apply_occlusion: every point removed");
  return out;
}

std::vector<OcclusionEvent> build_schedule(std::size_t n_frames, const OcclusionSpec& spec) {
  spec.check();
  if (spec.center_mode == CenterMode::per_frame && spec.centers.size() < n_frames)
    throw UsageError("build_schedule: per-frame centers do not cover every frame");
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const std::set<std::size_t> listed(spec.frames.begin(), spec.frames.end());
  std::vector<OcclusionEvent> out;
  for (std::size_t f = 0; f < n_frames; ++f) {
    bool selected = false;
    switch (spec.selection) {
      case FrameSelection::all: selected = true; break;
      case FrameSelection::random: selected = uniform(rng) < spec.probability; break;
      case FrameSelection::listed: selected = listed.count(f) > 0; break;
    }
    if (!selected) continue;
    OcclusionEvent e;
    e.frame = f;
    e.radius = spec.radius;
    e.at_body_center = spec.center_mode == CenterMode::body_center;
    if (spec.center_mode == CenterMode::fixed) e.center = spec.center;
    if (spec.center_mode == CenterMode::per_frame) e.center = spec.centers[f];
    out.push_back(e);
  }
  return out;
}

std::string schedule_to_json(const std::vector<OcclusionEvent>& schedule, const OcclusionSpec& spec) {
  nlohmann::ordered_json j;
  j["radius"] = spec.radius;
  j["probability"] = spec.probability;
  j["seed"] = spec.seed;
  nlohmann::ordered_json events = nlohmann::ordered_json::array();
  for (const OcclusionEvent& e : schedule) {
    nlohmann::ordered_json ev;
    ev["frame"] = e.frame;
    if (e.at_body_center)
      ev["center"] = "body_center";
    else
      ev["center"] = {e.center.x(), e.center.y(), e.center.z()};
    ev["radius"] = e.radius;
    events.push_back(std::move(ev));
  }
  j["events"] = std::move(events);
  return j.dump(2);
}

}  // namespace geotrack
