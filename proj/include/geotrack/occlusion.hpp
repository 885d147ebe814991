#pragma once

#include "geotrack/ingest.hpp"
#include "geotrack/mesh.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace geotrack {

enum class CenterMode { body_center, fixed, per_frame };
enum class FrameSelection { all, random, listed };

/// Transient occluder: a ball of `radius` meters removed from selected frames.
struct OcclusionSpec {
  double radius = 0.0;
  CenterMode center_mode = CenterMode::body_center;
  Vec3 center = Vec3::Zero();  // fixed mode
  std::vector<Vec3> centers;   // per_frame mode, indexed by frame
  FrameSelection selection = FrameSelection::random;
  double probability = 0.5;
  std::vector<std::size_t> frames;  // listed mode
  std::uint64_t seed = 7;

  void check() const;  // throws UsageError
};

struct OcclusionEvent {
  std::size_t frame = 0;
  bool at_body_center = true;  // center is resolved per frame from the data
  Vec3 center = Vec3::Zero();
  double radius = 0.0;
};

/// Centroid of the vertex positions.
Vec3 body_center(const SurfaceMesh& mesh);
Vec3 body_center(const PointCloud& cloud);  // valid points only

/// `mesh` minus every vertex strictly closer than `radius` to `center`, with
/// the incident edges and triangles. Ids are remapped; see SubMesh.
SubMesh apply_occlusion(const SurfaceMesh& mesh, const Vec3& center, double radius);

/// Organized clouds keep their layout with occluded slots invalid; unorganized
/// clouds drop the points.
PointCloud apply_occlusion(const PointCloud& cloud, const Vec3& center, double radius);

/// One entry per occluded frame, in frame order. Random selection draws one
/// uniform number per frame from a generator seeded with `spec.seed`.
std::vector<OcclusionEvent> build_schedule(std::size_t n_frames, const OcclusionSpec& spec);

std::string schedule_to_json(const std::vector<OcclusionEvent>& schedule, const OcclusionSpec& spec);

}  // namespace geotrack
