#pragma once

#include "geotrack/geometry.hpp"
#include "geotrack/mesh.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace geotrack {

/// Points in meters. Organized clouds are row-major width x height grids in
/// which some slots may be invalid; invalid slots hold (0,0,0) and valid[i] == 0.
struct PointCloud {
  std::vector<Vec3> points;
  std::vector<char> valid;  // parallel to points
  std::size_t width = 0;    // 0 for unorganized clouds
  std::size_t height = 0;

  bool organized() const { return width > 0 && height > 0; }
  std::size_t size() const { return points.size(); }
  std::size_t valid_count() const;

  static PointCloud unorganized(std::vector<Vec3> pts);
  /// `pts` must have width*height entries; non-finite entries become invalid slots.
  static PointCloud organized_grid(std::size_t width, std::size_t height, std::vector<Vec3> pts);
};

enum class CloudFormat { ply, csv };
enum class MeshFormat { off, ply };

struct LoadedCloud {
  PointCloud cloud;
  std::size_t rejected = 0;  // non-finite points dropped (unorganized) or invalidated (organized)
};

/// ASCII PLY (x y z, optional `comment width W` / `comment height H`) or CSV.
LoadedCloud load_point_cloud(const std::filesystem::path& path, CloudFormat format);
LoadedCloud load_point_cloud(const std::filesystem::path& path);  // by extension
LoadedCloud parse_point_cloud(const std::string& text, CloudFormat format);
void save_point_cloud_ply(const PointCloud& cloud, const std::filesystem::path& path);

struct RigTransform {
  int camera_id = 0;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  /// Throws UsageError unless rotation is orthonormal with determinant +1 (1e-9).
  void check() const;
  RigidTransform as_rigid() const { return {rotation, translation}; }
};

struct OrientedBox {
  Vec3 center = Vec3::Zero();
  Mat3 axes = Mat3::Identity();  // columns are the box axes in device frame
  Vec3 half_extents = Vec3::Zero();

  bool contains(const Vec3& p) const;
};

struct AlignedBox {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Zero();

  bool contains(const Vec3& p) const {
    return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
  }
};

struct DeviceModel {
  std::vector<OrientedBox> boxes;
  AlignedBox workspace;

  void check() const;
};

struct RigConfig {
  std::vector<RigTransform> cameras;
  DeviceModel device;
};

RigConfig load_rig_config(const std::filesystem::path& path);
RigConfig parse_rig_config(const std::string& json_text);
std::string rig_config_to_json(const RigConfig& rig);

PointCloud apply_rig_transform(const PointCloud& cloud, const RigTransform& t);

/// Keeps points inside the workspace and outside every device box. Organized
/// clouds keep their layout; removed slots become invalid.
PointCloud subtract_background(const PointCloud& cloud, const DeviceModel& model);

/// Merge several camera clouds into one unorganized cloud in the device frame.
PointCloud merge_clouds(const std::vector<PointCloud>& clouds);

enum class TriangulationMode { grid, knn_projection };

struct TriangulationParams {
  TriangulationMode mode = TriangulationMode::grid;
  double max_edge_length = 0.05;
  std::size_t knn = 8;  // neighbors considered in knn_projection mode
  std::size_t min_component_size = 1;  // smaller connected pieces are dropped
};

/// Grid mode splits each fully valid 2x2 cell along its shorter diagonal (two
/// triangles); cells with one invalid corner yield the single triangle on the
/// valid corners. Triangles with any side longer than max_edge_length are
/// dropped, as are vertices left without a triangle.
SurfaceMesh triangulate(const PointCloud& cloud, const TriangulationParams& params = {});

SurfaceMesh load_mesh(const std::filesystem::path& path, MeshFormat format);
SurfaceMesh load_mesh(const std::filesystem::path& path);  // by extension
SurfaceMesh parse_mesh(const std::string& text, MeshFormat format);
void save_mesh(const SurfaceMesh& mesh, const std::filesystem::path& path);  // by extension

}  // namespace geotrack
