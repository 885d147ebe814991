#include "geotrack/ingest.hpp"

#include "geotrack/error.hpp"

#include <json.hpp>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

namespace geotrack {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

std::string lower_extension(const fs::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext;
}

// Line reader that tracks 1-based line numbers and skips blank lines.
class LineReader {
 public:
  explicit LineReader(const std::string& text) : in_(text) {}

  bool next(std::string& line) {
    while (std::getline(in_, line)) {
      ++number_;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.find_first_not_of(" \t") != std::string::npos) return true;
    }
    return false;
  }

  std::size_t line_number() const { return number_; }

 private:
  std::istringstream in_;
  std::size_t number_ = 0;
};

std::vector<std::string> split_ws(const std::string& line) {
  std::istringstream ss(line);
  std::vector<std::string> out;
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

bool parse_double(std::string_view tok, double& out) {
  while (!tok.empty() && (tok.front() == ' ' || tok.front() == '\t')) tok.remove_prefix(1);
  while (!tok.empty() && (tok.back() == ' ' || tok.back() == '\t')) tok.remove_suffix(1);
  if (tok.empty()) return false;
  std::string s(tok);
  // strtod accepts "nan"/"inf", which organized PLY files use for invalid slots.
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size();
}

template <class Int>
bool parse_int(std::string_view tok, Int& out) {
  const auto* first = tok.data();
  const auto* last = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::vector<std::string> properties;  // scalar property names; list properties as "list:<name>"
};

struct PlyHeader {
  std::vector<PlyElement> elements;
  std::size_t width = 0;
  std::size_t height = 0;
};

PlyHeader read_ply_header(LineReader& reader) {
  std::string line;
  if (!reader.next(line) || split_ws(line) != std::vector<std::string>{"ply"})
    throw FormatError("missing 'ply' magic", reader.line_number());
  PlyHeader header;
  bool saw_format = false;
  while (reader.next(line)) {
    const auto tok = split_ws(line);
    if (tok[0] == "end_header") {
      if (!saw_format) throw FormatError("PLY header has no format line", reader.line_number());
      return header;
    }
    if (tok[0] == "format") {
      if (tok.size() < 2 || tok[1] != "ascii")
        throw FormatError("only ASCII PLY is supported", reader.line_number());
      saw_format = true;
    } else if (tok[0] == "comment" || tok[0] == "obj_info") {
      if (tok.size() == 3 && (tok[1] == "width" || tok[1] == "height")) {
        std::size_t value = 0;
        if (!parse_int(tok[2], value))
          throw FormatError("bad organization comment '" + line + "'", reader.line_number());
        (tok[1] == "width" ? header.width : header.height) = value;
      }
    } else if (tok[0] == "element") {
      PlyElement el;
      if (tok.size() != 3 || !parse_int(tok[2], el.count))
        throw FormatError("bad element line '" + line + "'", reader.line_number());
      el.name = tok[1];
      header.elements.push_back(el);
    } else if (tok[0] == "property") {
      if (header.elements.empty())
        throw FormatError("property before any element", reader.line_number());
      if (tok.size() >= 5 && tok[1] == "list") {
        header.elements.back().properties.push_back("list:" + tok[4]);
      } else if (tok.size() == 3) {
        header.elements.back().properties.push_back(tok[2]);
      } else {
        throw FormatError("bad property line '" + line + "'", reader.line_number());
      }
    } else {
      throw FormatError("unexpected PLY header line '" + line + "'", reader.line_number());
    }
  }
  throw FormatError("PLY header not terminated by end_header", reader.line_number());
}

std::size_t property_index(const PlyElement& el, const std::string& name) {
  const auto it = std::find(el.properties.begin(), el.properties.end(), name);
  if (it == el.properties.end())
    throw FormatError("PLY element '" + el.name + "' has no property '" + name + "'");
  return static_cast<std::size_t>(it - el.properties.begin());
}

struct PlyData {
  PlyHeader header;
  std::vector<Vec3> vertices;
  std::vector<std::vector<long long>> faces;
};

PlyData parse_ply(const std::string& text) {
  LineReader reader(text);
  PlyData data;
  data.header = read_ply_header(reader);
  std::string line;
  for (const PlyElement& el : data.header.elements) {
    const bool is_vertex = el.name == "vertex";
    const bool is_face = el.name == "face";
    std::size_t ix = 0, iy = 0, iz = 0, iface = 0;
    if (is_vertex) {
      ix = property_index(el, "x");
      iy = property_index(el, "y");
      iz = property_index(el, "z");
    }
    if (is_face) {
      const auto it = std::find_if(el.properties.begin(), el.properties.end(),
                                   [](const std::string& p) { return p.rfind("list:", 0) == 0; });
      if (it == el.properties.end()) throw FormatError("PLY face element has no list property");
      iface = static_cast<std::size_t>(it - el.properties.begin());
    }
    for (std::size_t i = 0; i < el.count; ++i) {
      if (!reader.next(line)) {
        throw FormatError("PLY declares " + std::to_string(el.count) + " " + el.name +
                              " entries but contains " + std::to_string(i),
                          reader.line_number());
      }
      const auto tok = split_ws(line);
      if (is_vertex) {
        if (tok.size() < el.properties.size())
          throw FormatError("vertex row has " + std::to_string(tok.size()) + " values, expected " +
                                std::to_string(el.properties.size()),
                            reader.line_number());
        Vec3 p;
        if (!parse_double(tok[ix], p.x()) || !parse_double(tok[iy], p.y()) ||
            !parse_double(tok[iz], p.z()))
          throw FormatError("bad vertex coordinate in '" + line + "'", reader.line_number());
        data.vertices.push_back(p);
      } else if (is_face) {
        // Scalars before the list occupy one token each.
        std::size_t pos = iface;
        std::size_t k = 0;
        if (pos >= tok.size() || !parse_int(tok[pos], k) || pos + 1 + k > tok.size())
          throw FormatError("bad face row '" + line + "'", reader.line_number());
        std::vector<long long> face(k);
        for (std::size_t j = 0; j < k; ++j) {
          if (!parse_int(tok[pos + 1 + j], face[j]))
            throw FormatError("bad face index in '" + line + "'", reader.line_number());
        }
        data.faces.push_back(std::move(face));
      }
    }
  }
  if (reader.next(line)) {
    const std::size_t declared = data.header.elements.empty() ? 0 : data.header.elements.back().count;
    throw FormatError("PLY has extra data after the declared " + std::to_string(declared) + " " +
                          (data.header.elements.empty() ? std::string("entries")
                                                        : data.header.elements.back().name) +
                          " entries",
                      reader.line_number());
  }
  return data;
}

LoadedCloud cloud_from_points(std::vector<Vec3> pts, std::size_t width, std::size_t height) {
  LoadedCloud out;
  if (width > 0 || height > 0) {
    if (width * height != pts.size())
      throw FormatError("organized cloud declares " + std::to_string(width) + "x" +
                        std::to_string(height) + " but has " + std::to_string(pts.size()) +
                        " points");
    for (const Vec3& p : pts) out.rejected += p.allFinite() ? 0 : 1;
    out.cloud = PointCloud::organized_grid(width, height, std::move(pts));
  } else {
    std::vector<Vec3> kept;
    kept.reserve(pts.size());
    for (const Vec3& p : pts) {
      if (p.allFinite())
        kept.push_back(p);
      else
        ++out.rejected;
    }
    out.cloud = PointCloud::unorganized(std::move(kept));
  }
  if (out.rejected > 0) {
    warn(std::to_string(out.rejected) + " non-finite point(s) rejected while loading cloud");
  }
  return out;
}

Vec3 vec3_from_json(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 3) throw FormatError(std::string(what) + " must be 3 numbers");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

Mat3 mat3_from_json(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 9)
    throw FormatError(std::string(what) + " must be 9 numbers (row-major)");
  Mat3 m;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) m(r, c) = j[r * 3 + c].get<double>();
  return m;
}

json mat3_to_json(const Mat3& m) {
  json j = json::array();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) j.push_back(m(r, c));
  return j;
}

json vec3_to_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

}  // namespace

std::size_t PointCloud::valid_count() const {
  return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), 1));
}

PointCloud PointCloud::unorganized(std::vector<Vec3> pts) {
  PointCloud c;
  for (const Vec3& p : pts)
    if (!p.allFinite()) throw UsageError("unorganized cloud contains a non-finite point");
  c.valid.assign(pts.size(), 1);
  c.points = std::move(pts);
  return c;
}

PointCloud PointCloud::organized_grid(std::size_t width, std::size_t height,
                                      std::vector<Vec3> pts) {
  if (width * height != pts.size() || width == 0 || height == 0)
    throw UsageError("organized cloud needs width*height points");
  PointCloud c;
  c.width = width;
  c.height = height;
  c.valid.assign(pts.size(), 1);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (!pts[i].allFinite()) {
      pts[i].setZero();
      c.valid[i] = 0;
    }
  }
  c.points = std::move(pts);
  return c;
}

LoadedCloud parse_point_cloud(const std::string& text, CloudFormat format) {
  if (format == CloudFormat::ply) {
    PlyData ply = parse_ply(text);
    if (ply.header.elements.empty() || ply.header.elements.front().name != "vertex")
      throw FormatError("PLY cloud has no vertex element");
    return cloud_from_points(std::move(ply.vertices), ply.header.width, ply.header.height);
  }

  LineReader reader(text);
  std::string line;
  std::vector<Vec3> pts;
  bool first = true;
  while (reader.next(line)) {
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    Vec3 p;
    const bool numeric = fields.size() >= 3 && parse_double(fields[0], p.x()) &&
                         parse_double(fields[1], p.y()) && parse_double(fields[2], p.z());
    if (!numeric) {
      if (first) {  // header row
        first = false;
        continue;
      }
      throw FormatError("expected 'x,y,z' but got '" + line + "'", reader.line_number());
    }
    first = false;
    pts.push_back(p);
  }
  return cloud_from_points(std::move(pts), 0, 0);
}

LoadedCloud load_point_cloud(const fs::path& path, CloudFormat format) {
  return parse_point_cloud(read_file(path), format);
}

LoadedCloud load_point_cloud(const fs::path& path) {
  const std::string ext = lower_extension(path);
  if (ext == ".ply") return load_point_cloud(path, CloudFormat::ply);
  if (ext == ".csv") return load_point_cloud(path, CloudFormat::csv);
  throw UsageError("unknown point cloud extension '" + ext + "' (expected .ply or .csv)");
}

void save_point_cloud_ply(const PointCloud& cloud, const fs::path& path) {
  std::ostringstream out;
  out.precision(9);
  out << "ply\nformat ascii 1.0\n";
  if (cloud.organized()) {
    out << "comment width " << cloud.width << "\ncomment height " << cloud.height << "\n";
  }
  std::size_t count = cloud.organized() ? cloud.size() : cloud.valid_count();
  out << "element vertex " << count
      << "\nproperty float x\nproperty float y\nproperty float z\nend_header\n";
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (!cloud.valid[i]) {
      if (cloud.organized()) out << "nan nan nan\n";
      continue;
    }
    const Vec3& p = cloud.points[i];
    out << p.x() << ' ' << p.y() << ' ' << p.z() << '\n';
  }
  write_file(path, out.str());
}

void RigTransform::check() const {
  const double orth = (rotation * rotation.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff();
  if (!(orth <= 1e-9) || !(std::abs(rotation.determinant() - 1.0) <= 1e-9))
    throw UsageError("camera " + std::to_string(camera_id) +
                     ": rotation is not orthonormal with determinant +1");
  if (!translation.allFinite())
    throw UsageError("camera " + std::to_string(camera_id) + ": translation is not finite");
}

bool OrientedBox::contains(const Vec3& p) const {
  const Vec3 local = axes.transpose() * (p - center);
  return (local.cwiseAbs().array() <= half_extents.array()).all();
}

void DeviceModel::check() const {
  if (!((workspace.max - workspace.min).array() > 0.0).all())
    throw UsageError("workspace must have positive volume");
  for (const auto& b : boxes)
    if (!(b.half_extents.array() > 0.0).all())
      throw UsageError("device boxes must have positive extents");
}

RigConfig parse_rig_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("rig config: ") + e.what());
  }
  RigConfig rig;
  try {
    for (const auto& cam : j.value("cameras", json::array())) {
      RigTransform t;
      t.camera_id = cam.at("id").get<int>();
      t.rotation = mat3_from_json(cam.at("rotation"), "rotation");
      t.translation = vec3_from_json(cam.at("translation"), "translation");
      t.check();
      rig.cameras.push_back(t);
    }
    for (const auto& box : j.value("device_boxes", json::array())) {
      OrientedBox b;
      b.center = vec3_from_json(box.at("center"), "box center");
      b.half_extents = vec3_from_json(box.at("half_extents"), "box half_extents");
      if (box.contains("axes")) b.axes = mat3_from_json(box["axes"], "box axes");
      rig.device.boxes.push_back(b);
    }
    if (j.contains("workspace")) {
      rig.device.workspace.min = vec3_from_json(j["workspace"].at("min"), "workspace min");
      rig.device.workspace.max = vec3_from_json(j["workspace"].at("max"), "workspace max");
    } else {
      rig.device.workspace.min = Vec3::Constant(-1e6);
      rig.device.workspace.max = Vec3::Constant(1e6);
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("rig config: ") + e.what());
  }
  rig.device.check();
  return rig;
}

RigConfig load_rig_config(const fs::path& path) { return parse_rig_config(read_file(path)); }

std::string rig_config_to_json(const RigConfig& rig) {
  json j;
  j["cameras"] = json::array();
  for (const auto& c : rig.cameras) {
    j["cameras"].push_back({{"id", c.camera_id},
                            {"rotation", mat3_to_json(c.rotation)},
                            {"translation", vec3_to_json(c.translation)}});
  }
  j["device_boxes"] = json::array();
  for (const auto& b : rig.device.boxes) {
    j["device_boxes"].push_back({{"center", vec3_to_json(b.center)},
                                 {"half_extents", vec3_to_json(b.half_extents)},
                                 {"axes", mat3_to_json(b.axes)}});
  }
  j["workspace"] = {{"min", vec3_to_json(rig.device.workspace.min)},
                    {"max", vec3_to_json(rig.device.workspace.max)}};
  return j.dump(2);
}

PointCloud apply_rig_transform(const PointCloud& cloud, const RigTransform& t) {
  t.check();
  PointCloud out = cloud;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out.valid[i]) out.points[i] = t.rotation * cloud.points[i] + t.translation;
  }
  return out;
}

PointCloud subtract_background(const PointCloud& cloud, const DeviceModel& model) {
  auto keep = [&](const Vec3& p) {
    if (!model.workspace.contains(p)) return false;
    for (const auto& box : model.boxes)
      if (box.contains(p)) return false;
    return true;
  };
  PointCloud out;
  if (cloud.organized()) {
    out = cloud;
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (out.valid[i] && !keep(out.points[i])) {
        out.valid[i] = 0;
        out.points[i].setZero();
      }
    }
  } else {
    std::vector<Vec3> kept;
    for (std::size_t i = 0; i < cloud.size(); ++i)
      if (cloud.valid[i] && keep(cloud.points[i])) kept.push_back(cloud.points[i]);
    out = PointCloud::unorganized(std::move(kept));
  }
  if (out.valid_count() == 0) warn("background subtraction removed every point");
  return out;
}

PointCloud merge_clouds(const std::vector<PointCloud>& clouds) {
  std::vector<Vec3> pts;
  for (const auto& c : clouds)
    for (std::size_t i = 0; i < c.size(); ++i)
      if (c.valid[i]) pts.push_back(c.points[i]);
  return PointCloud::unorganized(std::move(pts));
}

namespace {

SurfaceMesh finish_mesh(const PointCloud& cloud, const std::vector<Triangle>& slot_triangles) {
  // Compact to the slots that appear in some triangle.
  std::vector<VertexId> slot_to_vertex(cloud.size(), -1);
  std::vector<Vec3> vertices;
  std::vector<Triangle> triangles;
  triangles.reserve(slot_triangles.size());
  for (const Triangle& t : slot_triangles) {
    Triangle r;
    for (int k = 0; k < 3; ++k) {
      auto& id = slot_to_vertex[static_cast<std::size_t>(t[k])];
      if (id < 0) {
        id = static_cast<VertexId>(vertices.size());
        vertices.push_back(cloud.points[static_cast<std::size_t>(t[k])]);
      }
      r[k] = id;
    }
    triangles.push_back(r);
  }
  return SurfaceMesh::from_triangles(std::move(vertices), std::move(triangles));
}

bool short_sides(const PointCloud& cloud, VertexId a, VertexId b, VertexId c, double max_len) {
  const auto& p = cloud.points;
  return (p[a] - p[b]).norm() <= max_len && (p[b] - p[c]).norm() <= max_len &&
         (p[c] - p[a]).norm() <= max_len;
}

SurfaceMesh triangulate_grid(const PointCloud& cloud, double max_len) {
  const std::size_t w = cloud.width;
  const std::size_t h = cloud.height;
  std::vector<Triangle> tris;
  tris.reserve(2 * w * h);
  auto slot = [&](std::size_t r, std::size_t c) { return static_cast<VertexId>(r * w + c); };
  auto add = [&](VertexId a, VertexId b, VertexId c) {
    if (short_sides(cloud, a, b, c, max_len)) tris.push_back({a, b, c});
  };
  for (std::size_t r = 0; r + 1 < h; ++r) {
    for (std::size_t c = 0; c + 1 < w; ++c) {
      const VertexId a = slot(r, c), b = slot(r, c + 1);
      const VertexId d = slot(r + 1, c), e = slot(r + 1, c + 1);
      const bool va = cloud.valid[a], vb = cloud.valid[b], vd = cloud.valid[d], ve = cloud.valid[e];
      const int count = va + vb + vd + ve;
      if (count == 4) {
        // Split along the shorter diagonal.
        const auto& p = cloud.points;
        if ((p[a] - p[e]).squaredNorm() <= (p[b] - p[d]).squaredNorm()) {
          add(a, d, e);
          add(a, e, b);
        } else {
          add(a, d, b);
          add(b, d, e);
        }
      } else if (count == 3) {
        if (!va) add(b, d, e);
        else if (!vb) add(a, d, e);
        else if (!vd) add(a, e, b);
        else add(a, d, b);
      }
    }
  }
  return finish_mesh(cloud, tris);
}

// Local fan triangulation: each point is connected to its angularly sorted
// neighbors after projecting them onto the local PCA plane.
SurfaceMesh triangulate_knn(const PointCloud& cloud, double max_len, std::size_t k) {
  std::vector<VertexId> slots;
  for (std::size_t i = 0; i < cloud.size(); ++i)
    if (cloud.valid[i]) slots.push_back(static_cast<VertexId>(i));

  const double cell = max_len;
  auto key = [&](const Vec3& p) {
    return std::array<long long, 3>{static_cast<long long>(std::floor(p.x() / cell)),
                                    static_cast<long long>(std::floor(p.y() / cell)),
                                    static_cast<long long>(std::floor(p.z() / cell))};
  };
  std::map<std::array<long long, 3>, std::vector<VertexId>> grid;
  for (VertexId s : slots) grid[key(cloud.points[s])].push_back(s);

  std::vector<Triangle> tris;
  std::vector<std::pair<double, VertexId>> cand;
  for (VertexId s : slots) {
    const Vec3& p = cloud.points[s];
    const auto kc = key(p);
    cand.clear();
    for (long long dx = -1; dx <= 1; ++dx)
      for (long long dy = -1; dy <= 1; ++dy)
        for (long long dz = -1; dz <= 1; ++dz) {
          auto it = grid.find({kc[0] + dx, kc[1] + dy, kc[2] + dz});
          if (it == grid.end()) continue;
          for (VertexId q : it->second) {
            if (q == s) continue;
            const double d = (cloud.points[q] - p).norm();
            if (d <= max_len && d > 0.0) cand.emplace_back(d, q);
          }
        }
    if (cand.size() < 2) continue;
    std::sort(cand.begin(), cand.end());
    if (cand.size() > k) cand.resize(k);

    Vec3 mean = p;
    for (const auto& [d, q] : cand) mean += cloud.points[q];
    mean /= static_cast<double>(cand.size() + 1);
    Mat3 cov = (p - mean) * (p - mean).transpose();
    for (const auto& [d, q] : cand) cov += (cloud.points[q] - mean) * (cloud.points[q] - mean).transpose();
    Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
    const Vec3 u = eig.eigenvectors().col(2);
    const Vec3 v = eig.eigenvectors().col(1);

    std::vector<std::pair<double, VertexId>> ring;
    for (const auto& [d, q] : cand) {
      const Vec3 r = cloud.points[q] - p;
      ring.emplace_back(std::atan2(r.dot(v), r.dot(u)), q);
    }
    std::sort(ring.begin(), ring.end());
    constexpr double kPi = 3.14159265358979323846;
    for (std::size_t i = 0; i < ring.size(); ++i) {
      const auto& [a0, q0] = ring[i];
      const auto& [a1, q1] = ring[(i + 1) % ring.size()];
      double gap = a1 - a0;
      if (gap <= 0.0) gap += 2.0 * kPi;
      if (ring.size() > 2 && gap < kPi * 0.5 && short_sides(cloud, s, q0, q1, max_len)) {
        Triangle t{s, q0, q1};
        std::sort(t.begin(), t.end());
        tris.push_back(t);
      }
    }
  }
  std::sort(tris.begin(), tris.end());
  tris.erase(std::unique(tris.begin(), tris.end()), tris.end());
  return finish_mesh(cloud, tris);
}

SurfaceMesh drop_small_components(SurfaceMesh mesh, std::size_t min_size) {
  if (min_size <= 1) return mesh;
  const Components comps = connected_components(mesh);
  std::vector<std::size_t> size(static_cast<std::size_t>(comps.count), 0);
  for (int l : comps.label) ++size[static_cast<std::size_t>(l)];
  std::vector<char> keep(mesh.num_vertices());
  bool all = true;
  for (std::size_t v = 0; v < keep.size(); ++v) {
    keep[v] = size[static_cast<std::size_t>(comps.label[v])] >= min_size;
    all = all && keep[v];
  }
  return all ? mesh : induced_submesh(mesh, keep).mesh;
}

}  // namespace

SurfaceMesh triangulate(const PointCloud& cloud, const TriangulationParams& params) {
  if (cloud.valid_count() == 0) throw UsageError("triangulate: cloud has no valid points");
  if (!(params.max_edge_length > 0.0)) throw UsageError("triangulate: max_edge_length must be > 0");
  if (params.mode == TriangulationMode::grid) {
    if (!cloud.organized())
      throw UsageError("triangulate: grid mode requires an organized cloud (width/height)");
    return drop_small_components(triangulate_grid(cloud, params.max_edge_length),
                                 params.min_component_size);
  }
  return drop_small_components(
      triangulate_knn(cloud, params.max_edge_length, std::max<std::size_t>(params.knn, 2)),
      params.min_component_size);
}

namespace {

SurfaceMesh mesh_from_faces(std::vector<Vec3> vertices,
                            const std::vector<std::vector<long long>>& faces,
                            std::size_t face_line_offset = 0) {
  std::vector<Triangle> tris;
  const auto n = static_cast<long long>(vertices.size());
  for (std::size_t f = 0; f < faces.size(); ++f) {
    const auto& face = faces[f];
    for (long long idx : face) {
      if (idx < 0 || idx >= n) {
        throw FormatError("face " + std::to_string(f) + " references vertex " +
                              std::to_string(idx) + " but the mesh has " + std::to_string(n) +
                              " vertices",
                          face_line_offset ? face_line_offset + f : 0);
      }
    }
    if (face.size() < 3) throw FormatError("face " + std::to_string(f) + " has fewer than 3 vertices");
    for (std::size_t k = 1; k + 1 < face.size(); ++k) {
      tris.push_back({static_cast<VertexId>(face[0]), static_cast<VertexId>(face[k]),
                      static_cast<VertexId>(face[k + 1])});
    }
  }
  for (const Vec3& p : vertices)
    if (!p.allFinite()) throw FormatError("mesh contains a non-finite vertex");
  return SurfaceMesh::from_triangles(std::move(vertices), std::move(tris));
}

SurfaceMesh parse_off(const std::string& text) {
  // Strip comments, then read as a token stream.
  std::string clean;
  {
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      clean += line + '\n';
    }
  }
  std::istringstream in(clean);
  std::string magic;
  if (!(in >> magic) || magic != "OFF") throw FormatError("missing 'OFF' magic", 1);
  long long nv = 0, nf = 0, ne = 0;
  if (!(in >> nv >> nf >> ne) || nv < 0 || nf < 0) throw FormatError("bad OFF counts line", 2);
  std::vector<Vec3> vertices(static_cast<std::size_t>(nv));
  for (auto& p : vertices) {
    if (!(in >> p.x() >> p.y() >> p.z()))
      throw FormatError("OFF declares " + std::to_string(nv) + " vertices but fewer are present");
  }
  std::vector<std::vector<long long>> faces(static_cast<std::size_t>(nf));
  for (auto& face : faces) {
    std::size_t k = 0;
    if (!(in >> k))
      throw FormatError("OFF declares " + std::to_string(nf) + " faces but fewer are present");
    face.resize(k);
    for (auto& idx : face)
      if (!(in >> idx)) throw FormatError("truncated OFF face");
  }
  return mesh_from_faces(std::move(vertices), faces);
}

}  // namespace

SurfaceMesh parse_mesh(const std::string& text, MeshFormat format) {
  if (format == MeshFormat::off) return parse_off(text);
  PlyData ply = parse_ply(text);
  return mesh_from_faces(std::move(ply.vertices), ply.faces);
}

SurfaceMesh load_mesh(const fs::path& path, MeshFormat format) {
  return parse_mesh(read_file(path), format);
}

SurfaceMesh load_mesh(const fs::path& path) {
  const std::string ext = lower_extension(path);
  if (ext == ".off") return load_mesh(path, MeshFormat::off);
  if (ext == ".ply") return load_mesh(path, MeshFormat::ply);
  throw UsageError("unknown mesh extension '" + ext + "' (expected .off or .ply)");
}

void save_mesh(const SurfaceMesh& mesh, const fs::path& path) {
  std::ostringstream out;
  out.precision(17);
  const std::string ext = lower_extension(path);
  if (ext == ".off") {
    out << "OFF\n" << mesh.num_vertices() << ' ' << mesh.num_triangles() << ' ' << mesh.num_edges() << '\n';
    for (const Vec3& p : mesh.vertices()) out << p.x() << ' ' << p.y() << ' ' << p.z() << '\n';
    for (const Triangle& t : mesh.triangles()) out << "3 " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
  } else if (ext == ".ply") {
    out << "ply\nformat ascii 1.0\nelement vertex " << mesh.num_vertices()
        << "\nproperty double x\nproperty double y\nproperty double z\nelement face "
        << mesh.num_triangles() << "\nproperty list uchar int vertex_indices\nend_header\n";
    for (const Vec3& p : mesh.vertices()) out << p.x() << ' ' << p.y() << ' ' << p.z() << '\n';
    for (const Triangle& t : mesh.triangles()) out << "3 " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
  } else {
    throw UsageError("unknown mesh extension '" + ext + "'");
  }
  write_file(path, out.str());
}

}  // namespace geotrack
