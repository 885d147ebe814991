#include "geotrack/bench.hpp"
#include "geotrack/descriptor.hpp"
#include "geotrack/error.hpp"
#include "geotrack/eval.hpp"
#include "geotrack/geodesic.hpp"
#include "geotrack/ingest.hpp"
#include "geotrack/mht.hpp"
#include "geotrack/occlusion.hpp"

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace geotrack;

namespace {

using Points = py::array_t<double, py::array::c_style | py::array::forcecast>;

std::vector<Vec3> to_points(const Points& a) {
  if (a.ndim() != 2 || a.shape(1) != 3) throw UsageError("expected an (n, 3) array");
  std::vector<Vec3> out(static_cast<std::size_t>(a.shape(0)));
  auto r = a.unchecked<2>();
  for (py::ssize_t i = 0; i < a.shape(0); ++i) out[i] = Vec3(r(i, 0), r(i, 1), r(i, 2));
  return out;
}

py::array_t<double> from_points(std::span<const Vec3> pts) {
  py::array_t<double> out({static_cast<py::ssize_t>(pts.size()), py::ssize_t{3}});
  auto w = out.mutable_unchecked<2>();
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (int k = 0; k < 3; ++k) w(i, k) = pts[i][k];
  return out;
}

// (T, 21, 3) <-> joint states
std::vector<JointState> to_states(const Points& a) {
  if (a.ndim() != 3 || a.shape(1) != static_cast<py::ssize_t>(kNumJoints) || a.shape(2) != 3)
    throw UsageError("expected a (frames, 21, 3) array");
  std::vector<JointState> out(static_cast<std::size_t>(a.shape(0)));
  auto r = a.unchecked<3>();
  for (py::ssize_t t = 0; t < a.shape(0); ++t)
    for (std::size_t j = 0; j < kNumJoints; ++j) out[t][j] = Vec3(r(t, j, 0), r(t, j, 1), r(t, j, 2));
  return out;
}

py::array_t<double> from_states(std::span<const JointState> states) {
  py::array_t<double> out({static_cast<py::ssize_t>(states.size()), static_cast<py::ssize_t>(kNumJoints),
                           py::ssize_t{3}});
  auto w = out.mutable_unchecked<3>();
  for (std::size_t t = 0; t < states.size(); ++t)
    for (std::size_t j = 0; j < kNumJoints; ++j)
      for (int k = 0; k < 3; ++k) w(t, j, k) = states[t][j][k];
  return out;
}

py::array_t<double> from_state(const JointState& s) {
  std::vector<Vec3> pts(s.joints.begin(), s.joints.end());
  return from_points(pts);
}

JointState to_state(const Points& a) {
  const std::vector<Vec3> pts = to_points(a);
  if (pts.size() != kNumJoints) throw UsageError("expected a (21, 3) array");
  JointState s;
  std::copy(pts.begin(), pts.end(), s.joints.begin());
  return s;
}

}  // namespace

PYBIND11_MODULE(_geotrack, m) {
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<UsageError>(m, "UsageError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  m.attr("joint_names") = [] {
    py::list names;
    for (auto n : kJointNames) names.append(std::string(n));
    return names;
  }();
  m.attr("eval_radii") = std::vector<double>(kEvalRadii.begin(), kEvalRadii.end());

  py::class_<SurfaceMesh>(m, "Mesh")
      .def(py::init([](const Points& v, const std::vector<Triangle>& t) {
             return SurfaceMesh::from_triangles(to_points(v), t);
           }),
           py::arg("vertices"), py::arg("triangles"))
      .def_static("from_edges",
                  [](const Points& v, const std::vector<std::pair<VertexId, VertexId>>& e) {
                    return SurfaceMesh::from_edges(to_points(v), e);
                  })
      .def_property_readonly("num_vertices", &SurfaceMesh::num_vertices)
      .def_property_readonly("num_edges", &SurfaceMesh::num_edges)
      .def_property_readonly("num_triangles", &SurfaceMesh::num_triangles)
      .def_property_readonly("vertices", [](const SurfaceMesh& s) { return from_points(s.vertices()); })
      .def_property_readonly("triangles",
                             [](const SurfaceMesh& s) {
                               return std::vector<Triangle>(s.triangles().begin(), s.triangles().end());
                             })
      .def_property_readonly("edges",
                             [](const SurfaceMesh& s) {
                               std::vector<std::tuple<VertexId, VertexId, double>> out;
                               for (const Edge& e : s.edges()) out.emplace_back(e.a, e.b, e.length);
                               return out;
                             })
      .def("__repr__", [](const SurfaceMesh& s) {
        return "<Mesh " + std::to_string(s.num_vertices()) + " vertices, " + std::to_string(s.num_edges()) +
               " edges>";
      });

  m.def("load_mesh", py::overload_cast<const std::filesystem::path&>(&load_mesh));
  m.def("save_mesh", &save_mesh);
  m.def(
      "triangulate",
      [](const Points& pts, std::size_t width, std::size_t height, double max_edge) {
        PointCloud c;
        c.points = to_points(pts);
        c.valid.assign(c.points.size(), 1);
        for (std::size_t i = 0; i < c.points.size(); ++i)
          if (!c.points[i].allFinite()) c.valid[i] = 0, c.points[i].setZero();
        c.width = width;
        c.height = height;
        TriangulationParams p;
        p.max_edge_length = max_edge;
        if (width == 0) p.mode = TriangulationMode::knn_projection;
        return triangulate(c, p);
      },
      py::arg("points"), py::arg("width") = 0, py::arg("height") = 0, py::arg("max_edge") = 0.05);

  m.def("geodesic_distances",
        [](const SurfaceMesh& mesh, VertexId source) { return shortest_distances(mesh, source).distances; });
  m.def("mesh_center", &mesh_center);

  py::class_<AnchorSet>(m, "Anchors")
      .def_readonly("vertices", &AnchorSet::vertices)
      .def_readonly("labels", &AnchorSet::labels)
      .def_property_readonly("positions", [](const AnchorSet& a) { return from_points(a.positions); })
      .def("__len__", &AnchorSet::size);
  m.def("detect_anchors", &detect_anchors, py::arg("mesh"), py::arg("radius") = kDefaultAnchorRadius);

  m.def("descriptors", [](const SurfaceMesh& mesh, const AnchorSet& anchors) {
    const DescriptorTable t(mesh, anchors);
    py::array_t<double> out({static_cast<py::ssize_t>(t.rows()), static_cast<py::ssize_t>(t.slots())});
    auto w = out.mutable_unchecked<2>();
    for (std::size_t v = 0; v < t.rows(); ++v)
      for (std::size_t s = 0; s < t.slots(); ++s) w(v, s) = t.value(static_cast<VertexId>(v), s);
    return out;
  });
  m.def(
      "match_vertices",
      [](const SurfaceMesh& a, const AnchorSet& aa, const SurfaceMesh& b, const AnchorSet& ba, double e_max) {
        MatchOptions opt;
        opt.e_max = e_max;
        const Correspondence c = match_vertices(a, aa, b, ba, opt);
        return std::vector<std::pair<VertexId, VertexId>>(c.pairs.begin(), c.pairs.end());
      },
      py::arg("src"), py::arg("src_anchors"), py::arg("dst"), py::arg("dst_anchors"), py::arg("e_max") = 0.10);
  m.def("gmds_distance", [](const SurfaceMesh& a, const SurfaceMesh& b) { return gmds_distance(a, b).distance; });

  m.def("occlude", [](const SurfaceMesh& mesh, double radius) {
    return apply_occlusion(mesh, body_center(mesh), radius).mesh;
  });

  py::class_<SyntheticBody>(m, "SyntheticBody")
      .def(py::init([](const std::string& motion, const std::string& speed, std::size_t n_frames, double pitch,
                       std::uint64_t seed) {
             SyntheticSpec s;
             s.motion = parse_motion_type(motion);
             s.speed = parse_speed(speed);
             s.n_frames = n_frames;
             s.pitch = pitch;
             s.seed = seed;
             return SyntheticBody(s);
           }),
           py::arg("motion") = "upper", py::arg("speed") = "normal", py::arg("n_frames") = 200,
           py::arg("pitch") = 0.007, py::arg("seed") = 7)
      .def("skeleton", [](const SyntheticBody& b, std::size_t f) { return from_state(b.skeleton(f)); })
      .def("mesh", &SyntheticBody::mesh)
      .def_property_readonly("n_frames", [](const SyntheticBody& b) { return b.spec().n_frames; });

  m.def(
      "track",
      [](const std::vector<SurfaceMesh>& frames, const Points& skeleton0, const Points& reference,
         const std::string& config_json) {
        const MotionLibrary lib = build_motion_library(to_states(reference));
        const TrackerConfig cfg = config_json.empty() ? TrackerConfig{} : tracker_config_from_json(config_json);
        TrackedSequence out;
        {
          py::gil_scoped_release release;
          out = track_sequence(frames, to_state(skeleton0), lib, cfg);
        }
        return from_states(out.joints);
      },
      py::arg("frames"), py::arg("skeleton0"), py::arg("reference"), py::arg("config_json") = "");
  m.def("reference_motion", [](const std::string& motion, std::size_t period) {
    return from_states(reference_motion(parse_motion_type(motion), period));
  }, py::arg("motion") = "upper", py::arg("period") = 60);
  m.def("default_tracker_config", [] { return tracker_config_to_json(TrackerConfig{}); });

  m.def("per_occlusion_error", [](const Points& est, const Points& truth) {
    return per_occlusion_error(to_states(est), to_states(truth));
  });
  m.def("evaluate", [](const std::map<double, Points>& runs, const Points& truth) {
    RunMap rm;
    for (const auto& [r, a] : runs) rm[r] = to_states(a);
    const EvalReport rep = evaluate_runs(rm, to_states(truth));
    py::dict d;
    d["radii"] = rep.radii;
    d["r_or"] = rep.r_or;
    d["r_or_std"] = rep.r_or_std;
    d["r_i"] = std::vector<double>(rep.r_i.begin(), rep.r_i.end());
    d["r_i_std"] = std::vector<double>(rep.r_i_std.begin(), rep.r_i_std.end());
    return d;
  });
}
