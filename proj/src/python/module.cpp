#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "usinr/config.hpp"
#include "usinr/error.hpp"
#include "usinr/gating.hpp"
#include "usinr/geometry.hpp"
#include "usinr/mesh_io.hpp"
#include "usinr/metrics.hpp"
#include "usinr/pipeline.hpp"
#include "usinr/recon.hpp"
#include "usinr/slicefilter.hpp"

namespace py = pybind11;
using namespace usinr;

namespace {

using Points = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
using Faces = Eigen::Matrix<int, Eigen::Dynamic, 3, Eigen::RowMajor>;

std::vector<Vec3> to_points(const Points& p) {
  std::vector<Vec3> out(p.rows());
  for (Eigen::Index i = 0; i < p.rows(); ++i) out[i] = p.row(i).transpose();
  return out;
}

Points from_points(const std::vector<Vec3>& p) {
  Points out(p.size(), 3);
  for (size_t i = 0; i < p.size(); ++i) out.row(i) = p[i].transpose();
  return out;
}

TriangleMesh to_mesh(const Points& v, const Faces& f) {
  TriangleMesh m;
  m.vertices = to_points(v);
  for (Eigen::Index i = 0; i < f.rows(); ++i) m.triangles.push_back({f(i, 0), f(i, 1), f(i, 2)});
  m.validate();
  return m;
}

py::tuple from_mesh(const TriangleMesh& m) {
  Faces f(m.triangles.size(), 3);
  for (size_t i = 0; i < m.triangles.size(); ++i) f.row(i) << m.triangles[i][0], m.triangles[i][1], m.triangles[i][2];
  return py::make_tuple(from_points(m.vertices), f);
}

LabelRaster to_label(py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast> a) {
  if (a.ndim() != 2) throw DataError("label image must be 2-D (rows, columns)");
  LabelRaster r(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
  std::copy(a.data(), a.data() + a.size(), r.data.begin());
  return r;
}

py::array_t<std::uint8_t> from_label(const LabelRaster& r) {
  py::array_t<std::uint8_t> a({r.height, r.width});
  std::copy(r.data.begin(), r.data.end(), a.mutable_data());
  return a;
}

py::dict report_row(const MeshReportRow& r) {
  py::dict d;
  d["mesh"] = r.mesh;
  d["laplacian_average"] = r.laplacian_average;
  d["laplacian_median"] = r.laplacian_median;
  d["vertex_count"] = r.vertex_count;
  d["dice"] = r.dice;
  d["radial_mean_mm"] = r.radial_mean_mm;
  d["radial_max_mm"] = r.radial_max_mm;
  return d;
}

PipelineConfig make_config(const std::optional<std::string>& path, const std::map<std::string, std::string>& set) {
  PipelineConfig cfg = path ? load_config(*path) : PipelineConfig();
  for (const auto& [k, v] : set) apply_override(cfg, k + "=" + v);
  cfg.validate();
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_usinr, m) {
  m.doc() = "Robotic ultrasound INR aorta reconstruction (C++ core).";

  auto base = py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  (void)base;

  py::class_<PipelineConfig>(m, "Config")
      .def(py::init([](std::optional<std::string> path, std::map<std::string, std::string> set) {
             return make_config(path, set);
           }),
           py::arg("path") = py::none(), py::arg("set") = std::map<std::string, std::string>{})
      .def("set",
           [](PipelineConfig& c, const std::string& key, const std::string& value) {
             PipelineConfig next = c;
             apply_override(next, key + "=" + value);
             next.validate();
             c = next;
           })
      .def("get",
           [](PipelineConfig& c, const std::string& key) {
             for (const auto& k : config_keys(c))
               if (k.name == key) return k.get();
             throw ConfigError("unknown configuration key '" + key + "'");
           })
      .def("dump", [](const PipelineConfig& c) { return dump_config(c); })
      .def("keys", [](PipelineConfig& c) {
        std::vector<std::string> out;
        for (const auto& k : config_keys(c)) out.push_back(k.name);
        return out;
      });

  m.def("simulate", [](const PipelineConfig& c, const std::string& bundle) { return cmd_simulate(c, bundle); },
        py::arg("config"), py::arg("bundle_dir"));

  auto stage = [&](const char* name, std::string (*fn)(const PipelineConfig&, const RunLayout&)) {
    m.def(
        name,
        [fn](const PipelineConfig& c, const std::string& run, const std::string& bundle) {
          return fn(c, RunLayout(run, bundle));
        },
        py::arg("config"), py::arg("run_dir"), py::arg("bundle_dir") = "");
  };
  stage("filter", cmd_filter);
  stage("gate", cmd_gate);
  stage("train", cmd_train);
  stage("mesh", cmd_mesh);
  stage("baseline", cmd_baseline);
  stage("metrics", cmd_metrics);

  m.def(
      "pipeline",
      [](const PipelineConfig& c, const std::string& run, const std::string& bundle) {
        py::list rows;
        for (const auto& r : cmd_pipeline(c, RunLayout(run, bundle), true)) rows.append(report_row(r));
        return rows;
      },
      py::arg("config"), py::arg("run_dir"), py::arg("bundle_dir") = "");

  m.def(
      "calibration_matrix",
      [](double theta, double r, double d, int width_px, int height_px) {
        ProbeGeometry g{theta, r, d, width_px, height_px};
        return Eigen::Matrix4d(calibration_matrix(g));
      },
      py::arg("theta") = 0.7, py::arg("r") = 30.0, py::arg("d") = 100.0, py::arg("width_px") = 96,
      py::arg("height_px") = 96);

  m.def("largest_connected_component", [](py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast> a) {
    return from_label(largest_connected_component(to_label(a)));
  });
  m.def("gate_slices",
        [](const std::vector<double>& radii, int window, double tolerance) {
          std::vector<bool> out;
          for (const auto& v : gate_slices(radii, window, tolerance)) out.push_back(v.accepted);
          return out;
        },
        py::arg("radii"), py::arg("window") = 10, py::arg("tolerance") = 0.2);

  m.def(
      "gate_signal",
      [](const std::vector<double>& signal, double band_mm) {
        GatingParams p;
        p.band_mm = band_mm;
        const GatingResult g = gate_signal(signal, p);
        py::dict d;
        d["minima"] = g.minima_indices;
        d["selected"] = g.selected_indices;
        d["flat"] = g.flat;
        return d;
      },
      py::arg("signal"), py::arg("band_mm") = -1.0);

  m.def("convex_hull_2d", [](const Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor>& p) {
    std::vector<Eigen::Vector2d> pts(p.rows());
    for (Eigen::Index i = 0; i < p.rows(); ++i) pts[i] = p.row(i).transpose();
    return convex_hull_2d(pts);
  });
  m.def(
      "furthest_point_sampling",
      [](const Points& p, size_t n, size_t seed_index) { return furthest_point_sampling(to_points(p), n, seed_index); },
      py::arg("points"), py::arg("n"), py::arg("seed_index") = 0);
  m.def(
      "estimate_normals",
      [](const Points& p, int k, double slab_mm) {
        NormalEstimationParams np;
        np.k = k;
        np.slab_thickness_mm = slab_mm;
        return from_points(estimate_normals(to_points(p), np));
      },
      py::arg("points"), py::arg("k") = 16, py::arg("slab_thickness_mm") = 2.0);

  m.def(
      "poisson_surface",
      [](const Points& p, const Points& n, double resolution_mm) {
        PoissonParams pp;
        pp.grid_resolution_mm = resolution_mm;
        const PoissonResult r = poisson_reconstruct(to_points(p), to_points(n), pp);
        py::tuple mesh = from_mesh(marching_cubes(r.field, r.iso_value));
        return py::make_tuple(mesh[0], mesh[1], r.relative_residual);
      },
      py::arg("points"), py::arg("normals"), py::arg("resolution_mm") = 1.0);

  m.def("laplacian_roughness", [](const Points& v, const Faces& f) {
    const RoughnessReport r = mesh_laplacian_roughness(to_mesh(v, f));
    py::dict d;
    d["average"] = r.laplacian_average;
    d["median"] = r.laplacian_median;
    d["evaluated"] = r.vertex_count;
    d["excluded"] = r.excluded_count;
    return d;
  });
  m.def("is_closed", [](const Points& v, const Faces& f) { return to_mesh(v, f).is_closed(); });
  m.def("read_ply", [](const std::string& path) { return from_mesh(read_ply(path)); });
  m.def("write_ply", [](const std::string& path, const Points& v, const Faces& f) { write_ply(path, to_mesh(v, f)); });
}
