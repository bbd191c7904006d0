#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <Eigen/Geometry>

#include "leapvo/dynfilter.hpp"
#include "leapvo/errors.hpp"
#include "leapvo/eval.hpp"
#include "leapvo/pipeline.hpp"
#include "leapvo/probmodel.hpp"
#include "leapvo/sampling.hpp"
#include "leapvo/synth.hpp"

namespace py = pybind11;
using namespace leapvo;

namespace {

using Rows = Eigen::Matrix<double, Eigen::Dynamic, 8, Eigen::RowMajor>;

// rows of (timestamp, tx, ty, tz, qx, qy, qz, qw)
Rows to_rows(const Trajectory& t) {
  Rows out(static_cast<Eigen::Index>(t.size()), 8);
  for (size_t i = 0; i < t.size(); ++i) {
    const Eigen::Quaterniond q(t[i].pose.rotation);
    const auto r = static_cast<Eigen::Index>(i);
    out.row(r) << t[i].timestamp, t[i].pose.translation.x(), t[i].pose.translation.y(), t[i].pose.translation.z(),
        q.x(), q.y(), q.z(), q.w();
  }
  return out;
}

Trajectory from_rows(const Rows& rows) {
  Trajectory t;
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    Pose p;
    p.translation = rows.row(i).segment<3>(1).transpose();
    p.rotation = Eigen::Quaterniond(rows(i, 7), rows(i, 4), rows(i, 5), rows(i, 6)).normalized().toRotationMatrix();
    t.push_back({rows(i, 0), p});
  }
  return t;
}

Eigen::MatrixX2d pixels(const QuerySet& q) {
  Eigen::MatrixX2d out(static_cast<Eigen::Index>(q.size()), 2);
  for (size_t i = 0; i < q.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = q[i].pixel.transpose();
  return out;
}

std::vector<Vec2> points(const Eigen::MatrixX2d& m) {
  std::vector<Vec2> out;
  for (Eigen::Index i = 0; i < m.rows(); ++i) out.push_back(m.row(i).transpose());
  return out;
}

VoConfig vo_config(const std::string& config_json) {
  VoConfig c;
  if (!config_json.empty()) apply_json(c, nlohmann::json::parse(config_json));
  c.validate();
  return c;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Sparse visual odometry core";

  static py::exception<Error> error(m, "LeapvoError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::set_error(error, e.what());
    }
  });

  m.def("se3_exp", [](const Twist& xi) { return se3_exp(xi).matrix(); }, py::arg("xi"),
        "4x4 transform of a twist (omega, v)");
  m.def("se3_log", [](const Mat4& t) { return se3_log(Pose::FromMatrix(t)); }, py::arg("transform"));

  m.def("build_scale_matrix", &build_scale_matrix, py::arg("features"), py::arg("sigma") = kDefaultSigmaFloor);
  m.def("cauchy_logpdf", &cauchy_logpdf, py::arg("a"), py::arg("mu"), py::arg("sigma"));
  m.def("track_nll",
        [](const Eigen::MatrixX2d& traj, const Eigen::MatrixX2d& truth, const Eigen::MatrixXd& sa,
           const Eigen::MatrixXd& sb) {
          TrackNllGradient g;
          const double v = track_nll(traj, truth, sa, sb, &g);
          return py::make_tuple(v, g.d_trajectory, g.d_sigma_a, g.d_sigma_b);
        },
        py::arg("trajectory"), py::arg("truth"), py::arg("sigma_a"), py::arg("sigma_b"),
        "NLL and its gradients w.r.t. the trajectory and both scale matrices");
  m.def("bce_loss", [](const Eigen::VectorXd& p, const Eigen::VectorXd& t) { return bce_loss(p, t); },
        py::arg("pred"), py::arg("truth"));

  m.def("sample_keypoints",
        [](const GrayImage& image, int pool, int k, int n) { return pixels(sample_keypoints(image, pool, k, n)); },
        py::arg("image"), py::arg("pool") = 4, py::arg("k") = 8, py::arg("n") = 256);

  m.def("fit_dominant_motion",
        [](const Eigen::MatrixX2d& x1, const Eigen::MatrixX2d& x2) { return fit_dominant_motion(points(x1), points(x2)); },
        py::arg("x1"), py::arg("x2"));
  m.def("sampson_distance",
        [](const Mat3& f, const Eigen::MatrixX2d& x1, const Eigen::MatrixX2d& x2) {
          Eigen::VectorXd d(x1.rows());
          for (Eigen::Index i = 0; i < x1.rows(); ++i)
            d[i] = sampson_distance(f, x1.row(i).transpose(), x2.row(i).transpose());
          return d;
        },
        py::arg("f"), py::arg("x1"), py::arg("x2"));

  m.def("generate_scene",
        [](const std::string& config_json, std::uint64_t seed) {
          const SceneConfig c =
              config_json.empty() ? SceneConfig{} : config_from_json(nlohmann::json::parse(config_json));
          return scene_to_json(generate_scene(c, seed)).dump();
        },
        py::arg("config_json") = "", py::arg("seed") = 0, "Scene JSON text");
  m.def("scene_trajectory",
        [](const std::string& scene_json) { return to_rows(scene_from_json(nlohmann::json::parse(scene_json)).trajectory()); },
        py::arg("scene_json"));
  m.def("render_images",
        [](const std::string& scene_json) { return render_images(scene_from_json(nlohmann::json::parse(scene_json))); },
        py::arg("scene_json"));

  m.def("run_sequence",
        [](const std::string& scene_json, const std::string& config_json) {
          const SequenceResult r = run_sequence(scene_from_json(nlohmann::json::parse(scene_json)), vo_config(config_json));
          return to_rows(r.trajectory);
        },
        py::arg("scene_json"), py::arg("config_json") = "", "Estimated trajectory as TUM rows");
  m.def("run_images",
        [](const std::string& image_dir, const Eigen::Vector4d& k, const std::string& config_json) {
          const SequenceResult r =
              run_sequence(std::filesystem::path(image_dir), Intrinsics{k[0], k[1], k[2], k[3]}, vo_config(config_json));
          return to_rows(r.trajectory);
        },
        py::arg("image_dir"), py::arg("intrinsics"), py::arg("config_json") = "");

  m.def("ate_rmse", [](const Rows& est, const Rows& gt) { return ate_rmse(from_rows(est), from_rows(gt)); },
        py::arg("est"), py::arg("gt"));
  m.def("rpe",
        [](const Rows& est, const Rows& gt, double delta) {
          const RpeResult r = rpe(from_rows(est), from_rows(gt), delta);
          return py::make_tuple(r.translation, r.rotation);
        },
        py::arg("est"), py::arg("gt"), py::arg("delta") = 1.0, "(translation, rotation) errors");
  m.def("read_tum", [](const std::string& path) { return to_rows(read_tum(std::filesystem::path(path))); },
        py::arg("path"));
  m.def("write_tum", [](const std::string& path, const Rows& t) { write_tum(std::filesystem::path(path), from_rows(t)); },
        py::arg("path"), py::arg("trajectory"));
}
