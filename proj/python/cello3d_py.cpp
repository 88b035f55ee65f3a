// Python bindings. Clouds cross the boundary as (N, 3) float arrays, poses as
// 4 x 4 homogeneous matrices, twists as [u; omega].

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "cello/censi.hpp"
#include "cello/cello_model.hpp"
#include "cello/covariance_sampling.hpp"
#include "cello/dataset.hpp"
#include "cello/descriptors.hpp"
#include "cello/evaluation.hpp"
#include "cello/manifest.hpp"
#include "cello/registration.hpp"
#include "cello/scene.hpp"
#include "cello/se3.hpp"

namespace py = pybind11;
using namespace cello;

namespace {

using RowCloud = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

PointCloud to_cloud(const RowCloud& points) { return PointCloud(points.transpose()); }

RowCloud from_cloud(const PointCloud& cloud) { return cloud.points().transpose(); }

RigidTransform to_pose(const Eigen::Matrix4d& m) {
  return RigidTransform::checked(m.topLeftCorner<3, 3>(), m.topRightCorner<3, 1>(), 1e-6);
}

IcpConfig icp_config(int knn, double trim_ratio, int max_iterations, double subsample_ratio,
                     std::uint64_t filter_seed) {
  IcpConfig c;
  c.knn = knn;
  c.trim_ratio = trim_ratio;
  c.max_iterations = max_iterations;
  c.subsample_ratio = subsample_ratio;
  c.filter_seed = filter_seed;
  c.validate();
  return c;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Covariance estimation for 3D point-to-plane ICP";
  m.attr("__version__") = kToolVersion;

  m.def("exp_map", [](const Vector6d& xi) { return exp_map(Twist(xi)).matrix(); }, py::arg("xi"),
        "Twist [u; omega] to a 4 x 4 transform.");
  m.def("log_map", [](const Eigen::Matrix4d& t) { return log_map(to_pose(t)).vector(); },
        py::arg("transform"), "4 x 4 transform to its twist [u; omega].");
  m.def("adjoint", [](const Eigen::Matrix4d& t) { return adjoint(to_pose(t)); }, py::arg("transform"));
  m.def(
      "compound_covariance",
      [](const Eigen::Matrix4d& first_mean, const Matrix6d& first, const Matrix6d& second,
         bool fourth_order) {
        return compound_covariance(to_pose(first_mean), first, second, CompoundOptions{fourth_order});
      },
      py::arg("first_mean"), py::arg("first"), py::arg("second"), py::arg("fourth_order") = true);
  m.def("mahalanobis", [](const Vector6d& xi, const Matrix6d& y) { return mahalanobis(Twist(xi), y); },
        py::arg("xi"), py::arg("covariance"));
  m.def("kl_divergence", [](const Matrix6d& y0, const Matrix6d& y1) { return kl_divergence(y0, y1); },
        py::arg("sampled"), py::arg("predicted"), "KL(sampled || predicted), zero means.");

  m.def(
      "generate_scene",
      [](const std::string& archetype, double size, int points, double sigma, std::uint64_t seed) {
        SceneSpec spec;
        const auto a = parse_archetype(archetype);
        if (!a) throw py::value_error("unknown archetype '" + archetype + "'");
        spec.archetype = *a;
        spec.size = size;
        spec.points = points;
        spec.sigma = sigma;
        spec.seed = seed;
        const Scene s = generate_scene(spec);
        return py::make_tuple(from_cloud(s.reading), from_cloud(s.reference), s.truth.matrix());
      },
      py::arg("archetype") = "cube", py::arg("size") = 1.0, py::arg("points") = 2000,
      py::arg("sigma") = 0.0, py::arg("seed") = 0,
      "Returns (reading, reference, truth) with truth aligning reading to reference.");

  m.def(
      "icp",
      [](const RowCloud& reading, const RowCloud& reference, const Eigen::Matrix4d& initial,
         int knn, double trim_ratio, int max_iterations, double subsample_ratio,
         std::uint64_t filter_seed) {
        const RegistrationResult r = icp(to_cloud(reading), to_cloud(reference), to_pose(initial),
                                         icp_config(knn, trim_ratio, max_iterations,
                                                    subsample_ratio, filter_seed));
        py::dict d;
        d["transform"] = r.transform.matrix();
        d["iterations"] = r.iterations;
        d["objective"] = r.objective;
        d["converged"] = r.converged;
        d["degenerate"] = r.degenerate;
        return d;
      },
      py::arg("reading"), py::arg("reference"), py::arg("initial"), py::arg("knn") = 3,
      py::arg("trim_ratio") = 0.7, py::arg("max_iterations") = 80, py::arg("subsample_ratio") = 1.0,
      py::arg("filter_seed") = 0);

  m.def(
      "sample_covariance",
      [](const RowCloud& reading, const RowCloud& reference, const Eigen::Matrix4d& truth, int n,
         double a, std::uint64_t seed, double subsample_ratio, double eps) {
        const RigidTransform t = to_pose(truth);
        const IcpConfig cfg = icp_config(3, 0.7, 80, subsample_ratio, 0);
        const SampleSet raw = sample_registrations(to_cloud(reading), to_cloud(reference), t,
                                                   PerturbationModel{t, a}, n, cfg, seed);
        DbscanConfig db;
        db.eps = eps;
        const SampledCovariance c = sampled_covariance(dbscan_filter(raw, db));
        py::dict d;
        d["covariance"] = c.covariance;
        d["mean"] = c.mean;
        d["n_total"] = c.n_total;
        d["n_kept"] = c.n_kept;
        return d;
      },
      py::arg("reading"), py::arg("reference"), py::arg("truth"), py::arg("n") = 500,
      py::arg("a") = 0.05, py::arg("seed") = 0, py::arg("subsample_ratio") = 1.0,
      py::arg("eps") = 0.1, "Monte-Carlo ICP covariance after the DBSCAN filter.");

  m.def(
      "censi_covariance",
      [](const RowCloud& reading, const RowCloud& reference, const Eigen::Matrix4d& estimate,
         double sigma) {
        return censi_covariance(to_cloud(reading), to_cloud(reference), to_pose(estimate),
                                SensorNoiseModel{sigma})
            .covariance;
      },
      py::arg("reading"), py::arg("reference"), py::arg("estimate"), py::arg("sigma"));

  m.def(
      "describe_pair",
      [](const RowCloud& reading, const RowCloud& reference, const Eigen::Matrix4d& transform,
         double radius) {
        return describe_pair(to_cloud(reading), to_cloud(reference), to_pose(transform), {}, radius)
            .values;
      },
      py::arg("reading"), py::arg("reference"), py::arg("transform"),
      py::arg("radius") = kDefaultOverlapRadius, "704-value overlap descriptor on the default grid.");

  py::class_<PredictorModel>(m, "Model")
      .def_static("load", [](const std::string& path) { return load_model(path); }, py::arg("path"))
      .def("save", [](const PredictorModel& self, const std::string& path) { save_model(self, path); },
           py::arg("path"))
      .def("__len__", &PredictorModel::size)
      .def("predict",
           [](const PredictorModel& self, const Eigen::VectorXd& descriptor) {
             return predict(descriptor, self);
           },
           py::arg("descriptor"));

  m.def(
      "train",
      [](const std::vector<Eigen::VectorXd>& descriptors, const std::vector<Matrix6d>& covariances,
         double learning_rate, int max_epochs, double regularization, std::uint64_t seed) {
        if (descriptors.size() != covariances.size()) {
          throw py::value_error("descriptors and covariances differ in length");
        }
        std::vector<TrainingExample> data(descriptors.size());
        for (std::size_t i = 0; i < data.size(); ++i) {
          data[i].descriptor.values = descriptors[i];
          data[i].covariance = covariances[i];
          data[i].pair_id = std::to_string(i);
        }
        TrainConfig cfg;
        cfg.learning_rate = learning_rate;
        cfg.max_epochs = max_epochs;
        cfg.regularization = regularization;
        cfg.seed = seed;
        return train(data, cfg);
      },
      py::arg("descriptors"), py::arg("covariances"), py::arg("learning_rate") = 1e-5,
      py::arg("max_epochs") = 100, py::arg("regularization") = 1e-3, py::arg("seed") = 0);

  m.def("enumerate_pairs", [](std::size_t length) { return enumerate_pairs(length); },
        py::arg("length"), "Pairs (i, j) with i < j < length and j - i <= 4.");
}
