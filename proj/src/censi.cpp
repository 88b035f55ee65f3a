#include "cello/censi.hpp"

#include <map>
#include <ostream>
#include <stdexcept>

#include <Eigen/Eigenvalues>

#include "cello/covariance_sampling.hpp"
#include "cello/csv.hpp"
#include "cello/random.hpp"

namespace cello {

namespace {

constexpr double kRidge = 1e-9;
constexpr double kNullSpaceRatio = 1e-6;

using Matrix63 = Eigen::Matrix<double, 6, 3>;

}  // namespace

CensiResult censi_covariance(const AssociationSet& associations,
                             const SensorNoiseModel& noise,
                             const CensiOptions& options) {
  if (!(noise.sigma >= 0.0)) {
    throw std::invalid_argument("censi_covariance: sigma must be >= 0");
  }
  if (associations.empty()) {
    throw std::invalid_argument("censi_covariance: no associations");
  }

  // r = n . (exp(w) p + t - q) around the estimate; p is already mapped.
  Matrix6d hessian = Matrix6d::Zero();
  std::map<Eigen::Index, Matrix63> g_reading;
  std::map<Eigen::Index, Matrix63> g_reference;
  for (const Association& as : associations) {
    const Eigen::Vector3d& n = as.normal;
    const Eigen::Vector3d& p = as.reading_point;
    const double r = as.residual();
    Vector6d a;
    a << n, p.cross(n);
    hessian += 2.0 * a * a.transpose();
    // Second-order rotation term of the residual.
    const Eigen::Matrix3d m = 0.5 * (n * p.transpose() + p * n.transpose()) -
                              n.dot(p) * Eigen::Matrix3d::Identity();
    hessian.bottomRightCorner<3, 3>() += 2.0 * r * m;

    Matrix63 gp = 2.0 * a * n.transpose();
    gp.bottomRows<3>() -= 2.0 * r * skew(n);
    auto [it, inserted] = g_reading.try_emplace(as.reading, Matrix63::Zero());
    it->second += gp;
    if (options.reference_noise) {
      auto [jt, ins] = g_reference.try_emplace(as.reference, Matrix63::Zero());
      jt->second -= 2.0 * a * n.transpose();
    }
  }
  hessian = 0.5 * (hessian + hessian.transpose());

  Matrix6d noise_term = Matrix6d::Zero();
  for (const auto& [idx, g] : g_reading) {
    noise_term += g * g.transpose();
  }
  for (const auto& [idx, g] : g_reference) {
    noise_term += g * g.transpose();
  }
  const double var = noise.sigma * noise.sigma;

  CensiResult out;
  const double eps = kRidge * std::max(hessian.trace(), 0.0) / 6.0;
  Eigen::SelfAdjointEigenSolver<Matrix6d> eig(hessian);
  const double lmax = eig.eigenvalues().cwiseAbs().maxCoeff();
  for (int i = 0; i < 6; ++i) {
    if (eig.eigenvalues()(i) <= kNullSpaceRatio * lmax) {
      out.degenerate = true;
      out.directions.emplace_back(eig.eigenvectors().col(i));
    }
  }
  const Matrix6d h_reg = hessian + eps * Matrix6d::Identity();
  // The prior's own noise keeps the sigma^2 scaling exact.
  const Matrix6d middle = var * (noise_term + 2.0 * eps * Matrix6d::Identity());
  const Matrix6d h_inv = h_reg.ldlt().solve(Matrix6d::Identity());
  const Matrix6d y = h_inv * middle * h_inv.transpose();
  const double norm = y.norm();
  out.symmetrization_error = norm > 0.0 ? (y - y.transpose()).norm() / norm : 0.0;
  out.covariance = 0.5 * (y + y.transpose());
  return out;
}

CensiResult censi_covariance(const PointCloud& reading, const PointCloud& reference,
                             const RigidTransform& estimate,
                             const SensorNoiseModel& noise, const IcpConfig& config,
                             const CensiOptions& options) {
  const IcpProblem problem(reading, reference, config);
  return censi_covariance(problem.associations_at(estimate), noise, options);
}

std::vector<NoiseSweepRow> noise_sweep(const SceneSpec& scene,
                                       const std::vector<double>& sigmas,
                                       const NoiseSweepConfig& config) {
  std::vector<NoiseSweepRow> rows;
  rows.reserve(sigmas.size());
  for (std::size_t k = 0; k < sigmas.size(); ++k) {
    SceneSpec spec = scene;
    spec.sigma = sigmas[k];
    const Scene s = generate_scene(spec);
    const PerturbationModel model{s.truth, config.a};
    const SampleSet samples = dbscan_filter(
        sample_registrations(s.reading, s.reference, s.truth, model, config.samples,
                             config.icp, config.seed, config.workers));
    NoiseSweepRow row;
    row.sigma = sigmas[k];
    if (samples.size() >= 2) {
      const SampledCovariance sc = sampled_covariance(samples);
      row.trace_sampled = sc.covariance.trace();
      row.n_kept = sc.n_kept;
    }
    IcpConfig closed_form = config.icp;
    closed_form.filter_seed = derive_seed(config.seed, "sweep/closed-form");
    const IcpProblem problem(s.reading, s.reference, closed_form);
    const RegistrationResult at_truth = problem.register_from(s.truth);
    row.trace_censi =
        censi_covariance(problem.associations_at(at_truth.transform),
                         SensorNoiseModel{spec.sigma})
            .covariance.trace();
    rows.push_back(row);
  }
  return rows;
}

void write_noise_sweep_csv(std::ostream& out, const std::vector<NoiseSweepRow>& rows) {
  out << "sigma,trace_sampled,trace_censi,n_kept\n";
  for (const auto& r : rows) {
    out << csv::format_double(r.sigma) << ',' << csv::format_double(r.trace_sampled)
        << ',' << csv::format_double(r.trace_censi) << ',' << r.n_kept << '\n';
  }
}

}  // namespace cello
