#include "cello/evaluation.hpp"

#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "cello/csv.hpp"
#include "cello/random.hpp"
#include "cello/registration.hpp"

namespace cello {

namespace {

constexpr double kRidge = 1e-9;

// Cholesky of a covariance, adding a relative ridge once if needed.
Eigen::LLT<Covariance6> factor(const Covariance6& y, bool& regularized) {
  Eigen::LLT<Covariance6> llt(y);
  if (llt.info() == Eigen::Success) {
    return llt;
  }
  const double ridge = kRidge * std::max(y.trace(), 0.0) / 6.0;
  llt.compute(y + ridge * Covariance6::Identity());
  if (llt.info() != Eigen::Success || ridge == 0.0) {
    throw std::domain_error("kl_divergence: covariance is not positive definite");
  }
  regularized = true;
  return llt;
}

double log_det(const Eigen::LLT<Covariance6>& llt) {
  return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

double block_mahalanobis(const Eigen::Vector3d& x, const Eigen::Matrix3d& y) {
  return mahalanobis_checked(x, y).distance;
}

}  // namespace

KlResult kl_divergence_checked(const Covariance6& y0, const Covariance6& y1) {
  if (!y0.allFinite() || !y1.allFinite()) {
    throw std::domain_error("kl_divergence: non-finite covariance");
  }
  KlResult out;
  const auto l0 = factor(y0, out.regularized);
  const auto l1 = factor(y1, out.regularized);
  const Covariance6 y0_used = l0.reconstructedMatrix();
  const double trace_term = l1.solve(y0_used).trace();
  // Clamp rounding below zero; the exact value is non-negative.
  out.value = std::max(0.0, 0.5 * (trace_term - 6.0 + log_det(l1) - log_det(l0)));
  return out;
}

Covariance6 baseline_covariance(const std::vector<Covariance6>& covariances) {
  if (covariances.empty()) {
    throw std::invalid_argument("baseline_covariance: empty dataset");
  }
  Covariance6 sum = Covariance6::Zero();
  for (const auto& y : covariances) {
    sum += y;
  }
  return sum / static_cast<double>(covariances.size());
}

Covariance6 baseline_covariance(const std::vector<TrainingExample>& dataset) {
  std::vector<Covariance6> ys;
  ys.reserve(dataset.size());
  for (const auto& ex : dataset) {
    ys.push_back(ex.covariance);
  }
  return baseline_covariance(ys);
}

StepRegistrar icp_step_registrar(const IcpConfig& config) {
  return [config](const PointCloud& reading, const PointCloud& reference,
                  const RigidTransform& initial, std::uint64_t) {
    return icp(reading, reference, initial, config);
  };
}

StepPredictor model_step_predictor(const PredictorModel& model, double overlap_radius) {
  return [&model, overlap_radius](const PointCloud& reading, const PointCloud& reference,
                                  const RigidTransform& estimate) {
    const CloudDescriptor d =
        describe_pair(reading, reference, estimate, model.grid, overlap_radius);
    return predict(d.values, model);
  };
}

Covariance6 compound_trajectory_covariance(const std::vector<RigidTransform>& steps,
                                           const std::vector<Covariance6>& covariances,
                                           CompoundOptions compound) {
  if (steps.size() != covariances.size() || steps.empty()) {
    throw std::invalid_argument("compound_trajectory_covariance: size mismatch");
  }
  // T_mean exp(xi) = exp(Ad xi) T_mean: switch to the left form to compound.
  RigidTransform pose = steps[0];
  Covariance6 left = transform_covariance(covariances[0], steps[0]);
  for (std::size_t i = 1; i < steps.size(); ++i) {
    left = compound_covariance(pose, left, transform_covariance(covariances[i], steps[i]),
                               compound);
    pose = pose * steps[i];
  }
  return transform_covariance(left, pose.inverse());
}

TrajectoryResult run_trajectory(const SequenceDataset& sequence,
                                const StepRegistrar& registrar,
                                const StepPredictor& predictor, double a,
                                std::uint64_t seed, CompoundOptions compound) {
  if (sequence.size() < 2 || sequence.poses.size() != sequence.size()) {
    throw std::invalid_argument("run_trajectory: need >= 2 clouds with poses");
  }
  TrajectoryResult out;
  const std::size_t steps = sequence.size() - 1;
  for (std::size_t i = 0; i < steps; ++i) {
    const RigidTransform truth = sequence.relative_pose(i, i + 1);
    const RigidTransform initial = draw_initial_transform(
        PerturbationModel{truth, a}, derive_seed(seed, "trajectory/initial", i));
    const RegistrationResult reg =
        registrar(sequence.clouds[i + 1], sequence.clouds[i], initial,
                  derive_seed(seed, "trajectory/step", i));
    out.converged = out.converged && reg.converged;
    out.step_estimates.push_back(reg.transform);
    out.step_covariances.push_back(
        predictor(sequence.clouds[i + 1], sequence.clouds[i], reg.transform));
    out.ground_truth.push_back(truth);
  }

  out.final_estimate = out.step_estimates[0];
  out.final_truth = out.ground_truth[0];
  for (std::size_t i = 1; i < steps; ++i) {
    out.final_estimate = compound_pose(out.final_estimate, out.step_estimates[i]);
    out.final_truth = compound_pose(out.final_truth, out.ground_truth[i]);
  }
  out.final_covariance =
      compound_trajectory_covariance(out.step_estimates, out.step_covariances, compound);

  out.final_error = log_map(out.final_truth.inverse() * out.final_estimate).vector();
  const Eigen::Vector3d u = out.final_error.head<3>();
  const Eigen::Vector3d w = out.final_error.tail<3>();
  out.mahalanobis = mahalanobis_checked(out.final_error, out.final_covariance).distance;
  out.mahalanobis_translation =
      block_mahalanobis(u, out.final_covariance.topLeftCorner<3, 3>());
  out.mahalanobis_rotation =
      block_mahalanobis(w, out.final_covariance.bottomRightCorner<3, 3>());
  out.translation_error =
      (out.final_estimate.translation() - out.final_truth.translation()).norm();
  out.rotation_error = w.norm();
  return out;
}

std::string_view to_string(Consistency c) {
  switch (c) {
    case Consistency::optimistic: return "optimistic";
    case Consistency::consistent: return "consistent";
    case Consistency::pessimistic: return "pessimistic";
  }
  return "unknown";
}

Consistency classify_consistency(double mean_mahalanobis) {
  if (mean_mahalanobis > 3.0) {
    return Consistency::optimistic;
  }
  if (mean_mahalanobis < 1.5) {
    return Consistency::pessimistic;
  }
  return Consistency::consistent;
}

ConsistencyReport consistency_report(const std::vector<TrajectoryResult>& trajectories,
                                     bool include_nonconverged) {
  ConsistencyReport r;
  for (const auto& t : trajectories) {
    if (!t.converged && !include_nonconverged) {
      ++r.excluded;
      continue;
    }
    ++r.included;
    r.mean_mahalanobis += t.mahalanobis;
    r.mean_translation += t.mahalanobis_translation;
    r.mean_rotation += t.mahalanobis_rotation;
  }
  if (r.included == 0) {
    throw std::invalid_argument("consistency_report: no usable trajectory");
  }
  const auto n = static_cast<double>(r.included);
  r.mean_mahalanobis /= n;
  r.mean_translation /= n;
  r.mean_rotation /= n;
  r.classification = classify_consistency(r.mean_mahalanobis);
  return r;
}

PredictorEvaluation evaluate_predictor(const std::vector<TrainingExample>& test,
                                       const PredictorModel& model,
                                       const std::vector<Covariance6>& censi,
                                       bool leave_one_out) {
  if (test.empty()) {
    throw std::invalid_argument("evaluate_predictor: empty test set");
  }
  if (!censi.empty() && censi.size() != test.size()) {
    throw std::invalid_argument("evaluate_predictor: closed-form count mismatch");
  }
  const Covariance6 base = baseline_covariance(model.covariances);
  PredictorEvaluation out;
  for (std::size_t k = 0; k < test.size(); ++k) {
    const TrainingExample& ex = test[k];
    PairEvaluation row;
    row.pair_id = ex.pair_id;
    const std::ptrdiff_t exclude = leave_one_out ? static_cast<std::ptrdiff_t>(k) : -1;
    Covariance6 base_k = base;
    if (leave_one_out && model.size() > 1) {
      const auto n = static_cast<double>(model.size());
      base_k = (base * n - model.covariances[k]) / (n - 1.0);
    }
    row.kl_baseline = kl_divergence(ex.covariance, base_k);
    row.kl_learned = kl_divergence(
        ex.covariance, predict_checked(ex.descriptor.values, model, exclude).covariance);
    row.kl_censi = censi.empty() ? std::numeric_limits<double>::quiet_NaN()
                                 : kl_divergence(ex.covariance, censi[k]);
    out.mean_kl_baseline += row.kl_baseline;
    out.mean_kl_learned += row.kl_learned;
    out.mean_kl_censi += row.kl_censi;
    out.pairs.push_back(std::move(row));
  }
  const auto n = static_cast<double>(test.size());
  out.mean_kl_baseline /= n;
  out.mean_kl_learned /= n;
  out.mean_kl_censi /= n;
  return out;
}

void write_pair_evaluation_csv(std::ostream& out, const PredictorEvaluation& eval) {
  out << "# kl_direction: " << kKlDirection << '\n';
  out << "pair,kl_baseline,kl_learned,kl_censi\n";
  for (const auto& r : eval.pairs) {
    out << r.pair_id << ',' << csv::format_double(r.kl_baseline) << ','
        << csv::format_double(r.kl_learned) << ',' << csv::format_double(r.kl_censi)
        << '\n';
  }
  out << "mean," << csv::format_double(eval.mean_kl_baseline) << ','
      << csv::format_double(eval.mean_kl_learned) << ','
      << csv::format_double(eval.mean_kl_censi) << '\n';
}

void write_trajectory_csv(std::ostream& out,
                          const std::vector<TrajectoryResult>& trajectories) {
  out << "trajectory,d_m,d_m_translation,d_m_rotation,translation_error,"
         "rotation_error,converged\n";
  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    const auto& t = trajectories[i];
    out << i << ',' << csv::format_double(t.mahalanobis) << ','
        << csv::format_double(t.mahalanobis_translation) << ','
        << csv::format_double(t.mahalanobis_rotation) << ','
        << csv::format_double(t.translation_error) << ','
        << csv::format_double(t.rotation_error) << ',' << (t.converged ? 1 : 0) << '\n';
  }
}

Eigen::Matrix2d ground_plane_covariance(const TrajectoryResult& trajectory) {
  // Position of T exp(xi) is t + R u to first order.
  const Eigen::Matrix3d r = trajectory.final_estimate.rotation();
  const Eigen::Matrix3d pos =
      r * trajectory.final_covariance.topLeftCorner<3, 3>() * r.transpose();
  return pos.topLeftCorner<2, 2>();
}

void write_ellipse_csv(std::ostream& out,
                       const std::vector<TrajectoryResult>& trajectories) {
  out << "trajectory,x,y,truth_x,truth_y,cov_xx,cov_xy,cov_yy\n";
  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    const auto& t = trajectories[i];
    const Eigen::Matrix2d c = ground_plane_covariance(t);
    out << i << ',' << csv::format_double(t.final_estimate.translation().x()) << ','
        << csv::format_double(t.final_estimate.translation().y()) << ','
        << csv::format_double(t.final_truth.translation().x()) << ','
        << csv::format_double(t.final_truth.translation().y()) << ','
        << csv::format_double(c(0, 0)) << ',' << csv::format_double(c(0, 1)) << ','
        << csv::format_double(c(1, 1)) << '\n';
  }
}

}  // namespace cello
