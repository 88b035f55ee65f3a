#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "cello/cello_model.hpp"
#include "cello/covariance_sampling.hpp"
#include "cello/dataset.hpp"
#include "cello/se3.hpp"

namespace cello {

/// Direction recorded in every exported KL table.
inline constexpr const char* kKlDirection = "KL(sampled || predicted)";

struct KlResult {
  double value = 0.0;
  bool regularized = false;
};

/// KL(N(0, Y0) || N(0, Y1)) = 1/2 (tr(Y1^-1 Y0) - 6 + ln(det Y1 / det Y0)).
/// Singular inputs get a 1e-9 relative ridge; still non-PD afterwards throws.
KlResult kl_divergence_checked(const Covariance6& y0, const Covariance6& y1);
inline double kl_divergence(const Covariance6& y0, const Covariance6& y1) {
  return kl_divergence_checked(y0, y1).value;
}

/// Elementwise mean of the example covariances. Throws on an empty set.
Covariance6 baseline_covariance(const std::vector<Covariance6>& covariances);
Covariance6 baseline_covariance(const std::vector<TrainingExample>& dataset);

/// Predicts the covariance of one registration step from the clouds and the
/// ICP estimate.
using StepPredictor = std::function<Covariance6(
    const PointCloud& reading, const PointCloud& reference,
    const RigidTransform& estimate)>;

/// Step registration: maps reading into the reference frame from an initial
/// guess. Production code runs ICP; tests inject oracles.
using StepRegistrar = std::function<RegistrationResult(
    const PointCloud& reading, const PointCloud& reference,
    const RigidTransform& initial, std::uint64_t step_seed)>;

StepRegistrar icp_step_registrar(const IcpConfig& config = {});

/// Predictor from a trained model: descriptor of the pair at the estimate,
/// then kernel regression.
StepPredictor model_step_predictor(const PredictorModel& model,
                                   double overlap_radius = 0.5);

struct TrajectoryResult {
  std::vector<RigidTransform> step_estimates;   // T_hat_{i,i+1}
  std::vector<Covariance6> step_covariances;    // right-perturbation
  std::vector<RigidTransform> ground_truth;     // T_bar_{i,i+1}
  RigidTransform final_estimate;                // T_hat_F
  RigidTransform final_truth;
  Covariance6 final_covariance = Covariance6::Zero();  // right-perturbation
  Vector6d final_error = Vector6d::Zero();      // log(T_bar_F^-1 T_hat_F)
  double mahalanobis = 0.0;
  double mahalanobis_translation = 0.0;
  double mahalanobis_rotation = 0.0;
  double translation_error = 0.0;
  double rotation_error = 0.0;
  bool converged = true;  // false if any step hit the iteration cap
};

/// Odometry over consecutive pairs: step i registers cloud i+1 against cloud i
/// from exp(xi) T_bar_{i,i+1}, xi ~ N(0, a I). Poses and covariances are
/// compounded; covariances are right-perturbation (T = T_mean exp(xi)).
TrajectoryResult run_trajectory(const SequenceDataset& sequence,
                                const StepRegistrar& registrar,
                                const StepPredictor& predictor,
                                double a, std::uint64_t seed,
                                CompoundOptions compound = {});

/// Compounds right-perturbation step covariances along the given step means.
Covariance6 compound_trajectory_covariance(const std::vector<RigidTransform>& steps,
                                           const std::vector<Covariance6>& covariances,
                                           CompoundOptions compound = {});

enum class Consistency { optimistic, consistent, pessimistic };
std::string_view to_string(Consistency c);

/// > 3 optimistic, < 1.5 pessimistic, otherwise consistent.
Consistency classify_consistency(double mean_mahalanobis);

struct ConsistencyReport {
  double mean_mahalanobis = 0.0;
  double mean_translation = 0.0;
  double mean_rotation = 0.0;
  Consistency classification = Consistency::consistent;
  std::size_t included = 0;
  std::size_t excluded = 0;  // non-converged trajectories
};

/// Aggregates trajectories; non-converged ones are excluded unless
/// `include_nonconverged`. Throws if nothing remains.
ConsistencyReport consistency_report(const std::vector<TrajectoryResult>& trajectories,
                                     bool include_nonconverged = false);

struct PairEvaluation {
  std::string pair_id;
  double kl_baseline = 0.0;
  double kl_learned = 0.0;
  double kl_censi = 0.0;
};

struct PredictorEvaluation {
  std::vector<PairEvaluation> pairs;
  double mean_kl_baseline = 0.0;
  double mean_kl_learned = 0.0;
  double mean_kl_censi = 0.0;
};

/// Per-pair KL of baseline, learned and closed-form predictions against the
/// sampled covariance. `censi` may be empty; its column is then NaN.
/// `leave_one_out` excludes the query from the model when the test set is the
/// training set.
PredictorEvaluation evaluate_predictor(const std::vector<TrainingExample>& test,
                                       const PredictorModel& model,
                                       const std::vector<Covariance6>& censi = {},
                                       bool leave_one_out = false);

/// CSV: pair, kl_baseline, kl_learned, kl_censi, preceded by a comment line
/// naming the KL direction.
void write_pair_evaluation_csv(std::ostream& out, const PredictorEvaluation& eval);

/// CSV: trajectory, d_m, d_m_translation, d_m_rotation, translation_error,
/// rotation_error, converged.
void write_trajectory_csv(std::ostream& out,
                          const std::vector<TrajectoryResult>& trajectories);

/// Ground-plane ellipse data: per trajectory the final x, y estimate, the
/// ground truth and the world-frame xy position covariance.
void write_ellipse_csv(std::ostream& out,
                       const std::vector<TrajectoryResult>& trajectories);

/// World-frame xy covariance of the final position, R Y_uu R^T to first order.
Eigen::Matrix2d ground_plane_covariance(const TrajectoryResult& trajectory);

}  // namespace cello
