#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

#include "cello/registration.hpp"
#include "cello/se3.hpp"

namespace cello {

/// Distribution of initial guesses: T_check = exp(xi) T_bar, xi ~ N(0, a I).
struct PerturbationModel {
  RigidTransform mean;
  double a = 0.05;
};

RigidTransform draw_initial_transform(const PerturbationModel& model,
                                      std::uint64_t seed);

/// One entry per registration attempt, in sample-index order.
struct SampleSet {
  std::vector<Vector6d> xi;  // log(T_bar^-1 T_hat_i)
  std::vector<std::uint8_t> converged;
  std::vector<std::uint64_t> seeds;
  std::vector<int> cluster;  // DBSCAN label, -1 noise, empty before filtering
  std::size_t attempts = 0;  // size before any filtering
  int kept_cluster = -1;
  bool no_cluster = false;   // set by dbscan_filter when nothing qualified

  [[nodiscard]] std::size_t size() const { return xi.size(); }
  [[nodiscard]] bool empty() const { return xi.empty(); }
};

/// Maps an initial guess and its per-sample seed to a registration result.
/// The production registrar runs ICP; tests inject stubs.
using Registrar =
    std::function<RegistrationResult(const RigidTransform& initial,
                                     std::uint64_t sample_seed)>;

/// Runs n registrations from initial guesses drawn from `model`. Sample i uses
/// derive_seed(seed, "sample", i), so the result does not depend on
/// `workers`. Failed registrations are recorded as non-converged.
SampleSet sample_registrations(const Registrar& registrar,
                               const RigidTransform& truth,
                               const PerturbationModel& model, int n,
                               std::uint64_t seed, int workers = 1);

/// ICP registrar over the clouds. With random input filters, sample i draws
/// them from its own seed, so each registration sees a different subset.
SampleSet sample_registrations(const PointCloud& reading,
                               const PointCloud& reference,
                               const RigidTransform& truth,
                               const PerturbationModel& model, int n,
                               const IcpConfig& config, std::uint64_t seed,
                               int workers = 1);

struct DbscanConfig {
  double eps = 0.1;
  int min_pts = 0;               // 0 selects max(5, n / 500)
  double rotation_weight = 1.0;  // metres per radian in the clustering metric

  [[nodiscard]] int effective_min_pts(std::size_t n) const;
};

/// Plain DBSCAN labels (-1 noise) under the weighted Euclidean metric. Core
/// points count themselves among their neighbors.
std::vector<int> dbscan(const std::vector<Vector6d>& points, double eps,
                        int min_pts, double rotation_weight = 1.0);

/// Keeps the cluster whose mean has the smallest weighted norm.
SampleSet dbscan_filter(const SampleSet& samples, const DbscanConfig& config = {});

struct SampledCovariance {
  Covariance6 covariance = Covariance6::Zero();
  Vector6d mean = Vector6d::Zero();  // diagnostic, not subtracted
  std::size_t n_total = 0;
  std::size_t n_kept = 0;
  int kept_cluster = -1;
};

/// Y = 1 / (n - 1) sum xi_i xi_i^T, the second moment about ground truth.
/// Throws when fewer than two samples remain.
SampledCovariance sampled_covariance(const SampleSet& samples);

struct DivergenceVerdict {
  bool accept = true;
  double mean_translation_error = 0.0;
  double mean_rotation_error = 0.0;
};

/// Rejects pairs whose registrations land on average more than 1 m or 1 rad
/// from ground truth.
DivergenceVerdict divergence_check(const SampleSet& samples,
                                   double max_translation = 1.0,
                                   double max_rotation = 1.0);

/// CSV: seed, u_x, u_y, u_z, w_x, w_y, w_z, converged, cluster.
void write_samples_csv(std::ostream& out, const SampleSet& samples);

}  // namespace cello
