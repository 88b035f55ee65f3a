#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "cello/registration.hpp"
#include "cello/scene.hpp"
#include "cello/se3.hpp"

namespace cello {

/// Isotropic per-point sensor noise.
struct SensorNoiseModel {
  double sigma = 0.0;  // m
};

struct CensiOptions {
  /// Also propagate noise on reference points (off: reference is a fixed
  /// surface and only reading points are noisy).
  bool reference_noise = false;
};

struct CensiResult {
  Covariance6 covariance = Covariance6::Zero();
  bool degenerate = false;
  /// Unit eigenvectors of the cost Hessian spanning its near-null space.
  std::vector<Vector6d> directions;
  /// |Y - Y^T| / |Y| before symmetrization.
  double symmetrization_error = 0.0;
};

/// Implicit-function covariance H^-1 G (sigma^2 I) G^T H^-1 of the
/// point-to-plane minimizer on a frozen association set, with H the full
/// analytic cost Hessian in the [t; omega] increment and G its mixed
/// derivative in the point coordinates. H gets a relative ridge of 1e-9
/// tr(H) / 6 that acts as a weak prior, so unobservable directions receive
/// large but finite variance.
CensiResult censi_covariance(const AssociationSet& associations,
                             const SensorNoiseModel& noise,
                             const CensiOptions& options = {});

/// Associations are formed at `estimate` with the ICP matching and trimming
/// rules of `config`.
CensiResult censi_covariance(const PointCloud& reading,
                             const PointCloud& reference,
                             const RigidTransform& estimate,
                             const SensorNoiseModel& noise,
                             const IcpConfig& config = {},
                             const CensiOptions& options = {});

struct NoiseSweepRow {
  double sigma = 0.0;
  double trace_sampled = 0.0;
  double trace_censi = 0.0;
  std::size_t n_kept = 0;
};

struct NoiseSweepConfig {
  int samples = 500;
  double a = 0.05;
  /// Random subsampling to 15% per registration on top of the ICP defaults.
  IcpConfig icp = [] {
    IcpConfig c;
    c.subsample_ratio = 0.15;
    return c;
  }();
  std::uint64_t seed = 0;
  int workers = 1;
};

/// For each sigma: regenerate the scene with that noise, sample registrations
/// around ground truth, and evaluate the closed form on the associations of one
/// registration started from ground truth (same filters as the sampler). All
/// sigmas share scene, filter and initial-guess seeds, so only the noise
/// amplitude changes across rows.
std::vector<NoiseSweepRow> noise_sweep(const SceneSpec& scene,
                                       const std::vector<double>& sigmas,
                                       const NoiseSweepConfig& config = {});

/// CSV: sigma, trace_sampled, trace_censi, n_kept.
void write_noise_sweep_csv(std::ostream& out, const std::vector<NoiseSweepRow>& rows);

}  // namespace cello
