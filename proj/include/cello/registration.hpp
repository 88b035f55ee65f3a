#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "cello/kdtree.hpp"
#include "cello/point_cloud.hpp"
#include "cello/se3.hpp"

namespace cello {

/// Point-to-plane ICP: k-d tree 3-NN matching, trimmed distance keeping the
/// closest 70% of associations, at most 80 iterations.
struct IcpConfig {
  int knn = 3;
  double trim_ratio = 0.70;
  int max_iterations = 80;
  double translation_threshold = 1e-4;  // m
  double rotation_threshold = 1e-4;     // rad
  /// Also stop, as converged, when an iterate repeats the one two steps back.
  bool detect_cycles = true;
  // Input filters, applied once before iterating.
  double subsample_ratio = 1.0;
  double max_density = 0.0;  // points / m^3, 0 disables the filter
  std::uint64_t filter_seed = 0;
  int normal_neighbors = kDefaultNormalNeighbors;

  /// Throws std::invalid_argument on out-of-range values.
  void validate() const;
  [[nodiscard]] bool has_random_filters() const {
    return subsample_ratio < 1.0 || max_density > 0.0;
  }
};

struct Association {
  Eigen::Index reading = 0;
  Eigen::Index reference = 0;
  double squared_distance = 0.0;
  Eigen::Vector3d reading_point = Eigen::Vector3d::Zero();    // reference frame
  Eigen::Vector3d reference_point = Eigen::Vector3d::Zero();
  Eigen::Vector3d normal = Eigen::Vector3d::Zero();  // zero when invalid

  [[nodiscard]] double residual() const {
    return normal.dot(reading_point - reference_point);
  }
};

using AssociationSet = std::vector<Association>;

struct RegistrationResult {
  RigidTransform transform;
  int iterations = 0;
  double objective = 0.0;
  bool converged = false;
  bool degenerate = false;
  /// Stopped on a 2-cycle rather than a small increment.
  bool cycled = false;
};

/// `reading` must already be expressed in the reference frame. Each reading
/// point yields min(knn, m) associations; normals come from `reference`.
AssociationSet match_points(const PointCloud& reading,
                            const PointCloud& reference,
                            const NeighborIndex& index, int knn);

/// Keeps the floor(ratio * N) associations with the smallest distances. Ties
/// go to the earlier association; survivors keep their original order.
AssociationSet trim_outliers(const AssociationSet& associations,
                             double trim_ratio);

struct PlaneSolution {
  /// Increment [t; omega]: applied as x -> exp(omega) x + t.
  Twist increment;
  bool degenerate = false;
};

/// Small-angle least-squares minimizer of sum (n . (R p + t - q))^2.
/// Rank-deficient systems get the minimum-norm solution and are flagged.
PlaneSolution minimize_point_to_plane(const AssociationSet& associations);

/// Rigid motion for a minimizer increment.
RigidTransform increment_transform(const Twist& increment);

/// Sum of squared point-to-plane residuals.
double point_to_plane_cost(const AssociationSet& associations);

/// Reading and reference after the input filters, with reference normals and
/// index built once. Immutable; registrations from many initial guesses can
/// share one instance concurrently.
class IcpProblem {
 public:
  /// Throws if either cloud is empty or the reference is too small for
  /// normal estimation.
  IcpProblem(const PointCloud& reading, const PointCloud& reference,
             IcpConfig config = {});

  [[nodiscard]] RegistrationResult register_from(
      const RigidTransform& initial) const;

  /// Trimmed point-to-plane cost after one matching pass at `pose`.
  [[nodiscard]] double objective_value(const RigidTransform& pose) const;

  /// Matched and trimmed associations at `pose`.
  [[nodiscard]] AssociationSet associations_at(const RigidTransform& pose) const;

  [[nodiscard]] const PointCloud& reading() const { return reading_; }
  [[nodiscard]] const PointCloud& reference() const { return reference_; }
  [[nodiscard]] const IcpConfig& config() const { return config_; }

 private:
  IcpConfig config_;
  PointCloud reading_;
  PointCloud reference_;
  std::shared_ptr<const NeighborIndex> index_;
};

/// T_hat = icp(P, Q, T_check): T_hat maps reading points into the reference
/// frame.
RegistrationResult icp(const PointCloud& reading, const PointCloud& reference,
                       const RigidTransform& initial, const IcpConfig& config = {});

double objective_value(const PointCloud& reading, const PointCloud& reference,
                       const RigidTransform& pose, const IcpConfig& config = {});

}  // namespace cello
