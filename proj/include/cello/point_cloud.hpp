#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "cello/se3.hpp"

namespace cello {

/// 3xN point set in meters with optional per-point unit normals.
/// Normals flagged invalid came from degenerate neighborhoods and are
/// ignored by every consumer.
class PointCloud {
 public:
  PointCloud() = default;
  /// Throws std::invalid_argument on non-finite coordinates.
  explicit PointCloud(Eigen::Matrix3Xd points, std::string frame = {});

  [[nodiscard]] Eigen::Index size() const { return points_.cols(); }
  [[nodiscard]] bool empty() const { return points_.cols() == 0; }
  [[nodiscard]] const Eigen::Matrix3Xd& points() const { return points_; }
  [[nodiscard]] Eigen::Vector3d point(Eigen::Index i) const {
    return points_.col(i);
  }

  [[nodiscard]] bool has_normals() const { return normals_.cols() == size() && size() > 0; }
  [[nodiscard]] const Eigen::Matrix3Xd& normals() const { return normals_; }
  [[nodiscard]] const std::vector<std::uint8_t>& normal_valid() const {
    return normal_valid_;
  }
  [[nodiscard]] bool normal_is_valid(Eigen::Index i) const {
    return has_normals() && normal_valid_[static_cast<std::size_t>(i)] != 0;
  }
  /// Throws when sizes disagree with the point count.
  void set_normals(Eigen::Matrix3Xd normals, std::vector<std::uint8_t> valid);
  void clear_normals();

  [[nodiscard]] PointCloud select(std::span<const Eigen::Index> indices) const;

  [[nodiscard]] const std::string& frame() const { return frame_; }
  void set_frame(std::string frame) { frame_ = std::move(frame); }

 private:
  Eigen::Matrix3Xd points_{3, 0};
  Eigen::Matrix3Xd normals_{3, 0};
  std::vector<std::uint8_t> normal_valid_;
  std::string frame_;
};

/// Concatenates point sets; normals are kept only when every input has them.
PointCloud concatenate(const PointCloud& a, const PointCloud& b);

/// Points mapped by T, normals rotated by R only.
PointCloud transform_cloud(const PointCloud& cloud, const RigidTransform& t);

/// Per-point results of the k-NN local covariance eigen-analysis.
struct LocalGeometry {
  Eigen::Matrix3Xd normals;
  std::vector<std::uint8_t> normal_valid;
  // Demantke dimensionality features from sigma_i = sqrt(lambda_i):
  // planarity (s2 - s3) / s1, cylindricality (s1 - s2) / s1.
  Eigen::VectorXd planarity;
  Eigen::VectorXd cylindricality;
  std::vector<std::uint8_t> shape_valid;
};

inline constexpr int kDefaultNormalNeighbors = 20;

/// Normals are the smallest-eigenvalue eigenvectors of the k-NN covariance
/// (the query point included), flipped so n . (origin - p) >= 0. Normals of
/// rank < 2 neighborhoods are flagged invalid.
LocalGeometry compute_local_geometry(
    const PointCloud& cloud, int k = kDefaultNormalNeighbors,
    const Eigen::Vector3d& sensor_origin = Eigen::Vector3d::Zero());

/// Returns a copy of `cloud` carrying estimated normals. Requires n > k >= 3.
PointCloud estimate_normals(
    const PointCloud& cloud, int k = kDefaultNormalNeighbors,
    const Eigen::Vector3d& sensor_origin = Eigen::Vector3d::Zero());

/// Keeps ceil(ratio * n) points chosen uniformly without replacement,
/// original order preserved.
PointCloud random_subsample(const PointCloud& cloud, double ratio,
                            std::uint64_t seed);

inline constexpr int kDensityNeighbors = 10;

/// Local density k / (4/3 pi r_k^3), r_k the distance to the k-th nearest
/// other point. Clouds with fewer than two points have density 0.
Eigen::VectorXd local_density(const PointCloud& cloud,
                              int k = kDensityNeighbors);

/// Thins regions denser than `max_density` (points / m^3). Each pass keeps a
/// dense point with probability max_density / density (a pass that would keep
/// everything drops the densest point instead); passes repeat until no point
/// exceeds the limit, so a cloud already below it is returned unchanged.
PointCloud max_density_filter(const PointCloud& cloud, double max_density,
                              std::uint64_t seed = 0);

}  // namespace cello
