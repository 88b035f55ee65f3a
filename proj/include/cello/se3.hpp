#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace cello {

using Vector6d = Eigen::Matrix<double, 6, 1>;
using Matrix6d = Eigen::Matrix<double, 6, 6>;

/// 6x6 pose covariance, block order [uu, uw; wu, ww] matching Twist.
using Covariance6 = Matrix6d;

/// Lie-algebra coordinates of a rigid motion, ordered [u; omega].
/// u is the translational part (m), omega the angle-axis rotation (rad).
class Twist {
 public:
  Twist() : v_(Vector6d::Zero()) {}
  explicit Twist(const Vector6d& v) : v_(v) {}
  Twist(const Eigen::Vector3d& u, const Eigen::Vector3d& omega) {
    v_ << u, omega;
  }

  [[nodiscard]] Eigen::Vector3d u() const { return v_.head<3>(); }
  [[nodiscard]] Eigen::Vector3d omega() const { return v_.tail<3>(); }
  [[nodiscard]] const Vector6d& vector() const { return v_; }

 private:
  Vector6d v_;
};

class RigidTransform {
 public:
  RigidTransform()
      : rotation_(Eigen::Matrix3d::Identity()),
        translation_(Eigen::Vector3d::Zero()) {}
  RigidTransform(const Eigen::Matrix3d& rotation,
                 const Eigen::Vector3d& translation)
      : rotation_(rotation), translation_(translation) {}

  /// Throws std::invalid_argument unless R is orthonormal with det +1
  /// within `tolerance`.
  static RigidTransform checked(const Eigen::Matrix3d& rotation,
                                const Eigen::Vector3d& translation,
                                double tolerance = 1e-9);
  static RigidTransform identity() { return {}; }
  static RigidTransform from_matrix(const Eigen::Matrix4d& m) {
    return {m.topLeftCorner<3, 3>(), m.topRightCorner<3, 1>()};
  }

  [[nodiscard]] const Eigen::Matrix3d& rotation() const { return rotation_; }
  [[nodiscard]] const Eigen::Vector3d& translation() const {
    return translation_;
  }
  [[nodiscard]] Eigen::Matrix4d matrix() const;
  [[nodiscard]] RigidTransform inverse() const {
    Eigen::Matrix3d rt = rotation_.transpose();
    return {rt, -rt * translation_};
  }
  [[nodiscard]] Eigen::Vector3d apply(const Eigen::Vector3d& p) const {
    return rotation_ * p + translation_;
  }

  /// Group composition: (a * b).apply(p) == a.apply(b.apply(p)).
  friend RigidTransform operator*(const RigidTransform& a,
                                  const RigidTransform& b) {
    return {a.rotation_ * b.rotation_,
            a.rotation_ * b.translation_ + a.translation_};
  }

 private:
  Eigen::Matrix3d rotation_;
  Eigen::Vector3d translation_;
};

/// Frobenius distance between the 4x4 homogeneous matrices.
double transform_distance(const RigidTransform& a, const RigidTransform& b);

Eigen::Matrix3d skew(const Eigen::Vector3d& v);

/// Rodrigues formula.
Eigen::Matrix3d so3_exp(const Eigen::Vector3d& omega);

/// Rotation vector with angle in [0, pi]. At pi the axis is taken from the
/// symmetric part of R and `near_pi`, when given, is set.
Eigen::Vector3d so3_log(const Eigen::Matrix3d& rotation,
                        bool* near_pi = nullptr);

/// Left Jacobian of SO(3), i.e. the V matrix of the SE(3) exponential.
Eigen::Matrix3d so3_left_jacobian(const Eigen::Vector3d& omega);
Eigen::Matrix3d so3_left_jacobian_inverse(const Eigen::Vector3d& omega);

RigidTransform exp_map(const Twist& xi);
Twist log_map(const RigidTransform& transform);

/// Ad_T = [[R, [t]x R], [0, R]] for the [u; omega] ordering, so that
/// exp(Ad_T xi) = T exp(xi) T^-1.
Matrix6d adjoint(const RigidTransform& transform);

/// Ad_T Y Ad_T^T.
Covariance6 transform_covariance(const Covariance6& covariance,
                                 const RigidTransform& transform);

inline RigidTransform compound_pose(const RigidTransform& first,
                                    const RigidTransform& second) {
  return first * second;
}

struct CompoundOptions {
  bool fourth_order = true;
};

/// Covariance of T1 T2 where Ti = exp(xi_i) mean_i, xi_i ~ N(0, Yi)
/// independent. Second-order term Y1 + Ad Y2 Ad^T plus the fourth-order
/// correction of Barfoot & Furgale (2014). Throws on non-PSD input.
Covariance6 compound_covariance(const RigidTransform& first_mean,
                                const Covariance6& first,
                                const Covariance6& second,
                                CompoundOptions options = {});

struct MahalanobisResult {
  double distance = 0.0;
  bool regularized = false;
};

/// sqrt(x^T Y^-1 x) for any dimension. A singular Y gets
/// eps * trace(Y) / dim added to its diagonal (eps = 1e-9) and the result is
/// marked regularized.
MahalanobisResult mahalanobis_checked(const Eigen::VectorXd& x,
                                      const Eigen::MatrixXd& covariance);
inline double mahalanobis(const Twist& xi, const Covariance6& covariance) {
  return mahalanobis_checked(xi.vector(), covariance).distance;
}

/// Symmetric within 1e-12 relative and smallest eigenvalue >= -1e-10 trace.
bool is_valid_covariance(const Covariance6& covariance);

}  // namespace cello
