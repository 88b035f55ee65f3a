#include "cello/se3.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "cello/diagnostics.hpp"

namespace cello {

namespace {

constexpr double kSmallAngle = 1e-3;
constexpr double kPi = std::numbers::pi;

// <<A>> = -tr(A) I + A
Eigen::Matrix3d op1(const Eigen::Matrix3d& a) {
  return -a.trace() * Eigen::Matrix3d::Identity() + a;
}

// <<A, B>> = <<A>><<B>> + <<BA>>
Eigen::Matrix3d op2(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b) {
  return op1(a) * op1(b) + op1(b * a);
}

Matrix6d op1_6(const Matrix6d& s) {
  Matrix6d out = Matrix6d::Zero();
  const Eigen::Matrix3d ww = s.bottomRightCorner<3, 3>();
  const Eigen::Matrix3d uw = s.topRightCorner<3, 3>();
  out.topLeftCorner<3, 3>() = op1(ww);
  out.topRightCorner<3, 3>() = op1(uw + uw.transpose());
  out.bottomRightCorner<3, 3>() = op1(ww);
  return out;
}

}  // namespace

RigidTransform RigidTransform::checked(const Eigen::Matrix3d& rotation,
                                       const Eigen::Vector3d& translation,
                                       double tolerance) {
  if (!rotation.allFinite() || !translation.allFinite()) {
    throw std::invalid_argument("RigidTransform: non-finite entries");
  }
  const double ortho =
      (rotation * rotation.transpose() - Eigen::Matrix3d::Identity())
          .cwiseAbs()
          .maxCoeff();
  if (ortho > tolerance || std::abs(rotation.determinant() - 1.0) > tolerance) {
    throw std::invalid_argument("RigidTransform: rotation is not in SO(3)");
  }
  return {rotation, translation};
}

Eigen::Matrix4d RigidTransform::matrix() const {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = rotation_;
  m.topRightCorner<3, 1>() = translation_;
  return m;
}

double transform_distance(const RigidTransform& a, const RigidTransform& b) {
  return (a.matrix() - b.matrix()).norm();
}

Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
  Eigen::Matrix3d s;
  // clang-format off
  s <<     0.0, -v.z(),  v.y(),
         v.z(),    0.0, -v.x(),
        -v.y(),  v.x(),    0.0;
  // clang-format on
  return s;
}

Eigen::Matrix3d so3_exp(const Eigen::Vector3d& omega) {
  const double theta2 = omega.squaredNorm();
  const double theta = std::sqrt(theta2);
  const Eigen::Matrix3d w = skew(omega);
  double a;
  double b;
  if (theta < kSmallAngle) {
    a = 1.0 - theta2 / 6.0 + theta2 * theta2 / 120.0;
    b = 0.5 - theta2 / 24.0 + theta2 * theta2 / 720.0;
  } else {
    const double half_sin = std::sin(0.5 * theta);
    a = std::sin(theta) / theta;
    b = 2.0 * half_sin * half_sin / theta2;  // (1 - cos) / theta^2 without cancellation
  }
  return Eigen::Matrix3d::Identity() + a * w + b * w * w;
}

Eigen::Vector3d so3_log(const Eigen::Matrix3d& rotation, bool* near_pi) {
  const Eigen::Vector3d vee(rotation(2, 1) - rotation(1, 2),
                            rotation(0, 2) - rotation(2, 0),
                            rotation(1, 0) - rotation(0, 1));
  const double sin_theta2 = vee.norm();  // 2 sin(theta)
  const double cos_theta = std::clamp((rotation.trace() - 1.0) / 2.0, -1.0, 1.0);
  const double theta = std::atan2(0.5 * sin_theta2, cos_theta);
  if (near_pi != nullptr) {
    *near_pi = (kPi - theta) < 1e-9;
  }

  if (theta < kSmallAngle) {
    // theta / (2 sin theta) ~ 1/2 + theta^2 / 12 + 7 theta^4 / 720
    const double t2 = theta * theta;
    return (0.5 + t2 / 12.0 + 7.0 * t2 * t2 / 720.0) * vee;
  }
  if (cos_theta > -0.9) {
    return theta / (2.0 * std::sin(theta)) * vee;
  }

  // Near pi the skew part vanishes; recover the axis from the symmetric part
  // (1 - cos theta) a a^T = (R + R^T) / 2 - cos theta I.
  const Eigen::Matrix3d b =
      0.5 * (rotation + rotation.transpose()) -
      cos_theta * Eigen::Matrix3d::Identity();
  Eigen::Index col = 0;
  b.diagonal().maxCoeff(&col);
  Eigen::Vector3d axis = b.col(col);
  axis.normalize();
  if (axis.dot(vee) < 0.0) {
    axis = -axis;
  }
  return theta * axis;
}

Eigen::Matrix3d so3_left_jacobian(const Eigen::Vector3d& omega) {
  const double theta2 = omega.squaredNorm();
  const double theta = std::sqrt(theta2);
  const Eigen::Matrix3d w = skew(omega);
  double a;
  double b;
  if (theta < kSmallAngle) {
    a = 0.5 - theta2 / 24.0 + theta2 * theta2 / 720.0;
    b = 1.0 / 6.0 - theta2 / 120.0 + theta2 * theta2 / 5040.0;
  } else {
    const double half_sin = std::sin(0.5 * theta);
    a = 2.0 * half_sin * half_sin / theta2;
    b = (theta - std::sin(theta)) / (theta2 * theta);
  }
  return Eigen::Matrix3d::Identity() + a * w + b * w * w;
}

Eigen::Matrix3d so3_left_jacobian_inverse(const Eigen::Vector3d& omega) {
  const double theta2 = omega.squaredNorm();
  const double theta = std::sqrt(theta2);
  const Eigen::Matrix3d w = skew(omega);
  double c;
  if (theta < kSmallAngle) {
    c = 1.0 / 12.0 + theta2 / 720.0 + theta2 * theta2 / 30240.0;
  } else {
    const double half = 0.5 * theta;
    c = (1.0 - half / std::tan(half)) / theta2;
  }
  return Eigen::Matrix3d::Identity() - 0.5 * w + c * w * w;
}

RigidTransform exp_map(const Twist& xi) {
  const Eigen::Vector3d omega = xi.omega();
  return {so3_exp(omega), so3_left_jacobian(omega) * xi.u()};
}

Twist log_map(const RigidTransform& transform) {
  const Eigen::Vector3d omega = so3_log(transform.rotation());
  return {so3_left_jacobian_inverse(omega) * transform.translation(), omega};
}

Matrix6d adjoint(const RigidTransform& transform) {
  const Eigen::Matrix3d& r = transform.rotation();
  Matrix6d ad = Matrix6d::Zero();
  ad.topLeftCorner<3, 3>() = r;
  ad.topRightCorner<3, 3>() = skew(transform.translation()) * r;
  ad.bottomRightCorner<3, 3>() = r;
  return ad;
}

Covariance6 transform_covariance(const Covariance6& covariance,
                                 const RigidTransform& transform) {
  const Matrix6d ad = adjoint(transform);
  Covariance6 out = ad * covariance * ad.transpose();
  return 0.5 * (out + out.transpose());
}

Covariance6 compound_covariance(const RigidTransform& first_mean,
                                const Covariance6& first,
                                const Covariance6& second,
                                CompoundOptions options) {
  if (!is_valid_covariance(first) || !is_valid_covariance(second)) {
    throw std::invalid_argument(
        "compound_covariance: input covariance is not symmetric PSD");
  }
  if (first.trace() >= 1.0 || second.trace() >= 1.0) {
    warn("compound_covariance: trace >= 1, outside the small-covariance regime");
  }

  const Covariance6 second_moved = transform_covariance(second, first_mean);
  Covariance6 out = first + second_moved;
  if (!options.fourth_order) {
    return out;
  }

  const Eigen::Matrix3d s1uu = first.topLeftCorner<3, 3>();
  const Eigen::Matrix3d s1uw = first.topRightCorner<3, 3>();
  const Eigen::Matrix3d s1ww = first.bottomRightCorner<3, 3>();
  const Eigen::Matrix3d s2uu = second_moved.topLeftCorner<3, 3>();
  const Eigen::Matrix3d s2uw = second_moved.topRightCorner<3, 3>();
  const Eigen::Matrix3d s2ww = second_moved.bottomRightCorner<3, 3>();

  const Matrix6d a1 = op1_6(first);
  const Matrix6d a2 = op1_6(second_moved);

  Matrix6d b;
  const Eigen::Matrix3d buu = op2(s1ww, s2uu) + op2(s1uw.transpose(), s2uw) +
                              op2(s1uw, s2uw.transpose()) + op2(s1uu, s2ww);
  const Eigen::Matrix3d buw =
      op2(s1ww, s2uw.transpose()) + op2(s1uw.transpose(), s2ww);
  const Eigen::Matrix3d bww = op2(s1ww, s2ww);
  b << buu, buw, buw.transpose(), bww;

  out += (a1 * second_moved + second_moved * a1.transpose() + a2 * first +
          first * a2.transpose()) /
             12.0 +
         0.25 * b;
  return 0.5 * (out + out.transpose());
}

MahalanobisResult mahalanobis_checked(const Eigen::VectorXd& x,
                                      const Eigen::MatrixXd& covariance) {
  if (x.size() != covariance.rows() || covariance.rows() != covariance.cols()) {
    throw std::invalid_argument("mahalanobis: dimension mismatch");
  }
  MahalanobisResult result;
  if (x.isZero(0.0)) {
    return result;
  }
  const Eigen::MatrixXd sym = 0.5 * (covariance + covariance.transpose());
  Eigen::LLT<Eigen::MatrixXd> llt(sym);
  const double min_eig =
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(sym, Eigen::EigenvaluesOnly)
          .eigenvalues()
          .minCoeff();
  const double scale = std::max(sym.trace(), 0.0) / static_cast<double>(x.size());
  if (llt.info() != Eigen::Success || min_eig <= 1e-12 * scale) {
    const double eps = 1e-9 * (scale > 0.0 ? scale : 1.0);
    llt.compute(sym + eps * Eigen::MatrixXd::Identity(x.size(), x.size()));
    result.regularized = true;
    warn("mahalanobis: singular covariance, regularized");
  }
  const Eigen::VectorXd y = llt.matrixL().solve(x);
  result.distance = y.norm();
  return result;
}

bool is_valid_covariance(const Covariance6& covariance) {
  if (!covariance.allFinite()) {
    return false;
  }
  const double norm = covariance.norm();
  if ((covariance - covariance.transpose()).norm() > 1e-12 * std::max(norm, 1e-300)) {
    return false;
  }
  const double min_eig =
      Eigen::SelfAdjointEigenSolver<Covariance6>(covariance, Eigen::EigenvaluesOnly)
          .eigenvalues()
          .minCoeff();
  return min_eig >= -1e-10 * std::max(std::abs(covariance.trace()), 1e-300);
}

}  // namespace cello
