#include "cello/registration.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include <Eigen/Eigenvalues>

#include "cello/random.hpp"

namespace cello {

void IcpConfig::validate() const {
  if (knn < 1) {
    throw std::invalid_argument("IcpConfig: knn must be >= 1");
  }
  if (!(trim_ratio > 0.0 && trim_ratio <= 1.0)) {
    throw std::invalid_argument("IcpConfig: trim_ratio must be in (0, 1]");
  }
  if (max_iterations < 1) {
    throw std::invalid_argument("IcpConfig: max_iterations must be >= 1");
  }
  if (!(subsample_ratio > 0.0 && subsample_ratio <= 1.0)) {
    throw std::invalid_argument("IcpConfig: subsample_ratio must be in (0, 1]");
  }
  if (max_density < 0.0 || translation_threshold < 0.0 ||
      rotation_threshold < 0.0) {
    throw std::invalid_argument("IcpConfig: negative threshold");
  }
  if (normal_neighbors < 3) {
    throw std::invalid_argument("IcpConfig: normal_neighbors must be >= 3");
  }
}

AssociationSet match_points(const PointCloud& reading,
                            const PointCloud& reference,
                            const NeighborIndex& index, int knn) {
  if (reading.empty() || reference.empty()) {
    throw std::invalid_argument("match_points: empty cloud");
  }
  if (knn < 1) {
    throw std::invalid_argument("match_points: knn must be >= 1");
  }
  AssociationSet out;
  out.reserve(static_cast<std::size_t>(reading.size() * knn));
  std::vector<Neighbor> nbrs;
  for (Eigen::Index i = 0; i < reading.size(); ++i) {
    const Eigen::Vector3d p = reading.point(i);
    index.k_nearest(p, knn, nbrs);
    for (const auto& nb : nbrs) {
      Association a;
      a.reading = i;
      a.reference = nb.index;
      a.squared_distance = nb.squared_distance;
      a.reading_point = p;
      a.reference_point = reference.point(nb.index);
      if (reference.normal_is_valid(nb.index)) {
        a.normal = reference.normals().col(nb.index);
      }
      out.push_back(a);
    }
  }
  return out;
}

AssociationSet trim_outliers(const AssociationSet& associations,
                             double trim_ratio) {
  if (!(trim_ratio > 0.0 && trim_ratio <= 1.0)) {
    throw std::invalid_argument("trim_outliers: ratio must be in (0, 1]");
  }
  const std::size_t n = associations.size();
  const auto keep = static_cast<std::size_t>(
      std::floor(trim_ratio * static_cast<double>(n) + 1e-9));
  if (keep >= n) {
    return associations;
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return associations[a].squared_distance < associations[b].squared_distance;
  });
  order.resize(keep);
  std::sort(order.begin(), order.end());
  AssociationSet out;
  out.reserve(keep);
  for (std::size_t i : order) {
    out.push_back(associations[i]);
  }
  return out;
}

PlaneSolution minimize_point_to_plane(const AssociationSet& associations) {
  Matrix6d a = Matrix6d::Zero();
  Vector6d b = Vector6d::Zero();
  for (const auto& assoc : associations) {
    Vector6d row;
    row << assoc.normal, assoc.reading_point.cross(assoc.normal);
    a.noalias() += row * row.transpose();
    b.noalias() -= row * assoc.residual();
  }

  PlaneSolution sol;
  const Eigen::SelfAdjointEigenSolver<Matrix6d> es(a);
  const double lambda_max = es.eigenvalues()(5);
  if (!(lambda_max > 0.0)) {
    sol.degenerate = true;
    return sol;
  }
  Vector6d proj = es.eigenvectors().transpose() * b;
  for (int i = 0; i < 6; ++i) {
    const double lambda = es.eigenvalues()(i);
    if (lambda > 1e-10 * lambda_max) {
      proj(i) /= lambda;
    } else {
      proj(i) = 0.0;
      sol.degenerate = true;
    }
  }
  sol.increment = Twist(es.eigenvectors() * proj);
  return sol;
}

RigidTransform increment_transform(const Twist& increment) {
  return {so3_exp(increment.omega()), increment.u()};
}

double point_to_plane_cost(const AssociationSet& associations) {
  double cost = 0.0;
  for (const auto& a : associations) {
    const double r = a.residual();
    cost += r * r;
  }
  return cost;
}

namespace {

PointCloud apply_filters(const PointCloud& cloud, const IcpConfig& config,
                         std::uint64_t stream) {
  PointCloud out = cloud;
  if (config.max_density > 0.0) {
    out = max_density_filter(out, config.max_density,
                             derive_seed(config.filter_seed, "icp/density", stream));
  }
  if (config.subsample_ratio < 1.0) {
    out = random_subsample(out, config.subsample_ratio,
                           derive_seed(config.filter_seed, "icp/subsample", stream));
  }
  return out;
}

}  // namespace

IcpProblem::IcpProblem(const PointCloud& reading, const PointCloud& reference,
                       IcpConfig config)
    : config_(config) {
  config_.validate();
  if (reading.empty() || reference.empty()) {
    throw std::invalid_argument("icp: empty cloud");
  }
  reading_ = apply_filters(reading, config_, 0);
  reference_ = apply_filters(reference, config_, 1);
  if (!reference_.has_normals()) {
    reference_ = estimate_normals(reference_, config_.normal_neighbors);
  }
  index_ = std::make_shared<const NeighborIndex>(reference_);
}

AssociationSet IcpProblem::associations_at(const RigidTransform& pose) const {
  const PointCloud moved = transform_cloud(reading_, pose);
  return trim_outliers(match_points(moved, reference_, *index_, config_.knn),
                       config_.trim_ratio);
}

double IcpProblem::objective_value(const RigidTransform& pose) const {
  return point_to_plane_cost(associations_at(pose));
}

RegistrationResult IcpProblem::register_from(const RigidTransform& initial) const {
  RegistrationResult result;
  RigidTransform pose = initial;
  RigidTransform two_back = initial;
  RigidTransform one_back = initial;
  for (int it = 1; it <= config_.max_iterations; ++it) {
    const PlaneSolution sol = minimize_point_to_plane(associations_at(pose));
    two_back = one_back;
    one_back = pose;
    pose = increment_transform(sol.increment) * pose;
    result.iterations = it;
    result.degenerate = result.degenerate || sol.degenerate;
    if (!sol.increment.vector().allFinite()) {
      break;
    }
    if (sol.increment.u().norm() < config_.translation_threshold &&
        sol.increment.omega().norm() < config_.rotation_threshold) {
      result.converged = true;
      break;
    }
    // Alternating between two association sets: further iterations only
    // repeat the cycle.
    if (config_.detect_cycles && it >= 2) {
      const Twist back = log_map(pose * two_back.inverse());
      if (back.u().norm() < config_.translation_threshold &&
          back.omega().norm() < config_.rotation_threshold) {
        result.converged = true;
        result.cycled = true;
        break;
      }
    }
  }
  result.transform = pose;
  result.objective = objective_value(pose);
  return result;
}

RegistrationResult icp(const PointCloud& reading, const PointCloud& reference,
                       const RigidTransform& initial, const IcpConfig& config) {
  return IcpProblem(reading, reference, config).register_from(initial);
}

double objective_value(const PointCloud& reading, const PointCloud& reference,
                       const RigidTransform& pose, const IcpConfig& config) {
  return IcpProblem(reading, reference, config).objective_value(pose);
}

}  // namespace cello
