#include "cello/point_cloud.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include <Eigen/Eigenvalues>

#include "cello/kdtree.hpp"
#include "cello/random.hpp"

namespace cello {

PointCloud::PointCloud(Eigen::Matrix3Xd points, std::string frame)
    : points_(std::move(points)), frame_(std::move(frame)) {
  if (!points_.allFinite()) {
    throw std::invalid_argument("PointCloud: non-finite coordinates");
  }
}

void PointCloud::set_normals(Eigen::Matrix3Xd normals,
                             std::vector<std::uint8_t> valid) {
  if (normals.cols() != size() ||
      valid.size() != static_cast<std::size_t>(size())) {
    throw std::invalid_argument("PointCloud: normal count mismatch");
  }
  normals_ = std::move(normals);
  normal_valid_ = std::move(valid);
}

void PointCloud::clear_normals() {
  normals_.resize(3, 0);
  normal_valid_.clear();
}

PointCloud PointCloud::select(std::span<const Eigen::Index> indices) const {
  Eigen::Matrix3Xd pts(3, static_cast<Eigen::Index>(indices.size()));
  for (std::size_t i = 0; i < indices.size(); ++i) {
    pts.col(static_cast<Eigen::Index>(i)) = points_.col(indices[i]);
  }
  PointCloud out(std::move(pts), frame_);
  if (has_normals()) {
    Eigen::Matrix3Xd nrm(3, static_cast<Eigen::Index>(indices.size()));
    std::vector<std::uint8_t> valid(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
      nrm.col(static_cast<Eigen::Index>(i)) = normals_.col(indices[i]);
      valid[i] = normal_valid_[static_cast<std::size_t>(indices[i])];
    }
    out.set_normals(std::move(nrm), std::move(valid));
  }
  return out;
}

PointCloud concatenate(const PointCloud& a, const PointCloud& b) {
  Eigen::Matrix3Xd pts(3, a.size() + b.size());
  pts << a.points(), b.points();
  PointCloud out(std::move(pts), a.frame());
  if ((a.has_normals() || a.empty()) && (b.has_normals() || b.empty()) &&
      !out.empty()) {
    Eigen::Matrix3Xd nrm(3, out.size());
    nrm << a.normals(), b.normals();
    std::vector<std::uint8_t> valid = a.normal_valid();
    valid.insert(valid.end(), b.normal_valid().begin(), b.normal_valid().end());
    out.set_normals(std::move(nrm), std::move(valid));
  }
  return out;
}

PointCloud transform_cloud(const PointCloud& cloud, const RigidTransform& t) {
  Eigen::Matrix3Xd pts = (t.rotation() * cloud.points()).colwise() + t.translation();
  PointCloud out(std::move(pts), cloud.frame());
  if (cloud.has_normals()) {
    out.set_normals(t.rotation() * cloud.normals(), cloud.normal_valid());
  }
  return out;
}

LocalGeometry compute_local_geometry(const PointCloud& cloud, int k,
                                     const Eigen::Vector3d& sensor_origin) {
  const Eigen::Index n = cloud.size();
  LocalGeometry geo;
  geo.normals = Eigen::Matrix3Xd::Zero(3, n);
  geo.normal_valid.assign(static_cast<std::size_t>(n), 0);
  geo.planarity = Eigen::VectorXd::Zero(n);
  geo.cylindricality = Eigen::VectorXd::Zero(n);
  geo.shape_valid.assign(static_cast<std::size_t>(n), 0);
  if (n < 3) {
    return geo;
  }

  const NeighborIndex index(cloud);
  std::vector<Neighbor> nbrs;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Vector3d p = cloud.point(i);
    index.k_nearest(p, k, nbrs);
    if (nbrs.size() < 3) {
      continue;
    }
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    for (const auto& nb : nbrs) {
      mean += cloud.point(nb.index);
    }
    mean /= static_cast<double>(nbrs.size());
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (const auto& nb : nbrs) {
      const Eigen::Vector3d d = cloud.point(nb.index) - mean;
      cov += d * d.transpose();
    }
    cov /= static_cast<double>(nbrs.size());

    const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
    // Ascending eigenvalues.
    const Eigen::Vector3d lambda = es.eigenvalues().cwiseMax(0.0);
    const double scale = lambda(2);
    const auto idx = static_cast<std::size_t>(i);
    if (scale <= 0.0) {
      continue;
    }

    const double s1 = std::sqrt(lambda(2));
    const double s2 = std::sqrt(lambda(1));
    const double s3 = std::sqrt(lambda(0));
    geo.cylindricality(i) = (s1 - s2) / s1;
    geo.planarity(i) = (s2 - s3) / s1;
    geo.shape_valid[idx] = 1;

    if (lambda(1) <= 1e-12 * scale) {
      continue;  // rank < 2: no surface normal
    }
    Eigen::Vector3d normal = es.eigenvectors().col(0).normalized();
    if (normal.dot(sensor_origin - p) < 0.0) {
      normal = -normal;
    }
    geo.normals.col(i) = normal;
    geo.normal_valid[idx] = 1;
  }
  return geo;
}

PointCloud estimate_normals(const PointCloud& cloud, int k,
                            const Eigen::Vector3d& sensor_origin) {
  if (k < 3 || cloud.size() <= k) {
    throw std::invalid_argument("estimate_normals: requires n > k >= 3");
  }
  LocalGeometry geo = compute_local_geometry(cloud, k, sensor_origin);
  PointCloud out = cloud;
  out.set_normals(std::move(geo.normals), std::move(geo.normal_valid));
  return out;
}

PointCloud random_subsample(const PointCloud& cloud, double ratio,
                            std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio <= 1.0)) {
    throw std::invalid_argument("random_subsample: ratio must be in (0, 1]");
  }
  const Eigen::Index n = cloud.size();
  const auto keep = static_cast<Eigen::Index>(
      std::ceil(ratio * static_cast<double>(n) - 1e-9));
  if (keep >= n) {
    return cloud;
  }
  // Partial Fisher-Yates.
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  Rng rng = make_rng(seed, "random_subsample");
  for (Eigen::Index i = 0; i < keep; ++i) {
    const auto span = static_cast<std::uint64_t>(n - i);
    const auto j = i + static_cast<Eigen::Index>(rng() % span);
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  idx.resize(static_cast<std::size_t>(keep));
  std::sort(idx.begin(), idx.end());
  return cloud.select(idx);
}

Eigen::VectorXd local_density(const PointCloud& cloud, int k) {
  const Eigen::Index n = cloud.size();
  Eigen::VectorXd density = Eigen::VectorXd::Zero(n);
  if (n < 2) {
    return density;
  }
  const NeighborIndex index(cloud);
  std::vector<Neighbor> nbrs;
  for (Eigen::Index i = 0; i < n; ++i) {
    index.k_nearest(cloud.point(i), k + 1, nbrs);
    const double count = static_cast<double>(nbrs.size() - 1);
    const double r = std::sqrt(nbrs.back().squared_distance);
    density(i) = r > 0.0
                     ? count / (4.0 / 3.0 * std::numbers::pi * r * r * r)
                     : std::numeric_limits<double>::infinity();
  }
  return density;
}

PointCloud max_density_filter(const PointCloud& cloud, double max_density,
                              std::uint64_t seed) {
  if (!(max_density > 0.0)) {
    throw std::invalid_argument("max_density_filter: max_density must be > 0");
  }
  PointCloud current = cloud;
  for (int pass = 0;; ++pass) {
    const Eigen::VectorXd density = local_density(current);
    if (current.size() < 2 || density.maxCoeff() <= max_density) {
      break;
    }
    Rng rng = make_rng(seed, "max_density_filter", static_cast<std::uint64_t>(pass));
    std::vector<Eigen::Index> keep;
    keep.reserve(static_cast<std::size_t>(current.size()));
    for (Eigen::Index i = 0; i < current.size(); ++i) {
      const double u = uniform01(rng);
      if (density(i) <= max_density || u < max_density / density(i)) {
        keep.push_back(i);
      }
    }
    if (keep.empty()) {
      keep.push_back(0);
    } else if (static_cast<Eigen::Index>(keep.size()) == current.size()) {
      // Points barely over the limit are rarely drawn; drop the densest so
      // every pass makes progress.
      Eigen::Index densest = 0;
      density.maxCoeff(&densest);
      keep.erase(keep.begin() + densest);
    }
    current = current.select(keep);
  }
  return current;
}

}  // namespace cello
