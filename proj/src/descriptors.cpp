#include "cello/descriptors.hpp"

#include <cmath>
#include <stdexcept>

#include "cello/kdtree.hpp"

namespace cello {

std::optional<int> VoxelGridSpec::locate(const Eigen::Vector3d& p) const {
  std::array<int, 3> idx{};
  for (int a = 0; a < 3; ++a) {
    const double f = (p(a) - min_corner(a)) / extent(a) * counts[a];
    if (!(f >= 0.0) || f >= counts[a]) {
      return std::nullopt;
    }
    idx[a] = static_cast<int>(std::floor(f));
  }
  return flat_index(idx[0], idx[1], idx[2]);
}

void VoxelGridSpec::validate() const {
  for (int a = 0; a < 3; ++a) {
    if (counts[a] < 1 || !(extent(a) > 0.0)) {
      throw std::invalid_argument("VoxelGridSpec: counts and extents must be positive");
    }
  }
}

VoxelGridSpec VoxelGridSpec::scaled(double factor) const {
  VoxelGridSpec out = *this;
  out.min_corner *= factor;
  out.extent *= factor;
  return out;
}

const std::array<Eigen::Vector3d, kHistogramBins>& histogram_codebook() {
  static const std::array<Eigen::Vector3d, kHistogramBins> book = [] {
    const double d = 1.0 / std::sqrt(3.0);
    const double h = 1.0 / std::sqrt(2.0);
    return std::array<Eigen::Vector3d, kHistogramBins>{
        Eigen::Vector3d(1, 0, 0),  Eigen::Vector3d(0, 1, 0),
        Eigen::Vector3d(0, 0, 1),  Eigen::Vector3d(d, d, d),
        Eigen::Vector3d(-d, d, d), Eigen::Vector3d(d, -d, d),
        Eigen::Vector3d(-d, -d, d), Eigen::Vector3d(h, h, 0),
        Eigen::Vector3d(h, -h, 0)};
  }();
  return book;
}

int histogram_bin(const Eigen::Vector3d& normal) {
  const auto& book = histogram_codebook();
  int best = 0;
  double best_dot = -1.0;
  for (int b = 0; b < kHistogramBins; ++b) {
    const double dot = std::abs(normal.dot(book[static_cast<std::size_t>(b)]));
    if (dot > best_dot) {
      best_dot = dot;
      best = b;
    }
  }
  return best;
}

namespace {

std::vector<Eigen::Index> points_near(const PointCloud& queries,
                                      const PointCloud& target, double radius) {
  std::vector<Eigen::Index> out;
  if (queries.empty() || target.empty()) {
    return out;
  }
  const NeighborIndex index(target);
  const double r2 = radius * radius;
  for (Eigen::Index i = 0; i < queries.size(); ++i) {
    if (index.nearest(queries.point(i)).squared_distance <= r2) {
      out.push_back(i);
    }
  }
  return out;
}

}  // namespace

PointCloud extract_overlap(const PointCloud& reading,
                           const PointCloud& reference,
                           const RigidTransform& transform, double radius) {
  if (!(radius > 0.0)) {
    throw std::invalid_argument("extract_overlap: radius must be > 0");
  }
  const PointCloud moved = transform_cloud(reading, transform);
  const auto from_reading = points_near(moved, reference, radius);
  const auto from_reference = points_near(reference, moved, radius);
  PointCloud a = moved.select(from_reading);
  PointCloud b = reference.select(from_reference);
  if (a.has_normals() != b.has_normals()) {
    a.clear_normals();
    b.clear_normals();
  }
  PointCloud out = concatenate(a, b);
  out.set_frame(reference.frame());
  return out;
}

VoxelAssignment voxelize(const PointCloud& cloud, const VoxelGridSpec& grid) {
  grid.validate();
  VoxelAssignment out;
  out.cells.resize(static_cast<std::size_t>(grid.cells()));
  for (Eigen::Index i = 0; i < cloud.size(); ++i) {
    if (const auto cell = grid.locate(cloud.point(i))) {
      out.cells[static_cast<std::size_t>(*cell)].push_back(i);
    } else {
      ++out.dropped;
    }
  }
  return out;
}

ShapeFeatures shape_features(const LocalGeometry& geometry,
                             std::span<const Eigen::Index> members) {
  ShapeFeatures f;
  std::size_t valid = 0;
  for (Eigen::Index i : members) {
    if (geometry.shape_valid[static_cast<std::size_t>(i)] == 0) {
      continue;
    }
    f.planarity += geometry.planarity(i);
    f.cylindricality += geometry.cylindricality(i);
    ++valid;
  }
  if (valid > 0) {
    f.planarity /= static_cast<double>(valid);
    f.cylindricality /= static_cast<double>(valid);
  }
  return f;
}

std::array<double, kHistogramBins> normal_histogram9(
    const LocalGeometry& geometry, std::span<const Eigen::Index> members) {
  std::array<double, kHistogramBins> h{};
  if (members.empty()) {
    return h;
  }
  for (Eigen::Index i : members) {
    if (geometry.normal_valid[static_cast<std::size_t>(i)] != 0) {
      h[static_cast<std::size_t>(histogram_bin(geometry.normals.col(i)))] += 1.0;
    }
  }
  for (double& v : h) {
    v /= static_cast<double>(members.size());
  }
  return h;
}

CloudDescriptor describe_overlap(const PointCloud& overlap,
                                 const VoxelGridSpec& grid, int neighbors) {
  grid.validate();
  CloudDescriptor d;
  d.values = Eigen::VectorXd::Zero(grid.cells() * kVoxelFeatures);
  d.empty_overlap = overlap.empty();
  if (overlap.empty()) {
    return d;
  }
  const LocalGeometry geo = compute_local_geometry(overlap, neighbors);
  const VoxelAssignment cells = voxelize(overlap, grid);
  for (int v = 0; v < grid.cells(); ++v) {
    const auto& members = cells.cells[static_cast<std::size_t>(v)];
    if (members.empty()) {
      continue;
    }
    const ShapeFeatures sf = shape_features(geo, members);
    const auto h = normal_histogram9(geo, members);
    const Eigen::Index base = static_cast<Eigen::Index>(v) * kVoxelFeatures;
    d.values(base) = sf.planarity;
    d.values(base + 1) = sf.cylindricality;
    for (int b = 0; b < kHistogramBins; ++b) {
      d.values(base + 2 + b) = h[static_cast<std::size_t>(b)];
    }
  }
  return d;
}

CloudDescriptor describe_pair(const PointCloud& reading,
                              const PointCloud& reference,
                              const RigidTransform& transform,
                              const VoxelGridSpec& grid, double radius) {
  return describe_overlap(extract_overlap(reading, reference, transform, radius),
                          grid);
}

TrainingExample augment_example(const TrainingExample& example, double theta,
                                const VoxelGridSpec& grid) {
  if (!example.overlap) {
    throw std::invalid_argument("augment_example: example has no overlap cloud");
  }
  const RigidTransform rz(so3_exp(Eigen::Vector3d(0.0, 0.0, theta)),
                          Eigen::Vector3d::Zero());
  TrainingExample out;
  auto rotated = std::make_shared<const PointCloud>(
      transform_cloud(*example.overlap, rz));
  out.descriptor = describe_overlap(*rotated, grid);
  out.covariance = transform_covariance(example.covariance, rz);
  out.pair_id = example.pair_id;
  out.augmentation_angle = example.augmentation_angle + theta;
  out.overlap = std::move(rotated);
  return out;
}

}  // namespace cello
