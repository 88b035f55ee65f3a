#pragma once

#include <array>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "cello/point_cloud.hpp"
#include "cello/se3.hpp"

namespace cello {

/// Fixed grid anchored at the reference sensor origin, axes aligned with the
/// reference frame. Defaults: 4x4x4 cells over x, y in [-12.5, 12.5] m and
/// z in [-2.5, 7.5] m.
struct VoxelGridSpec {
  std::array<int, 3> counts{4, 4, 4};
  Eigen::Vector3d min_corner{-12.5, -12.5, -2.5};
  Eigen::Vector3d extent{25.0, 25.0, 10.0};

  [[nodiscard]] int cells() const { return counts[0] * counts[1] * counts[2]; }
  /// x-major, then y, then z.
  [[nodiscard]] int flat_index(int ix, int iy, int iz) const {
    return (ix * counts[1] + iy) * counts[2] + iz;
  }
  [[nodiscard]] std::optional<int> locate(const Eigen::Vector3d& p) const;
  void validate() const;

  /// Same cell counts, extents multiplied by `factor` (desk-scale scenes).
  [[nodiscard]] VoxelGridSpec scaled(double factor) const;
};

inline constexpr int kVoxelFeatures = 11;  // p, c, h1..h9
inline constexpr int kHistogramBins = 9;

/// Axial codebook for the normal histogram: x, y, z, the four upper-hemisphere
/// diagonals (+-1, +-1, 1)/sqrt(3), then (1, 1, 0)/sqrt(2) and (1, -1, 0)/sqrt(2).
const std::array<Eigen::Vector3d, kHistogramBins>& histogram_codebook();

/// Bin whose axis makes the smallest angle with the normal (sign ignored).
int histogram_bin(const Eigen::Vector3d& normal);

struct CloudDescriptor {
  Eigen::VectorXd values;
  bool empty_overlap = false;

  [[nodiscard]] Eigen::Index size() const { return values.size(); }
};

inline constexpr double kDefaultOverlapRadius = 0.5;

/// Points of T P with a neighbor in Q within `radius`, followed by points of Q
/// with a neighbor in T P within `radius`. Expressed in Q's frame.
PointCloud extract_overlap(const PointCloud& reading,
                           const PointCloud& reference,
                           const RigidTransform& transform,
                           double radius = kDefaultOverlapRadius);

struct VoxelAssignment {
  std::vector<std::vector<Eigen::Index>> cells;
  std::size_t dropped = 0;
};

VoxelAssignment voxelize(const PointCloud& cloud, const VoxelGridSpec& grid);

struct ShapeFeatures {
  double planarity = 0.0;
  double cylindricality = 0.0;
};

/// Mean per-point planarity and cylindricality over `members` whose
/// neighborhoods are non-degenerate. (0, 0) when none are.
ShapeFeatures shape_features(const LocalGeometry& geometry,
                             std::span<const Eigen::Index> members);

/// Histogram of `members`' valid normals over the codebook, normalized by the
/// member count (invalid normals count in the denominator only).
std::array<double, kHistogramBins> normal_histogram9(
    const LocalGeometry& geometry, std::span<const Eigen::Index> members);

/// Descriptor of an overlap cloud already expressed in the grid frame.
CloudDescriptor describe_overlap(const PointCloud& overlap,
                                 const VoxelGridSpec& grid = {},
                                 int neighbors = kDefaultNormalNeighbors);

/// g(P, T Q): overlap extraction, voxelization, per-voxel features.
CloudDescriptor describe_pair(const PointCloud& reading,
                              const PointCloud& reference,
                              const RigidTransform& transform,
                              const VoxelGridSpec& grid = {},
                              double radius = kDefaultOverlapRadius);

struct TrainingExample {
  CloudDescriptor descriptor;
  Covariance6 covariance = Covariance6::Zero();
  std::string pair_id;
  double augmentation_angle = 0.0;  // rad about the reference z axis
  /// Overlap cloud in the reference frame; needed to recompute descriptors.
  std::shared_ptr<const PointCloud> overlap;
};

/// Rotates the reference frame by theta about z: the descriptor is recomputed
/// on the rotated overlap cloud and Y -> Ad Y Ad^T. Throws without an overlap
/// cloud.
TrainingExample augment_example(const TrainingExample& example, double theta,
                                const VoxelGridSpec& grid = {});

}  // namespace cello
