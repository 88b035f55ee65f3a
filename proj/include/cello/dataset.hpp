#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "cello/point_cloud.hpp"
#include "cello/se3.hpp"

namespace cello {

/// Ordered clouds with sensor-to-world ground-truth poses.
struct SequenceDataset {
  std::vector<PointCloud> clouds;
  std::vector<RigidTransform> poses;
  std::vector<std::string> names;

  [[nodiscard]] std::size_t size() const { return clouds.size(); }
  /// Relative ground truth mapping cloud j into cloud i's frame.
  [[nodiscard]] RigidTransform relative_pose(std::size_t i, std::size_t j) const {
    return poses[i].inverse() * poses[j];
  }
};

/// All (i, j) with i < j < length and j - i <= max_gap.
std::vector<std::pair<std::size_t, std::size_t>> enumerate_pairs(
    std::size_t length, std::size_t max_gap = 4);

/// Cloud CSV: header `x,y,z`, one point per row.
PointCloud read_cloud_csv(const std::filesystem::path& path);
void write_cloud_csv(std::ostream& out, const PointCloud& cloud);
void write_cloud_csv(const std::filesystem::path& path, const PointCloud& cloud);

/// Pose CSV: one pose per row, 12 values of the row-major 3x4 [R | t].
std::vector<RigidTransform> read_poses_csv(const std::filesystem::path& path);
void write_poses_csv(std::ostream& out, const std::vector<RigidTransform>& poses);

/// Directory with `poses.csv` and one cloud CSV per pose (every other *.csv,
/// in name order). Errors name the offending file and row.
SequenceDataset load_dataset(const std::filesystem::path& dir);
void save_dataset(const SequenceDataset& dataset, const std::filesystem::path& dir);

/// Row-major matrix CSV preceded by a `# shape: r x c` comment line.
void write_matrix_csv(std::ostream& out, const Eigen::MatrixXd& m);
Eigen::MatrixXd read_matrix_csv(std::istream& in);

}  // namespace cello
