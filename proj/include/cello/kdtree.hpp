#pragma once

#include <memory>
#include <vector>

#include <Eigen/Core>

#include "cello/point_cloud.hpp"

namespace cello {

struct Neighbor {
  Eigen::Index index;
  double squared_distance;
};

/// Static 3-d tree over a snapshot of a point cloud. Results come back sorted
/// by ascending distance, ties broken by lowest point index, which makes them
/// identical to an exhaustive scan.
class NeighborIndex {
 public:
  /// Throws std::invalid_argument for an empty cloud.
  explicit NeighborIndex(const PointCloud& cloud);
  explicit NeighborIndex(const Eigen::Matrix3Xd& points);

  [[nodiscard]] Eigen::Index size() const { return points_->cols(); }
  [[nodiscard]] const Eigen::Matrix3Xd& points() const { return *points_; }

  /// min(k, n) nearest neighbors of `query`.
  [[nodiscard]] std::vector<Neighbor> k_nearest(const Eigen::Vector3d& query,
                                                int k) const;
  /// Allocation-free variant; `out` is cleared and refilled.
  void k_nearest(const Eigen::Vector3d& query, int k,
                 std::vector<Neighbor>& out) const;
  [[nodiscard]] Neighbor nearest(const Eigen::Vector3d& query) const;

 private:
  struct Node {
    // Leaf when axis < 0: points order_[begin, end).
    int axis = -1;
    double split = 0.0;
    int left = -1;
    int right = -1;
    Eigen::Index begin = 0;
    Eigen::Index end = 0;
  };

  int build(Eigen::Index begin, Eigen::Index end);
  void search(int node, const Eigen::Vector3d& query, int k,
              std::vector<Neighbor>& heap) const;

  std::shared_ptr<const Eigen::Matrix3Xd> points_;
  std::vector<Eigen::Index> order_;
  std::vector<Node> nodes_;
};

}  // namespace cello
