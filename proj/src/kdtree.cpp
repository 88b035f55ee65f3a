#include "cello/kdtree.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace cello {

namespace {

constexpr Eigen::Index kLeafSize = 10;

bool closer(const Neighbor& a, const Neighbor& b) {
  return a.squared_distance < b.squared_distance ||
         (a.squared_distance == b.squared_distance && a.index < b.index);
}

}  // namespace

NeighborIndex::NeighborIndex(const PointCloud& cloud)
    : NeighborIndex(cloud.points()) {}

NeighborIndex::NeighborIndex(const Eigen::Matrix3Xd& points)
    : points_(std::make_shared<const Eigen::Matrix3Xd>(points)) {
  if (points.cols() == 0) {
    throw std::invalid_argument("NeighborIndex: empty cloud");
  }
  order_.resize(static_cast<std::size_t>(points.cols()));
  std::iota(order_.begin(), order_.end(), Eigen::Index{0});
  nodes_.reserve(static_cast<std::size_t>(2 * points.cols() / kLeafSize + 1));
  build(0, points.cols());
}

int NeighborIndex::build(Eigen::Index begin, Eigen::Index end) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back({});
  nodes_[id].begin = begin;
  nodes_[id].end = end;
  if (end - begin <= kLeafSize) {
    return id;
  }

  const auto& pts = *points_;
  Eigen::Vector3d lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::max());
  Eigen::Vector3d hi = -lo;
  for (Eigen::Index i = begin; i < end; ++i) {
    lo = lo.cwiseMin(pts.col(order_[i]));
    hi = hi.cwiseMax(pts.col(order_[i]));
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);
  if (hi(axis) - lo(axis) <= 0.0) {
    return id;  // all points coincide
  }

  const Eigen::Index mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid,
                   order_.begin() + end, [&](Eigen::Index a, Eigen::Index b) {
                     return pts(axis, a) < pts(axis, b);
                   });
  const double split = pts(axis, order_[mid]);
  const int left = build(begin, mid);
  const int right = build(mid, end);
  nodes_[id].axis = axis;
  nodes_[id].split = split;
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

void NeighborIndex::search(int node_id, const Eigen::Vector3d& query, int k,
                           std::vector<Neighbor>& heap) const {
  const Node& node = nodes_[node_id];
  if (node.axis < 0) {
    const auto& pts = *points_;
    for (Eigen::Index i = node.begin; i < node.end; ++i) {
      const Eigen::Index idx = order_[i];
      const Neighbor cand{idx, (pts.col(idx) - query).squaredNorm()};
      if (static_cast<int>(heap.size()) < k) {
        heap.push_back(cand);
        std::push_heap(heap.begin(), heap.end(), closer);
      } else if (closer(cand, heap.front())) {
        std::pop_heap(heap.begin(), heap.end(), closer);
        heap.back() = cand;
        std::push_heap(heap.begin(), heap.end(), closer);
      }
    }
    return;
  }

  // Left holds coordinates <= split, right holds coordinates >= split.
  const double diff = query(node.axis) - node.split;
  const int near = diff < 0.0 ? node.left : node.right;
  const int far = diff < 0.0 ? node.right : node.left;
  search(near, query, k, heap);
  // Equal distances must still be visited so that index tie-breaks are exact.
  if (static_cast<int>(heap.size()) < k ||
      diff * diff <= heap.front().squared_distance) {
    search(far, query, k, heap);
  }
}

void NeighborIndex::k_nearest(const Eigen::Vector3d& query, int k,
                              std::vector<Neighbor>& out) const {
  out.clear();
  if (k <= 0) {
    return;
  }
  k = static_cast<int>(std::min<Eigen::Index>(k, size()));
  out.reserve(static_cast<std::size_t>(k));
  search(0, query, k, out);
  std::sort_heap(out.begin(), out.end(), closer);
}

std::vector<Neighbor> NeighborIndex::k_nearest(const Eigen::Vector3d& query,
                                               int k) const {
  std::vector<Neighbor> out;
  k_nearest(query, k, out);
  return out;
}

Neighbor NeighborIndex::nearest(const Eigen::Vector3d& query) const {
  std::vector<Neighbor> out;
  k_nearest(query, 1, out);
  return out.front();
}

}  // namespace cello
