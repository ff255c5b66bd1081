#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <queue>
#include <span>
#include <utility>
#include <vector>

#include "nirplan/error.hpp"
#include "nirplan/geometry.hpp"

namespace nirplan {

/// Static 3-d tree over a copy of the input points. Query results refer to
/// positions in the original input order.
class SpatialIndex {
 public:
  struct Neighbor {
    std::size_t index;
    double distance;
  };

  SpatialIndex() = default;

  explicit SpatialIndex(std::span<const Point3> points) : points_(points.begin(), points.end()) {
    order_.resize(points_.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    if (!points_.empty()) {
      nodes_.reserve(2 * points_.size() / kLeafSize + 2);
      build(0, points_.size());
    }
  }

  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }
  const std::vector<Point3>& points() const { return points_; }
  const Point3& point(std::size_t i) const { return points_[i]; }

  Neighbor nearest(const Point3& q) const {
    require_non_empty();
    Neighbor best{0, std::numeric_limits<double>::infinity()};
    double best_sq = best.distance;
    nearest_rec(0, q, best.index, best_sq);
    best.distance = std::sqrt(best_sq);
    return best;
  }

  /// k nearest, sorted by increasing distance (k clipped to size()).
  std::vector<Neighbor> k_nearest(const Point3& q, std::size_t k) const {
    require_non_empty();
    k = std::min(k, points_.size());
    std::priority_queue<std::pair<double, std::size_t>> heap;  // max-heap on squared distance
    if (k > 0) knn_rec(0, q, k, heap);
    std::vector<Neighbor> out(heap.size());
    for (std::size_t i = out.size(); i-- > 0;) {
      out[i] = {heap.top().second, std::sqrt(heap.top().first)};
      heap.pop();
    }
    return out;
  }

  /// Indices of all points with distance <= radius (closed ball), ascending index order.
  std::vector<std::size_t> radius(const Point3& q, double r) const {
    if (!(r > 0)) throw Error(ErrorCode::kInvalidArgument, "radius must be positive");
    std::vector<std::size_t> out;
    if (!points_.empty()) radius_rec(0, q, r, out);
    std::sort(out.begin(), out.end());
    return out;
  }

  /// True when some point other than those in `exclude` lies strictly within r of q.
  template <typename Excluded>
  bool any_within(const Point3& q, double r, const Excluded& exclude) const {
    if (points_.empty()) return false;
    return any_rec(0, q, r * r, exclude);
  }

 private:
  static constexpr std::size_t kLeafSize = 8;

  struct Node {
    std::size_t begin, end;   // range in order_
    std::int32_t left = -1, right = -1;
    int axis = 0;
    double split = 0.0;
    Eigen::Vector3d lo, hi;   // bounding box
  };

  void require_non_empty() const {
    if (points_.empty()) throw Error(ErrorCode::kEmptyInput, "spatial index is empty");
  }

  std::int32_t build(std::size_t begin, std::size_t end) {
    const auto id = static_cast<std::int32_t>(nodes_.size());
    Node node;
    node.begin = begin;
    node.end = end;
    nodes_.push_back(node);
    Eigen::Vector3d lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
    Eigen::Vector3d hi = -lo;
    for (std::size_t i = begin; i < end; ++i) {
      lo = lo.cwiseMin(points_[order_[i]]);
      hi = hi.cwiseMax(points_[order_[i]]);
    }
    nodes_[id].lo = lo;
    nodes_[id].hi = hi;
    if (end - begin <= kLeafSize) return id;

    int axis = 0;
    (hi - lo).maxCoeff(&axis);
    const std::size_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](std::size_t a, std::size_t b) { return points_[a][axis] < points_[b][axis]; });
    nodes_[id].axis = axis;
    nodes_[id].split = points_[order_[mid]][axis];
    const auto l = build(begin, mid);
    const auto r = build(mid, end);
    nodes_[id].left = l;
    nodes_[id].right = r;
    return id;
  }

  static double box_sq_distance(const Node& n, const Point3& q) {
    double d = 0.0;
    for (int a = 0; a < 3; ++a) {
      const double e = std::max({n.lo[a] - q[a], 0.0, q[a] - n.hi[a]});
      d += e * e;
    }
    return d;
  }

  bool is_leaf(const Node& n) const { return n.left < 0; }

  void nearest_rec(std::int32_t id, const Point3& q, std::size_t& best, double& best_sq) const {
    const Node& n = nodes_[id];
    if (box_sq_distance(n, q) > best_sq) return;
    if (is_leaf(n)) {
      for (std::size_t i = n.begin; i < n.end; ++i) {
        const double d = (points_[order_[i]] - q).squaredNorm();
        if (d < best_sq || (d == best_sq && order_[i] < best)) {
          best_sq = d;
          best = order_[i];
        }
      }
      return;
    }
    const bool go_left = q[n.axis] < n.split;
    nearest_rec(go_left ? n.left : n.right, q, best, best_sq);
    nearest_rec(go_left ? n.right : n.left, q, best, best_sq);
  }

  void knn_rec(std::int32_t id, const Point3& q, std::size_t k,
               std::priority_queue<std::pair<double, std::size_t>>& heap) const {
    const Node& n = nodes_[id];
    if (heap.size() == k && box_sq_distance(n, q) > heap.top().first) return;
    if (is_leaf(n)) {
      for (std::size_t i = n.begin; i < n.end; ++i) {
        const double d = (points_[order_[i]] - q).squaredNorm();
        if (heap.size() < k) {
          heap.emplace(d, order_[i]);
        } else if (std::make_pair(d, order_[i]) < heap.top()) {
          heap.pop();
          heap.emplace(d, order_[i]);
        }
      }
      return;
    }
    const bool go_left = q[n.axis] < n.split;
    knn_rec(go_left ? n.left : n.right, q, k, heap);
    knn_rec(go_left ? n.right : n.left, q, k, heap);
  }

  // Membership is decided on the Euclidean norm itself so that results agree
  // bit-for-bit with a linear scan using the same distance function.
  void radius_rec(std::int32_t id, const Point3& q, double r, std::vector<std::size_t>& out) const {
    const Node& n = nodes_[id];
    if (box_sq_distance(n, q) > r * r * (1.0 + 1e-9)) return;
    if (is_leaf(n)) {
      for (std::size_t i = n.begin; i < n.end; ++i) {
        if ((points_[order_[i]] - q).norm() <= r) out.push_back(order_[i]);
      }
      return;
    }
    radius_rec(n.left, q, r, out);
    radius_rec(n.right, q, r, out);
  }

  template <typename Excluded>
  bool any_rec(std::int32_t id, const Point3& q, double r_sq, const Excluded& exclude) const {
    const Node& n = nodes_[id];
    if (box_sq_distance(n, q) >= r_sq) return false;
    if (is_leaf(n)) {
      for (std::size_t i = n.begin; i < n.end; ++i) {
        if ((points_[order_[i]] - q).squaredNorm() < r_sq && !exclude(order_[i])) return true;
      }
      return false;
    }
    return any_rec(n.left, q, r_sq, exclude) || any_rec(n.right, q, r_sq, exclude);
  }

  std::vector<Point3> points_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
};

inline double nearest_distance(const Point3& q, const SpatialIndex& index) { return index.nearest(q).distance; }

inline std::vector<std::size_t> radius_query(const Point3& q, double r, const SpatialIndex& index) {
  return index.radius(q, r);
}

}  // namespace nirplan
