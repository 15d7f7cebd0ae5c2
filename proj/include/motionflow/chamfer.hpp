#pragma once

#include <algorithm>
#include <cstddef>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "motionflow/geometry.hpp"

namespace motionflow {

// Exact nearest neighbor; distance is the non-squared Euclidean norm.
struct NNResult {
  std::size_t index = 0;
  real_t distance = 0;
};

// Static kd-tree over a point cloud. Median split on the widest axis, leaves
// of at most 16 points. Queries are exact and tie-break to the lowest
// original index, so results are interchangeable with a brute-force scan.
class KdTree {
 public:
  static constexpr std::size_t kLeafSize = 16;

  explicit KdTree(const PointCloud& cloud) : points_(cloud.points) {
    if (cloud.empty()) throw std::invalid_argument("KdTree: empty cloud");
    indices_.resize(points_.size());
    std::iota(indices_.begin(), indices_.end(), std::size_t{0});
    nodes_.reserve(2 * points_.size() / kLeafSize + 2);
    build(0, points_.size());
  }

  std::size_t size() const { return points_.size(); }

  NNResult nearest(const Point3& query) const {
    Best best;
    search(0, query, best);
    return {best.index, std::sqrt(best.d2)};
  }

 private:
  struct Node {
    std::size_t begin = 0, end = 0;  // range into indices_
    int axis = -1;                   // -1 marks a leaf
    real_t split = 0;
    std::int32_t left = -1, right = -1;
  };

  struct Best {
    real_t d2 = std::numeric_limits<real_t>::infinity();
    std::size_t index = 0;
  };

  static real_t coord(const Point3& p, int axis) {
    return axis == 0 ? p.x : (axis == 1 ? p.y : p.z);
  }

  std::int32_t build(std::size_t begin, std::size_t end) {
    const std::int32_t id = static_cast<std::int32_t>(nodes_.size());
    nodes_.push_back({begin, end, -1, 0, -1, -1});
    if (end - begin <= kLeafSize) return id;

    Vec3 lo = points_[indices_[begin]], hi = lo;
    for (std::size_t i = begin + 1; i < end; ++i) {
      const Point3& p = points_[indices_[i]];
      lo.x = std::min(lo.x, p.x);
      lo.y = std::min(lo.y, p.y);
      lo.z = std::min(lo.z, p.z);
      hi.x = std::max(hi.x, p.x);
      hi.y = std::max(hi.y, p.y);
      hi.z = std::max(hi.z, p.z);
    }
    const Vec3 extent = hi - lo;
    int axis = 0;
    if (extent.y > coord(extent, axis)) axis = 1;
    if (extent.z > coord(extent, axis)) axis = 2;
    if (coord(extent, axis) == 0) return id;  // all points identical: leaf

    const std::size_t mid = begin + (end - begin) / 2;
    std::nth_element(indices_.begin() + begin, indices_.begin() + mid,
                     indices_.begin() + end,
                     [&](std::size_t a, std::size_t b) {
                       return coord(points_[a], axis) < coord(points_[b], axis);
                     });
    nodes_[id].axis = axis;
    nodes_[id].split = coord(points_[indices_[mid]], axis);
    const std::int32_t left = build(begin, mid);
    nodes_[id].left = left;
    const std::int32_t right = build(mid, end);
    nodes_[id].right = right;
    return id;
  }

  void scan_leaf(const Node& node, const Point3& query, Best& best) const {
    for (std::size_t i = node.begin; i < node.end; ++i) {
      const std::size_t idx = indices_[i];
      const real_t d2 = (points_[idx] - query).squared_norm();
      if (d2 < best.d2 || (d2 == best.d2 && idx < best.index)) {
        best.d2 = d2;
        best.index = idx;
      }
    }
  }

  void search(std::int32_t node_id, const Point3& query, Best& best) const {
    const Node& node = nodes_[node_id];
    if (node.axis < 0) {
      scan_leaf(node, query, best);
      return;
    }
    const real_t gap = coord(query, node.axis) - node.split;
    const std::int32_t near = gap < 0 ? node.left : node.right;
    const std::int32_t far = gap < 0 ? node.right : node.left;
    search(near, query, best);
    // Points at exactly the current best distance may still win the
    // lowest-index tie-break, so only a strictly larger gap prunes.
    if (gap * gap <= best.d2) search(far, query, best);
  }

  std::vector<Point3> points_;
  std::vector<std::size_t> indices_;
  std::vector<Node> nodes_;
};

inline NNResult nearest(const KdTree& tree, const Point3& query) {
  return tree.nearest(query);
}

// Symmetric set-to-set distance plus the matches it was computed from.
struct ChamferResult {
  real_t value = 0;
  std::vector<NNResult> matches_ab;  // per point of A, into B
  std::vector<NNResult> matches_ba;  // per point of B, into A
};

// value = (1/|A|) sum_a min_b ||a-b|| + (1/|B|) sum_b min_a ||b-a||,
// with non-squared norms.
inline ChamferResult chamfer_distance(const PointCloud& a,
                                      const PointCloud& b) {
  if (a.empty() || b.empty())
    throw std::invalid_argument("chamfer_distance: empty cloud");
  ChamferResult result;
  result.matches_ab.reserve(a.size());
  result.matches_ba.reserve(b.size());

  const KdTree tree_b(b);
  real_t sum_ab = 0;
  for (const Point3& p : a.points) {
    NNResult nn = tree_b.nearest(p);
    sum_ab += nn.distance;
    result.matches_ab.push_back(nn);
  }
  const KdTree tree_a(a);
  real_t sum_ba = 0;
  for (const Point3& p : b.points) {
    NNResult nn = tree_a.nearest(p);
    sum_ba += nn.distance;
    result.matches_ba.push_back(nn);
  }
  result.value = sum_ab / static_cast<real_t>(a.size()) +
                 sum_ba / static_cast<real_t>(b.size());
  return result;
}

// Subgradient of chamfer_distance with respect to the points of A, holding
// the matches fixed. Coincident pairs (distance < 1e-12) contribute zero.
inline std::vector<Vec3> chamfer_gradient(const ChamferResult& result,
                                          const PointCloud& a,
                                          const PointCloud& b) {
  if (result.matches_ab.size() != a.size() ||
      result.matches_ba.size() != b.size())
    throw std::invalid_argument(
        "chamfer_gradient: result does not match the given clouds");
  constexpr real_t kCoincident = 1e-12;
  const real_t inv_a = real_t(1) / static_cast<real_t>(a.size());
  const real_t inv_b = real_t(1) / static_cast<real_t>(b.size());

  std::vector<Vec3> grads(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const NNResult& nn = result.matches_ab[i];
    if (nn.distance < kCoincident) continue;
    grads[i] += (a.points[i] - b.points[nn.index]) * (inv_a / nn.distance);
  }
  for (std::size_t j = 0; j < b.size(); ++j) {
    const NNResult& nn = result.matches_ba[j];
    if (nn.distance < kCoincident) continue;
    grads[nn.index] +=
        (a.points[nn.index] - b.points[j]) * (inv_b / nn.distance);
  }
  return grads;
}

}  // namespace motionflow
