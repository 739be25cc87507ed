#include "lidarbg/kdtree.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>

namespace lidarbg {

KdTree::KdTree(std::span<const Eigen::Vector3d> points, std::size_t leaf_size)
    : points_(points), leaf_size_(std::max<std::size_t>(1, leaf_size)) {
  order_.resize(points.size());
  std::iota(order_.begin(), order_.end(), 0u);
  if (!points.empty()) {
    nodes_.reserve(2 * points.size() / leaf_size_ + 1);
    build(0, static_cast<std::uint32_t>(points.size()));
  }
}

std::int32_t KdTree::build(std::uint32_t begin, std::uint32_t end) {
  Node node;
  node.begin = begin;
  node.end = end;
  node.lo = node.hi = points_[order_[begin]];
  for (auto i = begin; i < end; ++i) {
    node.lo = node.lo.cwiseMin(points_[order_[i]]);
    node.hi = node.hi.cwiseMax(points_[order_[i]]);
  }
  const auto id = static_cast<std::int32_t>(nodes_.size());
  nodes_.push_back(node);
  if (end - begin <= leaf_size_) return id;

  const Eigen::Vector3d extent = node.hi - node.lo;
  int axis = 0;
  extent.maxCoeff(&axis);
  if (extent[axis] <= 0.0) return id;  // all points coincide
  const auto mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](std::uint32_t a, std::uint32_t b) { return points_[a][axis] < points_[b][axis]; });
  const auto left = build(begin, mid);
  const auto right = build(mid, end);
  nodes_[static_cast<std::size_t>(id)].axis = axis;
  nodes_[static_cast<std::size_t>(id)].left = left;
  nodes_[static_cast<std::size_t>(id)].right = right;
  return id;
}

double KdTree::box_distance2(const Node& n, const Eigen::Vector3d& q) {
  double d2 = 0.0;
  for (int k = 0; k < 3; ++k) {
    const double d = q[k] < n.lo[k] ? n.lo[k] - q[k] : (q[k] > n.hi[k] ? q[k] - n.hi[k] : 0.0);
    d2 += d * d;
  }
  return d2;
}

void KdTree::radius_rec(std::int32_t id, const Eigen::Vector3d& q, double r2, std::vector<std::size_t>& out) const {
  const Node& n = nodes_[static_cast<std::size_t>(id)];
  if (box_distance2(n, q) > r2) return;
  if (n.left < 0) {
    for (auto i = n.begin; i < n.end; ++i) {
      if ((points_[order_[i]] - q).squaredNorm() <= r2) out.push_back(order_[i]);
    }
    return;
  }
  radius_rec(n.left, q, r2, out);
  radius_rec(n.right, q, r2, out);
}

std::vector<std::size_t> KdTree::radius(const Eigen::Vector3d& q, double radius) const {
  std::vector<std::size_t> out;
  if (nodes_.empty()) return out;
  radius_rec(0, q, radius * radius, out);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<KdTree::Neighbor> KdTree::knn_with_ties(std::size_t self, std::size_t k) const {
  std::vector<Neighbor> out;
  if (nodes_.empty() || k == 0 || points_.size() <= 1) return out;
  const Eigen::Vector3d& q = points_[self];

  // Max-heap of the k best squared distances.
  std::priority_queue<double> best;
  std::vector<std::int32_t> stack{0};
  while (!stack.empty()) {
    const auto id = stack.back();
    stack.pop_back();
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    if (best.size() == k && box_distance2(n, q) > best.top()) continue;
    if (n.left < 0) {
      for (auto i = n.begin; i < n.end; ++i) {
        if (order_[i] == self) continue;
        const double d2 = (points_[order_[i]] - q).squaredNorm();
        if (best.size() < k) {
          best.push(d2);
        } else if (d2 < best.top()) {
          best.pop();
          best.push(d2);
        }
      }
      continue;
    }
    // Visit the nearer child last so it is popped first.
    const double dl = box_distance2(nodes_[static_cast<std::size_t>(n.left)], q);
    const double dr = box_distance2(nodes_[static_cast<std::size_t>(n.right)], q);
    if (dl < dr) {
      stack.push_back(n.right);
      stack.push_back(n.left);
    } else {
      stack.push_back(n.left);
      stack.push_back(n.right);
    }
  }
  const double kth2 = best.top();

  std::vector<std::size_t> idx;
  radius_rec(0, q, kth2, idx);
  for (auto i : idx) {
    if (i == self) continue;
    out.push_back({i, std::sqrt((points_[i] - q).squaredNorm())});
  }
  std::sort(out.begin(), out.end(), [](const Neighbor& a, const Neighbor& b) {
    return a.distance != b.distance ? a.distance < b.distance : a.index < b.index;
  });
  return out;
}

}  // namespace lidarbg
