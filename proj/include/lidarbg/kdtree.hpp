#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace lidarbg {

/// Static 3-D k-d tree over a borrowed point array.
class KdTree {
 public:
  explicit KdTree(std::span<const Eigen::Vector3d> points, std::size_t leaf_size = 8);

  /// All indices with squared distance <= radius^2 to q, in ascending index order.
  std::vector<std::size_t> radius(const Eigen::Vector3d& q, double radius) const;

  struct Neighbor {
    std::size_t index;
    double distance;
  };
  /// The k nearest points to points[self] (excluding self), plus every further
  /// point tied with the k-th distance. Sorted by (distance, index).
  std::vector<Neighbor> knn_with_ties(std::size_t self, std::size_t k) const;

 private:
  struct Node {
    std::uint32_t begin, end;
    std::int32_t left = -1, right = -1;
    int axis = 0;
    double split = 0.0;
    Eigen::Vector3d lo, hi;
  };

  std::int32_t build(std::uint32_t begin, std::uint32_t end);
  void radius_rec(std::int32_t node, const Eigen::Vector3d& q, double r2, std::vector<std::size_t>& out) const;
  static double box_distance2(const Node& n, const Eigen::Vector3d& q);

  std::span<const Eigen::Vector3d> points_;
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
  std::size_t leaf_size_;
};

}  // namespace lidarbg
