#include <algorithm>

#include "lidarbg/detect.hpp"
#include "lidarbg/kdtree.hpp"

namespace lidarbg {

std::vector<double> lof_scores(std::span<const Vec3> points, std::size_t k) {
  const auto n = points.size();
  std::vector<double> lof(n, 1.0);
  if (k == 0 || n < k + 1) return lof;

  const KdTree tree(points);
  std::vector<std::vector<KdTree::Neighbor>> neighbors(n);
  std::vector<double> k_distance(n);
  for (std::size_t i = 0; i < n; ++i) {
    neighbors[i] = tree.knn_with_ties(i, k);
    k_distance[i] = neighbors[i][k - 1].distance;
  }

  // Local reachability density; the epsilon keeps duplicate points finite.
  std::vector<double> lrd(n);
  for (std::size_t i = 0; i < n; ++i) {
    double reach = 0.0;
    for (const auto& nb : neighbors[i]) reach += std::max(k_distance[nb.index], nb.distance);
    lrd[i] = 1.0 / (reach / static_cast<double>(neighbors[i].size()) + 1e-10);
  }
  for (std::size_t i = 0; i < n; ++i) {
    double sum = 0.0;
    for (const auto& nb : neighbors[i]) sum += lrd[nb.index];
    lof[i] = sum / static_cast<double>(neighbors[i].size()) / lrd[i];
  }
  return lof;
}

std::vector<std::size_t> lof_filter(std::span<const Vec3> points, const LofOptions& options) {
  const auto scores = lof_scores(points, options.k);
  std::vector<std::size_t> kept;
  kept.reserve(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!(scores[i] > options.threshold)) kept.push_back(i);
  }
  return kept;
}

}  // namespace lidarbg
