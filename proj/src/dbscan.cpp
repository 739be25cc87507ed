#include <algorithm>
#include <limits>
#include <numeric>

#include "lidarbg/detect.hpp"
#include "lidarbg/error.hpp"
#include "lidarbg/kdtree.hpp"

namespace lidarbg {

namespace {

double pair_eps(const DbscanOptions& o, const Vec3& a, const Vec3& b) {
  if (!(o.range_scale_reference_m > 0.0)) return o.eps;
  const double r = std::min(a.head<2>().norm(), b.head<2>().norm());
  return o.eps * std::max(1.0, r / o.range_scale_reference_m);
}

}  // namespace

Clustering dbscan(std::span<const Vec3> points, const DbscanOptions& options) {
  if (!(options.eps > 0.0)) throw ConfigError("dbscan eps must be > 0");
  const auto n = points.size();
  Clustering out;
  if (n == 0) return out;

  const KdTree tree(points);
  double search = options.eps;
  if (options.range_scale_reference_m > 0.0) {
    double max_r = 0.0;
    for (const auto& p : points) max_r = std::max(max_r, p.head<2>().norm());
    search = options.eps * std::max(1.0, max_r / options.range_scale_reference_m);
  }

  std::vector<std::vector<std::size_t>> nbrs(n);
  std::vector<char> core(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    auto cand = tree.radius(points[i], search);
    if (options.range_scale_reference_m > 0.0) {
      std::erase_if(cand, [&](std::size_t j) {
        const double e = pair_eps(options, points[i], points[j]);
        return (points[j] - points[i]).squaredNorm() > e * e;
      });
    }
    core[i] = cand.size() >= options.min_pts ? 1 : 0;
    nbrs[i] = std::move(cand);
  }

  constexpr auto kUnset = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> label(n, kUnset);
  std::size_t next = 0;
  std::vector<std::size_t> stack;
  for (std::size_t i = 0; i < n; ++i) {
    if (!core[i] || label[i] != kUnset) continue;
    const auto id = next++;
    label[i] = id;
    stack.push_back(i);
    while (!stack.empty()) {
      const auto p = stack.back();
      stack.pop_back();
      for (auto q : nbrs[p]) {
        if (core[q] && label[q] == kUnset) {
          label[q] = id;
          stack.push_back(q);
        }
      }
    }
  }

  for (std::size_t i = 0; i < n; ++i) {
    if (core[i]) continue;
    std::size_t best = kUnset;
    double best_d2 = 0.0;
    for (auto q : nbrs[i]) {
      if (!core[q]) continue;
      const double d2 = (points[q] - points[i]).squaredNorm();
      if (best == kUnset || d2 < best_d2 || (d2 == best_d2 && q < best)) {
        best = q;
        best_d2 = d2;
      }
    }
    if (best != kUnset) label[i] = label[best];
  }

  out.clusters.resize(next);
  for (std::size_t i = 0; i < n; ++i) {
    if (label[i] == kUnset) {
      out.noise.push_back(i);
    } else {
      out.clusters[label[i]].push_back(i);
    }
  }
  // Clusters were numbered by their lowest core point; renumber by lowest member.
  std::sort(out.clusters.begin(), out.clusters.end(),
            [](const auto& a, const auto& b) { return a.front() < b.front(); });
  return out;
}

}  // namespace lidarbg
