#include "lidarbg/mean_max.hpp"

#include <algorithm>
#include <limits>

namespace lidarbg {

MeanMaxModel::MeanMaxModel(int beams, int bins, Options options)
    : options_(options),
      sum_(static_cast<std::size_t>(beams) * static_cast<std::size_t>(bins), 0.0),
      max_(sum_.size(), 0.0),
      count_(sum_.size(), 0) {}

void MeanMaxModel::observe(const FrameTensor& tensor) {
  for (std::size_t i = 0; i < tensor.size(); ++i) {
    const auto& c = tensor[i];
    if (!c.returned) continue;
    const double r = c.xyz.norm();
    sum_[i] += r;
    max_[i] = std::max(max_[i], r);
    ++count_[i];
  }
}

double MeanMaxModel::mean_range(std::size_t cell) const {
  if (count_[cell] == 0) return std::numeric_limits<double>::quiet_NaN();
  return sum_[cell] / count_[cell];
}

Label MeanMaxModel::classify(std::size_t cell, const Vec3& xyz) const {
  if (count_[cell] == 0) return Label::Foreground;
  const double r = xyz.norm();
  const double threshold = std::min(mean_range(cell), max_[cell]) - options_.tolerance_m;
  return r >= threshold ? Label::Background : Label::Foreground;
}

}  // namespace lidarbg
