#pragma once

#include <vector>

#include "lidarbg/dpgmm.hpp"
#include "lidarbg/tensorize.hpp"

namespace lidarbg {

/// Range-statistics baseline: per cell, the mean and maximum range over the
/// training frames. A return is background when its range is no shorter than
/// the cell's mean range minus a tolerance; cells that never returned during
/// training label every return foreground.
class MeanMaxModel {
 public:
  struct Options {
    double tolerance_m = 0.3;
  };

  MeanMaxModel(int beams, int bins) : MeanMaxModel(beams, bins, Options{}) {}
  MeanMaxModel(int beams, int bins, Options options);

  void observe(const FrameTensor& tensor);
  Label classify(std::size_t cell, const Vec3& xyz) const;

  double mean_range(std::size_t cell) const;
  double max_range(std::size_t cell) const { return max_[cell]; }
  std::size_t cell_count() const noexcept { return count_.size(); }

 private:
  Options options_;
  std::vector<double> sum_;
  std::vector<double> max_;
  std::vector<std::uint32_t> count_;
};

}  // namespace lidarbg
