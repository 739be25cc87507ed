#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace lidarbg {

/// Finite 1-D Gaussian mixture over one grid cell's intensity history.
struct IntensityComponent {
  double weight = 0.0;
  double mean = 0.0;
  double variance = 1.0;

  friend bool operator==(const IntensityComponent&, const IntensityComponent&) = default;
};

struct IntensityGMM {
  std::vector<IntensityComponent> components;

  bool empty() const noexcept { return components.empty(); }
  std::size_t size() const noexcept { return components.size(); }
  double log_likelihood(std::span<const double> samples) const;

  friend bool operator==(const IntensityGMM&, const IntensityGMM&) = default;
};

struct IntensityFitOptions {
  int components = 5;  // the usual menu is 5, 7 or 9
  int max_iterations = 200;
  double tolerance = 1e-6;  // absolute change in total log-likelihood
  double variance_floor = 1e-4;
  int restarts = 3;
  std::uint64_t seed = 0x5eed;
  double prune_weight = 1e-8;
};

struct IntensityFitTrace {
  std::vector<double> log_likelihood;  // per EM iteration of the winning restart
  int iterations = 0;
  bool converged = false;
};

/// EM fit with k-means++ seeding. Samples are collapsed to distinct values with
/// multiplicities first, so quantized intensities cost O(distinct) per
/// iteration. Throws EmptyInput.
IntensityGMM fit_intensity_gmm(std::span<const double> samples, const IntensityFitOptions& options = {},
                               IntensityFitTrace* trace = nullptr);

/// argmax_k w_k N(intensity | mu_k, var_k); ties go to the lowest index.
int classify_intensity(const IntensityGMM& gmm, double intensity);

/// 1 + sampling_rate * w_{C_d}. Throws InvalidSamplingRate unless the rate is 0, 2, 4 or 8.
double point_weight(const IntensityGMM& gmm, double intensity, int sampling_rate);

void check_sampling_rate(int sampling_rate);

}  // namespace lidarbg
