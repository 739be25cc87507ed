#include "lidarbg/intensity_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <string>

#include "lidarbg/error.hpp"

namespace lidarbg {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
const double kLogSqrt2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

double log_normal(double x, double mean, double variance) {
  const double d = x - mean;
  return -kLogSqrt2Pi - 0.5 * std::log(variance) - 0.5 * d * d / variance;
}

struct Distinct {
  std::vector<double> value;
  std::vector<double> count;
  double total = 0.0;
};

Distinct collapse(std::span<const double> samples) {
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  Distinct d;
  for (double s : sorted) {
    if (d.value.empty() || d.value.back() != s) {
      d.value.push_back(s);
      d.count.push_back(0.0);
    }
    d.count.back() += 1.0;
  }
  d.total = static_cast<double>(sorted.size());
  return d;
}

std::vector<IntensityComponent> seed_components(const Distinct& data, int k, double variance_floor,
                                                std::mt19937_64& rng) {
  const std::size_t n = data.value.size();
  std::vector<double> centers;
  std::discrete_distribution<std::size_t> first(data.count.begin(), data.count.end());
  centers.push_back(data.value[first(rng)]);

  std::vector<double> d2(n);
  while (static_cast<int>(centers.size()) < k) {
    double mass = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (double c : centers) best = std::min(best, (data.value[i] - c) * (data.value[i] - c));
      d2[i] = data.count[i] * best;
      mass += d2[i];
    }
    if (!(mass > 0.0)) break;  // fewer distinct values than components
    std::discrete_distribution<std::size_t> next(d2.begin(), d2.end());
    centers.push_back(data.value[next(rng)]);
  }

  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += data.count[i] * data.value[i];
  mean /= data.total;
  double var = 0.0;
  for (std::size_t i = 0; i < n; ++i) var += data.count[i] * (data.value[i] - mean) * (data.value[i] - mean);
  var = std::max(var / data.total / static_cast<double>(centers.size()), variance_floor);

  std::vector<IntensityComponent> comps;
  for (double c : centers) comps.push_back({1.0 / static_cast<double>(centers.size()), c, var});
  return comps;
}

struct EmRun {
  std::vector<IntensityComponent> components;
  std::vector<double> trace;
  bool converged = false;
};

EmRun run_em(const Distinct& data, std::vector<IntensityComponent> comps, const IntensityFitOptions& opt) {
  const std::size_t n = data.value.size();
  const std::size_t k = comps.size();
  std::vector<double> resp(n * k);
  std::vector<double> logp(k);
  EmRun run;
  double previous = kNegInf;

  std::vector<double> log_norm(k), inv_var(k);
  for (int iter = 0; iter < opt.max_iterations; ++iter) {
    for (std::size_t j = 0; j < k; ++j) {
      log_norm[j] = comps[j].weight > 0.0
                        ? std::log(comps[j].weight) - kLogSqrt2Pi - 0.5 * std::log(comps[j].variance)
                        : kNegInf;
      inv_var[j] = 1.0 / comps[j].variance;
    }
    // E-step
    double ll = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double peak = kNegInf;
      for (std::size_t j = 0; j < k; ++j) {
        const double d = data.value[i] - comps[j].mean;
        logp[j] = log_norm[j] - 0.5 * d * d * inv_var[j];
        peak = std::max(peak, logp[j]);
      }
      double sum = 0.0;
      for (std::size_t j = 0; j < k; ++j) {
        logp[j] = std::exp(logp[j] - peak);
        sum += logp[j];
      }
      ll += data.count[i] * (peak + std::log(sum));
      for (std::size_t j = 0; j < k; ++j) resp[i * k + j] = logp[j] / sum;
    }
    run.trace.push_back(ll);
    if (iter > 0 && std::abs(ll - previous) < opt.tolerance) {
      run.converged = true;
      break;
    }
    previous = ll;

    // M-step; a variance floor is the constrained maximizer, so EM stays monotone.
    for (std::size_t j = 0; j < k; ++j) {
      double nk = 0.0;
      double sx = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double w = data.count[i] * resp[i * k + j];
        nk += w;
        sx += w * data.value[i];
      }
      if (!(nk > 0.0)) {
        comps[j].weight = 0.0;
        continue;
      }
      const double mean = sx / nk;
      double sxx = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double d = data.value[i] - mean;
        sxx += data.count[i] * resp[i * k + j] * d * d;
      }
      comps[j].weight = nk / data.total;
      comps[j].mean = mean;
      comps[j].variance = std::max(sxx / nk, opt.variance_floor);
    }
  }
  run.components = std::move(comps);
  return run;
}

}  // namespace

double IntensityGMM::log_likelihood(std::span<const double> samples) const {
  double ll = 0.0;
  for (double x : samples) {
    double peak = kNegInf;
    std::vector<double> lp;
    lp.reserve(components.size());
    for (const auto& c : components) {
      lp.push_back(c.weight > 0.0 ? std::log(c.weight) + log_normal(x, c.mean, c.variance) : kNegInf);
      peak = std::max(peak, lp.back());
    }
    double sum = 0.0;
    for (double v : lp) sum += std::exp(v - peak);
    ll += peak + std::log(sum);
  }
  return ll;
}

IntensityGMM fit_intensity_gmm(std::span<const double> samples, const IntensityFitOptions& options,
                               IntensityFitTrace* trace) {
  if (samples.empty()) throw EmptyInput("intensity GMM needs at least one sample");
  if (options.components < 1) throw ConfigError("intensity GMM needs at least one component");
  for (double s : samples) {
    if (!std::isfinite(s)) throw EmptyInput("non-finite intensity sample");
  }
  const Distinct data = collapse(samples);
  std::mt19937_64 rng(options.seed);

  EmRun best;
  double best_ll = kNegInf;
  for (int r = 0; r < std::max(1, options.restarts); ++r) {
    auto run = run_em(data, seed_components(data, options.components, options.variance_floor, rng), options);
    const double ll = run.trace.empty() ? kNegInf : run.trace.back();
    if (best.components.empty() || ll > best_ll) {
      best_ll = ll;
      best = std::move(run);
    }
  }

  IntensityGMM gmm;
  double kept = 0.0;
  for (const auto& c : best.components) {
    if (c.weight > options.prune_weight) {
      gmm.components.push_back(c);
      kept += c.weight;
    }
  }
  for (auto& c : gmm.components) c.weight /= kept;
  std::sort(gmm.components.begin(), gmm.components.end(),
            [](const IntensityComponent& a, const IntensityComponent& b) {
              return a.mean != b.mean ? a.mean < b.mean : a.weight > b.weight;
            });
  if (trace) {
    trace->log_likelihood = best.trace;
    trace->iterations = static_cast<int>(best.trace.size());
    trace->converged = best.converged;
  }
  return gmm;
}

int classify_intensity(const IntensityGMM& gmm, double intensity) {
  int best = 0;
  double best_score = kNegInf;
  for (std::size_t k = 0; k < gmm.components.size(); ++k) {
    const auto& c = gmm.components[k];
    const double score = c.weight > 0.0 ? std::log(c.weight) + log_normal(intensity, c.mean, c.variance) : kNegInf;
    if (score > best_score) {
      best_score = score;
      best = static_cast<int>(k);
    }
  }
  return best;
}

void check_sampling_rate(int sampling_rate) {
  if (sampling_rate != 0 && sampling_rate != 2 && sampling_rate != 4 && sampling_rate != 8) {
    throw InvalidSamplingRate("sampling rate must be one of 0, 2, 4, 8 (got " + std::to_string(sampling_rate) + ")");
  }
}

double point_weight(const IntensityGMM& gmm, double intensity, int sampling_rate) {
  check_sampling_rate(sampling_rate);
  if (sampling_rate == 0 || gmm.empty()) return 1.0;
  const auto k = static_cast<std::size_t>(classify_intensity(gmm, intensity));
  return 1.0 + sampling_rate * gmm.components[k].weight;
}

}  // namespace lidarbg
