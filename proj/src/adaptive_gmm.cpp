#include "lidarbg/adaptive_gmm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lidarbg/binary_io.hpp"
#include "lidarbg/error.hpp"

namespace lidarbg {

void AdaptiveOptions::validate() const {
  if (components < 1) throw ConfigError("adaptive.components must be >= 1");
  if (!(learning_rate >= 0.0 && learning_rate < 1.0)) throw ConfigError("adaptive.learning_rate must lie in [0, 1)");
  if (!(match_sigma > 0.0)) throw ConfigError("adaptive.match_sigma must be > 0");
  if (!(background_portion > 0.0 && background_portion < 1.0)) {
    throw ConfigError("adaptive.background_portion must lie in (0, 1)");
  }
  if (!(initial_variance > 0.0) || !(variance_floor > 0.0)) throw ConfigError("adaptive variances must be > 0");
}

AdaptiveCell::AdaptiveCell(int components) {
  components_.resize(static_cast<std::size_t>(components));
  for (auto& c : components_) c.weight = 1.0 / components;
}

int AdaptiveCell::match(const Vec3& x, const AdaptiveOptions& options) const {
  int best = -1;
  double best_d2 = 0.0;
  for (std::size_t k = 0; k < components_.size(); ++k) {
    const auto& c = components_[k];
    if (c.placeholder) continue;
    const double d2 = (x - c.mean).squaredNorm() / c.variance;
    if (d2 <= options.match_sigma * options.match_sigma && (best < 0 || d2 < best_d2)) {
      best = static_cast<int>(k);
      best_d2 = d2;
    }
  }
  return best;
}

std::vector<std::size_t> AdaptiveCell::background_components(const AdaptiveOptions& options) const {
  std::vector<std::size_t> order;
  double total = 0.0;
  for (std::size_t k = 0; k < components_.size(); ++k) {
    if (components_[k].placeholder) continue;
    order.push_back(k);
    total += components_[k].weight;
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& ca = components_[a];
    const auto& cb = components_[b];
    return ca.weight / std::sqrt(ca.variance) > cb.weight / std::sqrt(cb.variance);
  });
  if (!(total > 0.0)) return {};
  double cumulative = 0.0;
  std::size_t keep = 0;
  while (keep < order.size()) {
    cumulative += components_[order[keep]].weight / total;
    ++keep;
    if (cumulative > options.background_portion) break;
  }
  order.resize(keep);
  return order;
}

Label AdaptiveCell::classify_return(const Vec3& x, const AdaptiveOptions& options) const {
  const int m = match(x, options);
  if (m < 0) return Label::Foreground;
  const auto bg = background_components(options);
  return std::find(bg.begin(), bg.end(), static_cast<std::size_t>(m)) != bg.end() ? Label::Background
                                                                                   : Label::Foreground;
}

Label AdaptiveCell::classify(const CellObservation& obs, const AdaptiveOptions& options) const {
  if (frames_seen_ < options.bootstrap_frames) return Label::Background;
  if (!obs.returned) {
    if (!(observed_ > 0.0)) return Label::Background;
    return no_return_ / observed_ >= options.no_return_level ? Label::Background : Label::Foreground;
  }
  return classify_return(obs.xyz, options);
}

Label AdaptiveCell::update_and_classify(const CellObservation& obs, const AdaptiveOptions& options, double weight) {
  if (obs.returned && !obs.xyz.allFinite()) throw NonFiniteObservation("observation has non-finite coordinates");
  if (!std::isfinite(weight) || weight < 0.0) throw NonFiniteObservation("observation weight must be finite");
  if (components_.empty()) *this = AdaptiveCell(options.components);

  const Label label = classify(obs, options);
  const double rate =
      options.use_weights ? 1.0 - std::pow(1.0 - options.learning_rate, weight) : options.learning_rate;
  if (!(rate > 0.0)) return label;  // frozen

  ++frames_seen_;
  observed_ += 1.0;
  if (!obs.returned) {
    no_return_ += 1.0;
    return label;
  }

  const Vec3& x = obs.xyz;
  const int m = match(x, options);
  for (auto& c : components_) c.weight *= (1.0 - rate);
  if (m >= 0) {
    auto& c = components_[static_cast<std::size_t>(m)];
    c.weight += rate;
    const double rho = std::min(1.0, rate / c.weight);
    c.mean += rho * (x - c.mean);
    c.variance = std::max(options.variance_floor, (1.0 - rho) * c.variance + rho * (x - c.mean).squaredNorm() / 3.0);
  } else {
    std::size_t victim = 0;
    for (std::size_t k = 1; k < components_.size(); ++k) {
      if (components_[k].weight < components_[victim].weight) victim = k;
    }
    auto& c = components_[victim];
    c.weight += rate;
    c.mean = x;
    c.variance = options.initial_variance;
    c.placeholder = false;
  }
  // Guard against drift in the sum from repeated scaling.
  const double sum = std::accumulate(components_.begin(), components_.end(), 0.0,
                                     [](double s, const AdaptiveComponent& c) { return s + c.weight; });
  for (auto& c : components_) c.weight /= sum;
  return label;
}

void AdaptiveCell::serialize(bin::Writer& w) const {
  w.put(static_cast<std::uint32_t>(components_.size()));
  for (const auto& c : components_) {
    w.put(c.weight);
    for (int i = 0; i < 3; ++i) w.put(c.mean[i]);
    w.put(c.variance);
    w.put(c.placeholder);
  }
  w.put(frames_seen_);
  w.put(no_return_);
  w.put(observed_);
}

AdaptiveCell AdaptiveCell::deserialize(bin::Reader& r) {
  AdaptiveCell cell;
  const auto k = r.get<std::uint32_t>();
  if (k > 1024) throw FormatError(r.position(), "implausible adaptive component count");
  cell.components_.resize(k);
  for (auto& c : cell.components_) {
    c.weight = r.get_double();
    for (int i = 0; i < 3; ++i) c.mean[i] = r.get_double();
    c.variance = r.get_double();
    c.placeholder = r.get_bool();
  }
  cell.frames_seen_ = r.get<std::uint32_t>();
  cell.no_return_ = r.get_double();
  cell.observed_ = r.get_double();
  return cell;
}

bool operator==(const AdaptiveCell& a, const AdaptiveCell& b) {
  if (a.components_.size() != b.components_.size()) return false;
  for (std::size_t k = 0; k < a.components_.size(); ++k) {
    const auto& x = a.components_[k];
    const auto& y = b.components_[k];
    if (x.weight != y.weight || x.mean != y.mean || x.variance != y.variance || x.placeholder != y.placeholder) {
      return false;
    }
  }
  return a.frames_seen_ == b.frames_seen_ && a.no_return_ == b.no_return_ && a.observed_ == b.observed_;
}

}  // namespace lidarbg
