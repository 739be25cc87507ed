#include "lidarbg/dpgmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <unordered_map>

#include "lidarbg/binary_io.hpp"
#include "lidarbg/error.hpp"

namespace lidarbg {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_sum_exp(std::span<const double> v) {
  double peak = kNegInf;
  for (double x : v) peak = std::max(peak, x);
  if (peak == kNegInf) return kNegInf;
  double s = 0.0;
  for (double x : v) s += std::exp(x - peak);
  return peak + std::log(s);
}

void put_vec(bin::Writer& w, const Vec3& v) {
  for (int i = 0; i < 3; ++i) w.put(v[i]);
}

void put_mat(bin::Writer& w, const Mat3& m) {
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) w.put(m(r, c));
}

Vec3 get_vec(bin::Reader& r) {
  Vec3 v;
  for (int i = 0; i < 3; ++i) v[i] = r.get_double();
  return v;
}

Mat3 get_mat(bin::Reader& r) {
  Mat3 m;
  for (int i = 0; i < 3; ++i)
    for (int c = 0; c < 3; ++c) m(i, c) = r.get_double();
  return m;
}

}  // namespace

StickBreaking stick_breaking(std::span<const double> betas) {
  StickBreaking out;
  out.proportions.reserve(betas.size());
  double remaining = 1.0;
  for (double b : betas) {
    if (!(b > 0.0 && b < 1.0)) throw DomainError("stick-breaking fraction outside (0, 1)");
    out.proportions.push_back(b * remaining);
    remaining *= (1.0 - b);
  }
  out.remainder = remaining;
  return out;
}

double occupation_pmf(std::span<const int> counts, std::span<const double> pi) {
  if (counts.size() != pi.size()) throw DomainError("counts and proportions differ in length");
  double total_pi = 0.0;
  for (double p : pi) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw DomainError("mixing proportion must be finite and >= 0");
    total_pi += p;
  }
  if (std::abs(total_pi - 1.0) > 1e-9) throw DomainError("mixing proportions must sum to 1");
  long long n = 0;
  for (int c : counts) {
    if (c < 0) throw DomainError("occupation numbers must be >= 0");
    n += c;
  }

  double log_terms = 0.0;
  for (std::size_t j = 0; j < counts.size(); ++j) {
    if (counts[j] == 0) continue;  // pi^0 = 1, including pi = 0
    if (pi[j] == 0.0) return 0.0;
    log_terms += counts[j] * std::log(pi[j]);
  }

  if (n <= 20) {
    // n! / prod n_j! as a product of binomials, exact in 64-bit.
    std::uint64_t coef = 1;
    long long seen = 0;
    for (int c : counts) {
      for (int i = 1; i <= c; ++i) {
        ++seen;
        coef = coef * static_cast<std::uint64_t>(seen) / static_cast<std::uint64_t>(i);
      }
    }
    double prod = static_cast<double>(coef);
    for (std::size_t j = 0; j < counts.size(); ++j) {
      if (counts[j] > 0) prod *= std::pow(pi[j], counts[j]);
    }
    return prod;
  }
  double log_coef = std::lgamma(static_cast<double>(n) + 1.0);
  for (int c : counts) log_coef -= std::lgamma(static_cast<double>(c) + 1.0);
  return std::exp(log_coef + log_terms);
}

// ---------------------------------------------------------------------------

double DecisionRule::decision_level() const noexcept {
  if (level) return *level;
  return bayes_normalized ? 0.5 : 0.5 * p_b;
}

double DecisionRule::background_probability(double p_x_given_b) const noexcept {
  if (!(p_x_given_b > 0.0)) return 0.0;
  if (std::isinf(p_x_given_b)) return bayes_normalized ? 1.0 : p_b;
  if (bayes_normalized) return p_x_given_b * p_b / (p_x_given_b * p_b + (1.0 - p_b));
  return p_x_given_b * p_b / (p_x_given_b + 1.0);
}

void DecisionRule::validate() const {
  if (!(p_b > 0.0 && p_b < 1.0)) throw ConfigError("P(B) must lie in (0, 1)");
  if (level && !(*level >= 0.0 && *level <= 1.0)) throw ConfigError("decision level must lie in [0, 1]");
  if (!(no_return_level >= 0.0 && no_return_level <= 1.0)) throw ConfigError("no-return level must lie in [0, 1]");
}

void DPGMMOptions::validate() const {
  if (!(alpha > 0.0)) throw ConfigError("dpgmm.alpha must be > 0");
  if (table_cap < 1) throw ConfigError("dpgmm.table_cap must be >= 1");
  if (!(prior_mean_weight > 0.0)) throw ConfigError("dpgmm.prior_mean_weight must be > 0");
  prior.validate();
}

GridDPGMM::GridDPGMM(const DPGMMOptions& options) : options_(options), prior_(options.prior) {
  prior_pred_ = predictive(posterior(prior_, WeightedStats{}));
}

void GridDPGMM::refresh(MixtureTable& table) const { table.predictive = predictive(posterior(prior_, table.stats)); }

void GridDPGMM::refresh_predictives() {
  prior_pred_ = predictive(posterior(prior_, WeightedStats{}));
  for (auto& t : tables_) refresh(t);
}

void GridDPGMM::absorb_prior_mean(const Vec3& x, double weight) {
  if (options_.fixed_prior_mean) return;
  const double room = options_.prior_mean_weight - prior_mean_absorbed_;
  if (!(room > 0.0)) return;
  const double take = std::min(room, weight);
  const double total = prior_mean_absorbed_ + take;
  prior_.mu0 += (take / total) * (x - prior_.mu0);
  prior_mean_absorbed_ = total;
  refresh_predictives();
}

std::vector<double> GridDPGMM::log_assignment_scores(const Vec3& x, bool allow_new) const {
  std::vector<double> scores;
  scores.reserve(tables_.size() + 1);
  for (const auto& t : tables_) scores.push_back(std::log(t.weight()) + t.predictive.log_pdf(x));
  if (allow_new || tables_.size() < options_.table_cap) {
    scores.push_back(std::log(options_.alpha) + prior_pred_.log_pdf(x));
  }
  return scores;
}

std::size_t GridDPGMM::seat(const Vec3& x, double weight, std::uint64_t frame) {
  const auto scores = log_assignment_scores(x);
  const auto best = static_cast<std::size_t>(std::max_element(scores.begin(), scores.end()) - scores.begin());
  if (best == tables_.size()) {
    MixtureTable t;
    t.id = next_id_++;
    t.creation_frame = frame;
    tables_.push_back(std::move(t));
  }
  auto& table = tables_[best];
  table.stats.add(x, weight);
  refresh(table);
  return best;
}

void GridDPGMM::evict_if_over_cap() {
  while (tables_.size() > options_.table_cap) {
    std::size_t victim = 0;
    for (std::size_t t = 1; t < tables_.size(); ++t) {
      if (tables_[t].weight() < tables_[victim].weight()) victim = t;
    }
    const auto id = tables_[victim].id;
    tables_.erase(tables_.begin() + static_cast<std::ptrdiff_t>(victim));
    if (options_.keep_history) {
      std::erase_if(history_, [id](const HistoryEntry& h) { return h.table_id == id; });
    }
  }
}

void GridDPGMM::update(const CellObservation& obs, double weight, std::uint64_t frame) {
  if (!std::isfinite(weight) || weight < 0.0) throw NonFiniteObservation("observation weight must be finite and >= 0");
  if (!obs.returned) {
    no_return_weight_ += weight;
    total_weight_ += weight;
    return;
  }
  if (!obs.xyz.allFinite()) throw NonFiniteObservation("observation has non-finite coordinates");
  total_weight_ += weight;
  if (!(weight > 0.0)) return;
  // A weight of m is seated as m unit observations, any fractional part last.
  double left = weight;
  while (left > 0.0) {
    const double w = left < 1.0 + 1e-9 ? left : 1.0;
    absorb_prior_mean(obs.xyz, w);
    const auto t = seat(obs.xyz, w, frame);
    if (options_.keep_history) history_.push_back({obs.xyz, w, tables_[t].id});
    evict_if_over_cap();
    left -= w;
  }
}

double GridDPGMM::table_weight_sum() const noexcept {
  double s = 0.0;
  for (const auto& t : tables_) s += t.weight();
  return s;
}

double GridDPGMM::log_prob_x_given_background(const Vec3& x) const {
  if (tables_.empty()) throw EmptyModel("cell has no mixture tables");
  const double log_total = std::log(table_weight_sum());
  double terms[64];
  std::vector<double> spill;
  std::span<double> buf;
  if (tables_.size() <= 64) {
    buf = std::span<double>(terms, tables_.size());
  } else {
    spill.resize(tables_.size());
    buf = spill;
  }
  for (std::size_t t = 0; t < tables_.size(); ++t) {
    buf[t] = std::log(tables_[t].weight()) - log_total + tables_[t].predictive.log_pdf(x);
  }
  return log_sum_exp(buf);
}

double GridDPGMM::prob_x_given_background(const Vec3& x) const { return std::exp(log_prob_x_given_background(x)); }

BgDecision GridDPGMM::classify(const CellObservation& obs, const DecisionRule& rule) const {
  BgDecision d;
  if (!obs.returned) {
    if (!(total_weight_ > 0.0)) throw EmptyModel("cell has no observations");
    d.p_background = no_return_weight_ / total_weight_;
    d.label = d.p_background >= rule.no_return_level ? Label::Background : Label::Foreground;
    return d;
  }
  d.p_background = rule.background_probability(prob_x_given_background(obs.xyz));
  d.label = d.p_background >= rule.decision_level() ? Label::Background : Label::Foreground;
  return d;
}

void GridDPGMM::scale_table_weights(double c) {
  if (!(c > 0.0)) throw DomainError("scale must be positive");
  for (auto& t : tables_) {
    t.stats.weight *= c;
    refresh(t);
  }
}

std::size_t GridDPGMM::table_index(std::uint32_t id) const {
  for (std::size_t t = 0; t < tables_.size(); ++t) {
    if (tables_[t].id == id) return t;
  }
  return tables_.size();
}

double GridDPGMM::log_posterior() const {
  const double total = table_weight_sum();
  double lp = std::lgamma(options_.alpha) - std::lgamma(options_.alpha + total);
  for (const auto& t : tables_) {
    lp += std::log(options_.alpha) + std::lgamma(t.weight()) + log_marginal_likelihood(prior_, t.stats);
  }
  return lp;
}

std::vector<double> GridDPGMM::gibbs_refine(int sweeps, std::mt19937_64& rng) {
  std::vector<double> trace;
  if (sweeps <= 0) return trace;
  if (!options_.keep_history) throw NoHistory("gibbs refinement needs a model trained with keep_history");
  if (history_.empty()) throw NoHistory("no retained observations to refine");

  std::vector<double> probs;
  for (int s = 0; s < sweeps; ++s) {
    for (auto& h : history_) {
      auto idx = table_index(h.table_id);
      tables_[idx].stats.remove(h.x, h.weight);
      if (tables_[idx].stats.weight <= 0.0) {
        tables_.erase(tables_.begin() + static_cast<std::ptrdiff_t>(idx));
      } else {
        refresh(tables_[idx]);
      }
      const auto scores = log_assignment_scores(h.x, /*allow_new=*/false);
      const double lse = log_sum_exp(scores);
      probs.resize(scores.size());
      for (std::size_t k = 0; k < scores.size(); ++k) probs[k] = std::exp(scores[k] - lse);
      std::discrete_distribution<std::size_t> pick(probs.begin(), probs.end());
      const auto choice = pick(rng);
      if (choice == tables_.size()) {
        MixtureTable t;
        t.id = next_id_++;
        tables_.push_back(std::move(t));
      }
      tables_[choice].stats.add(h.x, h.weight);
      refresh(tables_[choice]);
      h.table_id = tables_[choice].id;
    }
    trace.push_back(log_posterior());
  }
  return trace;
}

GridDPGMM GridDPGMM::from_assignments(const DPGMMOptions& options, std::span<const Vec3> points,
                                      std::span<const double> weights, std::span<const int> labels) {
  if (points.size() != weights.size() || points.size() != labels.size()) {
    throw LengthMismatch("points, weights and labels must have equal length");
  }
  GridDPGMM model(options);
  std::unordered_map<int, std::size_t> slot;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (labels[i] < 0) throw DomainError("labels must be non-negative");
    model.absorb_prior_mean(points[i], weights[i]);
    auto it = slot.find(labels[i]);
    if (it == slot.end()) {
      MixtureTable t;
      t.id = model.next_id_++;
      model.tables_.push_back(std::move(t));
      it = slot.emplace(labels[i], model.tables_.size() - 1).first;
    }
    model.tables_[it->second].stats.add(points[i], weights[i]);
    if (options.keep_history) model.history_.push_back({points[i], weights[i], model.tables_[it->second].id});
    model.total_weight_ += weights[i];
  }
  model.refresh_predictives();
  return model;
}

void GridDPGMM::serialize(bin::Writer& w) const {
  put_vec(w, prior_.mu0);
  w.put(prior_mean_absorbed_);
  w.put(no_return_weight_);
  w.put(total_weight_);
  w.put(next_id_);
  w.put(static_cast<std::uint32_t>(tables_.size()));
  for (const auto& t : tables_) {
    w.put(t.id);
    w.put(t.creation_frame);
    w.put(t.stats.weight);
    put_vec(w, t.stats.mean);
    put_mat(w, t.stats.scatter);
  }
}

GridDPGMM GridDPGMM::deserialize(bin::Reader& r, const DPGMMOptions& options) {
  GridDPGMM m(options);
  m.prior_.mu0 = get_vec(r);
  m.prior_mean_absorbed_ = r.get_double();
  m.no_return_weight_ = r.get_double();
  m.total_weight_ = r.get_double();
  m.next_id_ = r.get<std::uint32_t>();
  const auto n = r.get<std::uint32_t>();
  if (n > options.table_cap) throw FormatError(r.position(), "table count exceeds cap");
  m.tables_.resize(n);
  for (auto& t : m.tables_) {
    t.id = r.get<std::uint32_t>();
    t.creation_frame = r.get<std::uint64_t>();
    t.stats.weight = r.get_double();
    t.stats.mean = get_vec(r);
    t.stats.scatter = get_mat(r);
  }
  m.refresh_predictives();
  return m;
}

}  // namespace lidarbg
