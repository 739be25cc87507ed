#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "lidarbg/niw.hpp"
#include "lidarbg/tensorize.hpp"

namespace lidarbg {

namespace bin {
class Writer;
class Reader;
}  // namespace bin

// ---------------------------------------------------------------------------
// Dirichlet-process building blocks
// ---------------------------------------------------------------------------

struct StickBreaking {
  std::vector<double> proportions;  // pi_c = beta_c * prod_{j<c} (1 - beta_j)
  double remainder = 1.0;           // prod_j (1 - beta_j)
};

/// Throws DomainError unless every beta lies in (0, 1).
StickBreaking stick_breaking(std::span<const double> betas);

/// Multinomial probability of the occupation numbers given mixing proportions.
/// Throws DomainError on mismatched lengths, negative proportions, or
/// proportions that do not sum to 1.
double occupation_pmf(std::span<const int> counts, std::span<const double> pi);

// ---------------------------------------------------------------------------
// Per-cell weighted DP Gaussian mixture
// ---------------------------------------------------------------------------

enum class Label : std::uint8_t { Background = 0, Foreground = 1 };

struct BgDecision {
  double p_background = 0.0;
  Label label = Label::Foreground;
};

/// Turns P(x|B) into a background probability with P(x|F) = 1.
struct DecisionRule {
  double p_b = 0.5;                 // P(B)
  std::optional<double> level;      // tau; defaults below
  bool bayes_normalized = false;    // denominator P(x|B)P(B) + P(x|F)(1 - P(B))
  double no_return_level = 0.5;     // NoReturn is background iff its frequency reaches this

  /// p_b / 2 for the verbatim rule, 0.5 for the normalized rule, unless overridden.
  double decision_level() const noexcept;
  double background_probability(double p_x_given_b) const noexcept;
  void validate() const;
};

struct DPGMMOptions {
  double alpha = 1.0;
  NIWPrior prior;                   // mu0 is replaced by the warm-up mean unless fixed_prior_mean
  bool fixed_prior_mean = false;
  double prior_mean_weight = 20.0;  // units of return weight averaged into mu0
  std::size_t table_cap = 10;
  bool keep_history = false;

  void validate() const;
};

struct MixtureTable {
  std::uint32_t id = 0;
  std::uint64_t creation_frame = 0;
  WeightedStats stats;  // stats.weight is s_t
  StudentT3 predictive;

  double weight() const noexcept { return stats.weight; }
};

class GridDPGMM {
 public:
  struct HistoryEntry {
    Vec3 x;
    double weight;
    std::uint32_t table_id;
  };

  GridDPGMM() : GridDPGMM(DPGMMOptions{}) {}
  explicit GridDPGMM(const DPGMMOptions& options);

  /// Sequential hard-MAP CRP seating. Existing table t scores s_t * p_t(x);
  /// a new table scores alpha * p_prior(x). Throws NonFiniteObservation.
  void update(const CellObservation& obs, double weight, std::uint64_t frame = 0);

  /// Unnormalized log seating scores for x under the current state: one entry
  /// per table followed by the new-table score (absent when at the cap and
  /// `allow_new` is false).
  std::vector<double> log_assignment_scores(const Vec3& x, bool allow_new = true) const;

  double log_prob_x_given_background(const Vec3& x) const;
  /// sum_t (s_t / sum_i s_i) p_t(x). Throws EmptyModel without tables.
  double prob_x_given_background(const Vec3& x) const;

  /// Throws EmptyModel when nothing has been observed that could decide.
  BgDecision classify(const CellObservation& obs, const DecisionRule& rule) const;

  /// Collapsed Gibbs sweeps over the retained history. Returns the training
  /// log-posterior after each sweep. Throws NoHistory when sweeps > 0 and the
  /// model was not built with keep_history.
  std::vector<double> gibbs_refine(int sweeps, std::mt19937_64& rng);
  double log_posterior() const;

  /// Builds a model from explicit seatings (used to start Gibbs from a given
  /// partition). Labels are arbitrary non-negative integers.
  static GridDPGMM from_assignments(const DPGMMOptions& options, std::span<const Vec3> points,
                                    std::span<const double> weights, std::span<const int> labels);

  const std::vector<MixtureTable>& tables() const noexcept { return tables_; }
  const std::vector<HistoryEntry>& history() const noexcept { return history_; }
  const NIWPrior& prior() const noexcept { return prior_; }
  const DPGMMOptions& options() const noexcept { return options_; }
  double no_return_weight() const noexcept { return no_return_weight_; }
  double total_weight() const noexcept { return total_weight_; }
  double table_weight_sum() const noexcept;
  bool has_tables() const noexcept { return !tables_.empty(); }
  NIWPosterior table_posterior(std::size_t t) const { return posterior(prior_, tables_[t].stats); }
  StudentT3 prior_predictive() const { return prior_pred_; }

  /// Multiplies every s_t by c > 0 (mixture proportions unchanged).
  void scale_table_weights(double c);

  void serialize(bin::Writer& out) const;
  static GridDPGMM deserialize(bin::Reader& in, const DPGMMOptions& options);

 private:
  void absorb_prior_mean(const Vec3& x, double weight);
  void refresh_predictives();
  void refresh(MixtureTable& table) const;
  std::size_t seat(const Vec3& x, double weight, std::uint64_t frame);
  void evict_if_over_cap();
  std::size_t table_index(std::uint32_t id) const;

  DPGMMOptions options_;
  NIWPrior prior_;
  StudentT3 prior_pred_;
  double prior_mean_absorbed_ = 0.0;
  std::vector<MixtureTable> tables_;
  std::vector<HistoryEntry> history_;
  std::uint32_t next_id_ = 0;
  double no_return_weight_ = 0.0;
  double total_weight_ = 0.0;
};

}  // namespace lidarbg
