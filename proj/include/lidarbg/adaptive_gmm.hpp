#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "lidarbg/dpgmm.hpp"
#include "lidarbg/tensorize.hpp"

namespace lidarbg {

namespace bin {
class Writer;
class Reader;
}  // namespace bin

struct AdaptiveOptions {
  int components = 5;
  double learning_rate = 0.01;     // lambda
  double match_sigma = 2.5;        // Mahalanobis match threshold
  double background_portion = 0.8; // T
  double initial_variance = 0.25;  // m^2, for freshly created components
  double variance_floor = 1e-4;
  std::uint32_t bootstrap_frames = 50;
  bool use_weights = false;        // lambda_eff = 1 - (1 - lambda)^w
  double no_return_level = 0.5;

  void validate() const;
};

struct AdaptiveComponent {
  double weight = 0.0;
  Vec3 mean = Vec3::Zero();
  double variance = 1.0;  // isotropic, per axis
  bool placeholder = true;
};

/// Classic adaptive mixture for one grid cell: fixed K, isotropic variances,
/// exponential forgetting with rate lambda.
class AdaptiveCell {
 public:
  AdaptiveCell() = default;
  explicit AdaptiveCell(int components);

  /// Updates the cell with one observation and returns the label it earned
  /// against the state before the update.
  Label update_and_classify(const CellObservation& obs, const AdaptiveOptions& options, double weight = 1.0);

  /// Read-only classification; does not advance the bootstrap counter.
  Label classify(const CellObservation& obs, const AdaptiveOptions& options) const;

  /// Indices of the background components: ranked by w / sigma, smallest
  /// prefix whose normalized weight exceeds T.
  std::vector<std::size_t> background_components(const AdaptiveOptions& options) const;

  /// Nearest non-placeholder component within the match threshold, or -1.
  int match(const Vec3& x, const AdaptiveOptions& options) const;

  std::vector<AdaptiveComponent>& components() noexcept { return components_; }
  const std::vector<AdaptiveComponent>& components() const noexcept { return components_; }
  std::uint32_t frames_seen() const noexcept { return frames_seen_; }
  double no_return_count() const noexcept { return no_return_; }
  double observation_count() const noexcept { return observed_; }

  void serialize(bin::Writer& out) const;
  static AdaptiveCell deserialize(bin::Reader& in);

  friend bool operator==(const AdaptiveCell& a, const AdaptiveCell& b);

 private:
  Label classify_return(const Vec3& x, const AdaptiveOptions& options) const;

  std::vector<AdaptiveComponent> components_;
  std::uint32_t frames_seen_ = 0;
  double no_return_ = 0.0;
  double observed_ = 0.0;
};

}  // namespace lidarbg
