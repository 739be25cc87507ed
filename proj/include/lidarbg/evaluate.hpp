#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lidarbg/detect.hpp"
#include "lidarbg/tracker.hpp"

namespace lidarbg {

struct ConfusionCounts {
  std::uint64_t tp = 0, tn = 0, fp = 0, fn = 0;

  std::uint64_t total() const noexcept { return tp + tn + fp + fn; }
  ConfusionCounts& operator+=(const ConfusionCounts& o) noexcept {
    tp += o.tp;
    tn += o.tn;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
};

struct Metrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Accuracy, precision, recall and F1 from raw counts. Ratios whose
/// denominator is zero are reported as 0. Throws EmptyInput when the total is 0.
Metrics metrics_from_counts(const ConfusionCounts& c);

/// Counts with Foreground (non-zero) as the positive class. Throws LengthMismatch.
ConfusionCounts confusion(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> truth);
Metrics point_metrics(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> truth);

struct BevBox {
  double x = 0.0;
  double y = 0.0;
};

struct ObjectMatch {
  ConfusionCounts counts;  // tn unused
  Metrics metrics;         // accuracy unused (0)
  std::vector<std::pair<std::size_t, std::size_t>> matches;  // (pred, gt)
};

/// One-to-one greedy matching by ascending center distance; a pair matches
/// when its distance is within the radius.
ObjectMatch object_metrics(std::span<const BevBox> predicted, std::span<const BevBox> truth, double match_radius = 2.0);

/// 1 - |measured - reference| / reference. Throws ZeroReference.
double path_count_accuracy(double reference_count, double measured_count);

struct TrajectorySample {
  std::uint64_t track_id = 0;
  std::uint64_t frame_id = 0;
  double timestamp = 0.0;
  Vec3 position = Vec3::Zero();
  double yaw = 0.0;
  double speed = 0.0;
  ObjectClass object_class = ObjectClass::Unknown;
  TrackStatus status = TrackStatus::Candidate;
};

struct Screenline {
  Vec2 a = Vec2::Zero();
  Vec2 b = Vec2::Zero();
};

struct CountWindow {
  double start = -std::numeric_limits<double>::infinity();
  double end = std::numeric_limits<double>::infinity();
};

struct MovementCounts {
  std::uint64_t inbound = 0;   // crossing from the left of a->b to its right
  std::uint64_t outbound = 0;  // right to left
};

/// Counts screenline crossings of tracks that are Confirmed at the time of the
/// crossing. A crossing within `debounce_s` of the same track's previous
/// counted crossing is ignored.
MovementCounts count_movements(std::span<const TrajectorySample> samples, const Screenline& line,
                               const CountWindow& window = {}, double debounce_s = 2.0);

struct MetricsRow {
  std::string level;
  std::string scope;
  ConfusionCounts counts;
  Metrics metrics;
};

void write_metrics_csv(std::ostream& out, std::span<const MetricsRow> rows);
void write_metrics_table(std::ostream& out, std::span<const MetricsRow> rows);

}  // namespace lidarbg
