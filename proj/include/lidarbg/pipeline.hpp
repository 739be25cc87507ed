#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "lidarbg/background_model.hpp"
#include "lidarbg/config.hpp"
#include "lidarbg/detect.hpp"
#include "lidarbg/evaluate.hpp"
#include "lidarbg/mean_max.hpp"
#include "lidarbg/point_cloud_io.hpp"
#include "lidarbg/tracker.hpp"

namespace lidarbg {

/// Runs fn(i) for i in [0, n) on up to `threads` workers (0 = all cores).
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t begin, std::size_t end)>& fn);
int resolve_threads(int requested);

using FrameVisitor = std::function<void(const Frame&)>;
/// Replays a training stream; training reads it twice.
using FrameReplay = std::function<void(const FrameVisitor&)>;

FrameReplay replay(std::span<const Frame> frames);

struct TrainTimings {
  double intensity_s = 0.0;
  double model_s = 0.0;
  std::uint64_t frames = 0;
  std::uint64_t points = 0;
};

/// Intensity mixtures per cell, then the weighted DP mixture (or the adaptive
/// model) per cell over the same stream.
BackgroundModel train_model(const FrameReplay& frames, const RunConfig& config, TrainTimings* timings = nullptr);

struct FrameMask {
  std::vector<std::uint8_t> foreground;  // one per point; 1 = Foreground
  std::size_t returns = 0;
  std::size_t foreground_count = 0;
};

/// Per-point labeling against a trained model. The adaptive model keeps
/// learning while it labels; the DP mixture is read-only.
class Subtractor {
 public:
  Subtractor(BackgroundModel& model, const RunConfig& config);

  FrameMask apply(const Frame& frame);
  /// Cartesian position of every point of the last frame passed to apply().
  const std::vector<Vec3>& last_xyz() const noexcept { return last_.point_xyz; }

  struct StageTimes {
    double tensorize_s = 0.0;
    double classify_s = 0.0;
  };
  const StageTimes& times() const noexcept { return times_; }

 private:
  BackgroundModel& model_;
  const RunConfig& config_;
  TensorizeResult last_;
  StageTimes times_;
};

/// Mean-Max baseline trained over the same stream.
MeanMaxModel train_mean_max(const FrameReplay& frames, const RunConfig& config);
FrameMask apply_mean_max(const MeanMaxModel& model, const Frame& frame, const RunConfig& config);

struct FrameDetections {
  std::vector<Detection> detections;
  std::size_t lof_removed = 0;
  std::size_t noise = 0;
  std::size_t degenerate = 0;         // clusters too flat for a box
  std::size_t degenerate_points = 0;  // points in those clusters
};

/// LOF, DBSCAN, OBB and rule-based class over a frame's foreground points.
FrameDetections detect_objects(std::span<const Vec3> foreground, const RunConfig& config);

/// Geofence-then-subtract-then-detect for one frame.
class DetectionPipeline {
 public:
  DetectionPipeline(BackgroundModel& model, const RunConfig& config) : config_(config), subtractor_(model, config) {}

  FrameDetections process(const Frame& frame, FrameMask* mask = nullptr);

 private:
  const RunConfig& config_;
  Subtractor subtractor_;
};

// CSV outputs.
void write_mask_header(std::ostream& out);
void write_mask(std::ostream& out, std::uint64_t frame_id, const FrameMask& mask);
void write_detection_header(std::ostream& out);
void write_detections(std::ostream& out, const Frame& frame, std::span<const Detection> detections);
void write_trajectory_header(std::ostream& out);
void write_trajectory(std::ostream& out, std::span<const TrajectorySample> samples);

/// Trajectory samples of every live track after a tracker step.
std::vector<TrajectorySample> snapshot_tracks(const Tracker& tracker, const Frame& frame);

// CSV readers used by eval.
struct LabeledPoints {
  std::vector<std::uint64_t> frame_ids;
  std::vector<std::uint8_t> labels;  // 1 = Foreground
};
/// Reads "frame_id,point_index,label,..." files; "foreground" is positive,
/// "background" and "clutter" are negative.
LabeledPoints read_point_labels(std::istream& in);

struct FrameBoxes {
  std::uint64_t frame_id = 0;
  std::vector<BevBox> boxes;
};
/// Reads detection CSVs (column "point_count") or truth box CSVs (column
/// "visible_points"); boxes with fewer than `min_points` points are skipped.
std::vector<FrameBoxes> read_boxes(std::istream& in, std::size_t min_points = 0);

std::vector<TrajectorySample> read_trajectory(std::istream& in);

struct BenchOptions {
  ModelType model_type = ModelType::Adaptive;
  int beams = 32;
  int bins = 1800;
  std::uint64_t train_frames = 60;
  std::uint64_t frames = 100;
  std::uint64_t seed = 1;
  int threads = 0;
};

struct BenchReport {
  double train_s = 0.0;
  double subtract_s = 0.0;
  double tensorize_s = 0.0;
  double classify_s = 0.0;
  std::uint64_t frames = 0;
  std::uint64_t points = 0;
  double frames_per_s = 0.0;
  double points_per_s = 0.0;
  double foreground_fraction = 0.0;
};

/// Generates a street scene on the requested grid, trains, then times
/// subtraction over fresh frames.
BenchReport run_bench(const BenchOptions& options);

}  // namespace lidarbg
