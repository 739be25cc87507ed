#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "lidarbg/detect.hpp"

namespace lidarbg {

enum class TrackStatus : std::uint8_t { Candidate, Confirmed, Deleted };

std::string_view to_string(TrackStatus s);
TrackStatus parse_track_status(std::string_view name);

struct TrackerOptions {
  double gate_m = 3.0;
  int confirm_hits = 6;         // consecutive hits to confirm
  int delete_misses = 7;        // misses ...
  int miss_window = 8;          // ... within this many most recent frames
  bool count_spawn_hit = true;  // the spawning detection counts toward confirmation
  double position_gain = 0.7;   // alpha-beta filter gains
  double velocity_gain = 0.3;
};

struct Track {
  std::uint64_t id = 0;
  Vec3 position = Vec3::Zero();
  Vec2 velocity = Vec2::Zero();
  double yaw = 0.0;
  TrackStatus status = TrackStatus::Candidate;
  std::uint8_t hit_history = 0;  // bit 0 is the most recent frame, 1 = hit
  int history_length = 0;        // valid bits in hit_history (<= 8)
  int consecutive_hits = 0;
  int age = 0;
  std::array<int, 5> class_votes{};
  OrientedBox box;

  ObjectClass majority_class() const;
  int recent_misses(int window) const;
  double speed() const { return velocity.norm(); }
};

/// Constant-velocity prediction, globally greedy nearest-neighbour association
/// inside the gate, alpha-beta state update, and the candidate / confirmed /
/// deleted lifecycle. Track ids are never reused.
class Tracker {
 public:
  explicit Tracker(TrackerOptions options = {}) : options_(options) {}

  struct StepResult {
    std::vector<std::int64_t> detection_track;  // track id per detection
  };

  /// Deleted tracks are reported for the step in which they are deleted and
  /// dropped afterwards.
  StepResult step(std::span<const Detection> detections, double dt);

  const std::vector<Track>& tracks() const noexcept { return tracks_; }
  const TrackerOptions& options() const noexcept { return options_; }
  std::uint64_t issued_ids() const noexcept { return next_id_; }

 private:
  TrackerOptions options_;
  std::vector<Track> tracks_;
  std::uint64_t next_id_ = 1;
};

}  // namespace lidarbg
