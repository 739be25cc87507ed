#include "lidarbg/tracker.hpp"

#include <algorithm>
#include <bit>
#include <string>
#include <tuple>

#include "lidarbg/error.hpp"

namespace lidarbg {

std::string_view to_string(TrackStatus s) {
  switch (s) {
    case TrackStatus::Candidate:
      return "candidate";
    case TrackStatus::Confirmed:
      return "confirmed";
    case TrackStatus::Deleted:
      return "deleted";
  }
  return "candidate";
}

TrackStatus parse_track_status(std::string_view name) {
  if (name == "candidate") return TrackStatus::Candidate;
  if (name == "confirmed") return TrackStatus::Confirmed;
  if (name == "deleted") return TrackStatus::Deleted;
  throw FormatError(0, "unknown track status '" + std::string(name) + "'");
}

ObjectClass Track::majority_class() const {
  int best = static_cast<int>(ObjectClass::Unknown);
  for (int c = 0; c < static_cast<int>(class_votes.size()); ++c) {
    if (class_votes[static_cast<std::size_t>(c)] > class_votes[static_cast<std::size_t>(best)]) best = c;
  }
  return static_cast<ObjectClass>(best);
}

int Track::recent_misses(int window) const {
  const int n = std::min(window, history_length);
  int misses = 0;
  for (int b = 0; b < n; ++b) {
    if (((hit_history >> b) & 1u) == 0) ++misses;
  }
  return misses;
}

namespace {

void push_bit(Track& t, bool hit) {
  t.hit_history = static_cast<std::uint8_t>((t.hit_history << 1) | (hit ? 1u : 0u));
  t.history_length = std::min(8, t.history_length + 1);
  t.consecutive_hits = hit ? t.consecutive_hits + 1 : 0;
}

}  // namespace

Tracker::StepResult Tracker::step(std::span<const Detection> detections, double dt) {
  if (!(dt > 0.0)) throw DomainError("tracker time step must be > 0");
  std::erase_if(tracks_, [](const Track& t) { return t.status == TrackStatus::Deleted; });

  for (auto& t : tracks_) t.position.head<2>() += t.velocity * dt;

  struct Pair {
    double distance;
    std::uint64_t track_id;
    std::size_t track;
    std::size_t detection;
  };
  std::vector<Pair> pairs;
  for (std::size_t ti = 0; ti < tracks_.size(); ++ti) {
    for (std::size_t di = 0; di < detections.size(); ++di) {
      const double d = (tracks_[ti].position.head<2>() - detections[di].box.center.head<2>()).norm();
      if (d <= options_.gate_m) pairs.push_back({d, tracks_[ti].id, ti, di});
    }
  }
  std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
    return std::tie(a.distance, a.track_id, a.detection) < std::tie(b.distance, b.track_id, b.detection);
  });

  StepResult result;
  result.detection_track.assign(detections.size(), -1);
  std::vector<char> track_used(tracks_.size(), 0);
  for (const auto& p : pairs) {
    if (track_used[p.track] || result.detection_track[p.detection] >= 0) continue;
    track_used[p.track] = 1;
    result.detection_track[p.detection] = static_cast<std::int64_t>(p.track_id);

    auto& t = tracks_[p.track];
    const auto& det = detections[p.detection];
    const Vec2 residual = det.box.center.head<2>() - t.position.head<2>();
    t.position.head<2>() += options_.position_gain * residual;
    t.position.z() = det.box.center.z();
    t.velocity += (options_.velocity_gain / dt) * residual;
    t.yaw = det.box.yaw;
    t.box = det.box;
    ++t.class_votes[static_cast<std::size_t>(det.object_class)];
    push_bit(t, true);
  }
  for (std::size_t ti = 0; ti < tracks_.size(); ++ti) {
    ++tracks_[ti].age;
    if (!track_used[ti]) push_bit(tracks_[ti], false);
  }

  for (std::size_t di = 0; di < detections.size(); ++di) {
    if (result.detection_track[di] >= 0) continue;
    Track t;
    t.id = next_id_++;
    t.position = detections[di].box.center;
    t.yaw = detections[di].box.yaw;
    t.box = detections[di].box;
    t.age = 1;
    ++t.class_votes[static_cast<std::size_t>(detections[di].object_class)];
    if (options_.count_spawn_hit) push_bit(t, true);
    result.detection_track[di] = static_cast<std::int64_t>(t.id);
    tracks_.push_back(t);
  }

  for (auto& t : tracks_) {
    if (t.status == TrackStatus::Candidate && t.consecutive_hits >= options_.confirm_hits) {
      t.status = TrackStatus::Confirmed;
    }
    if (t.recent_misses(options_.miss_window) >= options_.delete_misses) t.status = TrackStatus::Deleted;
  }
  return result;
}

}  // namespace lidarbg
