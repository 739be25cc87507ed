#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "lidarbg/detect.hpp"
#include "lidarbg/evaluate.hpp"
#include "lidarbg/point_cloud_io.hpp"
#include "lidarbg/tensorize.hpp"

namespace lidarbg {

enum class PointLabel : std::uint8_t { Background = 0, Foreground = 1, Clutter = 2 };

std::string_view to_string(PointLabel l);
PointLabel parse_point_label(std::string_view name);

struct StaticBox {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Zero();
  double reflectivity = 60.0;
};

struct Pole {
  Vec2 center = Vec2::Zero();
  double radius = 0.15;
  double height = 8.0;  // above ground
  double reflectivity = 90.0;
};

struct MoverPath {
  std::vector<Vec2> waypoints;
  double speed = 10.0;       // m/s along the polyline
  double start_time = 0.0;   // s; the mover sits at waypoints[0] at this time
  double length = 4.5;
  double width = 1.8;
  double height = 1.5;
  double clearance = 0.2;    // gap between ground and box bottom
  double reflectivity = 120.0;
  ObjectClass object_class = ObjectClass::Car;
};

struct SceneConfig {
  SensorConfig sensor;
  double sensor_height_m = 5.0;  // ground plane sits at z = -sensor_height_m
  std::uint64_t duration_frames = 100;
  double ground_reflectivity = 25.0;
  std::vector<StaticBox> buildings;
  std::vector<Pole> poles;
  std::vector<MoverPath> movers;
  double snow_rate = 0.0;  // expected flakes per frame
  double snow_min_range_m = 2.0;
  double snow_max_range_m = 20.0;
  double angular_jitter_sd_deg = 0.02;
  double azimuth_drift_deg = 0.3;  // per-frame uniform offset in [-a, a]
  double no_return_probability = 0.005;
  double range_noise_sd_m = 0.01;
  /// Weak echoes fade first: a surface of reflectivity rho returns only
  /// within max_range * sqrt(min(1, rho / reference)). 0 disables the fade.
  double reference_reflectivity = 100.0;
  double static_intensity_sd = 1.5;
  double mover_intensity_sd = 8.0;
  bool emit_no_return = false;
  Screenline screenline;
  std::uint64_t seed = 1;

  /// Throws ConfigError on negative rates, a bad sensor, or malformed paths.
  void validate() const;
};

/// Jitter draws are clipped at this many standard deviations.
inline constexpr double kJitterClipSigmas = 4.0;

struct TrueBox {
  std::uint64_t object_id = 0;
  OrientedBox box;
  ObjectClass object_class = ObjectClass::Unknown;
  std::size_t visible_points = 0;
};

struct FrameTruth {
  std::vector<PointLabel> labels;            // one per point of the frame
  std::vector<std::int64_t> object_ids;      // mover id per point, -1 otherwise
  std::vector<TrueBox> boxes;                // movers present in the frame
};

struct GroundTruth {
  std::vector<FrameTruth> frames;
  std::vector<TrajectorySample> trajectories;
  MovementCounts counts;
};

/// Stateless per-frame generator: frame i depends only on (config, i).
class SceneGenerator {
 public:
  explicit SceneGenerator(SceneConfig config);

  const SceneConfig& config() const noexcept { return config_; }
  std::uint64_t frame_count() const noexcept { return config_.duration_frames; }
  double timestamp(std::uint64_t frame_index) const;

  void generate(std::uint64_t frame_index, Frame& frame, FrameTruth& truth) const;

  /// Pose of a mover at time t, or nullopt when it is off its path.
  std::optional<OrientedBox> mover_box(std::size_t mover, double t) const;

  /// True trajectories (all Confirmed) and their screenline counts.
  std::vector<TrajectorySample> true_trajectories() const;
  MovementCounts true_counts() const;

 private:
  SceneConfig config_;
  std::vector<double> path_lengths_;
};

/// Whole scene in memory. Use SceneGenerator to stream large scenes.
std::pair<std::vector<Frame>, GroundTruth> generate_scene(const SceneConfig& config);

/// Background-labeled points over all points. Throws EmptyInput.
double background_fraction(std::span<const FrameTruth> truth);

std::vector<std::string> preset_names();
/// Named scenes: "clean-static", "snow-low-volume", "urban-peak". Throws ConfigError.
SceneConfig make_preset(std::string_view name, std::uint64_t seed = 1);
SensorConfig preset_sensor();

/// A car driving north along the preset intersection's north-south road,
/// `lane_x` metres east of the road centre line, entering at `start_time`.
MoverPath crossing_vehicle(double start_time, double lane_x = 1.75, double speed = 8.0);

/// Ray/axis-aligned-box slab test along the unit direction; returns the entry
/// distance, if any, in (0, inf).
std::optional<double> ray_aabb(const Vec3& origin, const Vec3& dir, const Vec3& lo, const Vec3& hi);

// Ground-truth sidecar writers / readers.
void write_truth_labels_header(std::ostream& out);
void write_truth_labels(std::ostream& out, std::uint64_t frame_id, const FrameTruth& truth);
void write_truth_boxes_header(std::ostream& out);
void write_truth_boxes(std::ostream& out, std::uint64_t frame_id, double timestamp, const FrameTruth& truth);

}  // namespace lidarbg
