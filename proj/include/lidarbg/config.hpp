#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lidarbg/adaptive_gmm.hpp"
#include "lidarbg/detect.hpp"
#include "lidarbg/dpgmm.hpp"
#include "lidarbg/evaluate.hpp"
#include "lidarbg/intensity_model.hpp"
#include "lidarbg/tensorize.hpp"
#include "lidarbg/tracker.hpp"

namespace lidarbg {

enum class ModelType : std::uint8_t { DPGMM = 1, Adaptive = 2 };

std::string_view to_string(ModelType t);
ModelType parse_model_type(std::string_view name);

struct RunConfig {
  SensorConfig sensor;  // defaults to the 32-beam preset sensor
  CollisionPolicy collision_policy = CollisionPolicy::KeepNearest;
  double max_intensity = 255.0;

  ModelType model_type = ModelType::DPGMM;
  IntensityFitOptions intensity;
  int sampling_rate = 4;
  DPGMMOptions dpgmm;
  DecisionRule decision;
  int gibbs_sweeps = 0;
  AdaptiveOptions adaptive;
  double mean_max_tolerance_m = 0.3;

  std::vector<GeofencePolygon> geofence;
  bool lof_enabled = true;
  LofOptions lof;
  DbscanOptions dbscan;
  ClassRules classes;
  TrackerOptions tracker;

  double match_radius_m = 2.0;
  Screenline screenline{{-19.0, 36.0}, {-3.0, 36.0}};  // preset scenes' north approach
  double count_debounce_s = 2.0;

  std::uint64_t seed = 1;
  int threads = 0;  // 0 = logical cores

  RunConfig();

  /// Throws ConfigError on any out-of-range value.
  void validate() const;

  /// Stable hash of the fields that shape a trained model.
  std::uint64_t training_hash() const;
};

/// Parses a JSON document. Every key is optional; unknown keys are rejected
/// with ConfigError naming the offending path.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::filesystem::path& path);
std::string dump_run_config(const RunConfig& config);

std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace lidarbg
