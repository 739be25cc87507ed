#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "lidarbg/adaptive_gmm.hpp"
#include "lidarbg/config.hpp"
#include "lidarbg/dpgmm.hpp"
#include "lidarbg/intensity_model.hpp"
#include "lidarbg/tensorize.hpp"

namespace lidarbg {

struct TrainingMetadata {
  std::uint64_t frames = 0;
  double first_timestamp = 0.0;
  double last_timestamp = 0.0;
  std::uint64_t config_hash = 0;

  friend bool operator==(const TrainingMetadata&, const TrainingMetadata&) = default;
};

/// Everything subtract/detect/track need to label a frame: the sensor layout,
/// one intensity mixture per cell, and one background model per cell.
struct BackgroundModel {
  static constexpr std::uint32_t kVersion = 1;

  ModelType type = ModelType::DPGMM;
  SensorConfig sensor;
  int sampling_rate = 0;
  DPGMMOptions dpgmm_options;
  AdaptiveOptions adaptive_options;
  TrainingMetadata metadata;
  std::vector<IntensityGMM> intensity;  // per cell, possibly empty
  std::vector<GridDPGMM> dpgmm;         // per cell when type == DPGMM
  std::vector<AdaptiveCell> adaptive;   // per cell when type == Adaptive

  std::size_t cell_count() const noexcept { return sensor.cell_count(); }

  std::vector<std::uint8_t> to_bytes() const;
  /// Throws FormatError on a bad magic or truncated data, VersionMismatch on
  /// a different container version.
  static BackgroundModel from_bytes(const std::vector<std::uint8_t>& bytes);

  void save(const std::filesystem::path& path) const;
  static BackgroundModel load(const std::filesystem::path& path);
};

}  // namespace lidarbg
