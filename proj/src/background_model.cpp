#include "lidarbg/background_model.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <iterator>

#include "lidarbg/binary_io.hpp"
#include "lidarbg/error.hpp"

namespace lidarbg {

namespace {

constexpr std::array<char, 8> kMagic{'L', 'B', 'G', 'M', 'O', 'D', 'E', 'L'};

void put_sensor(bin::Writer& w, const SensorConfig& s) {
  w.put(static_cast<std::int32_t>(s.beams));
  w.put(static_cast<std::uint32_t>(s.elevation_deg.size()));
  for (double e : s.elevation_deg) w.put(e);
  w.put(s.rotation_hz);
  w.put(s.azimuth_resolution_deg);
  w.put(static_cast<std::int32_t>(s.azimuth_bins));
  w.put(s.max_range_m);
}

SensorConfig get_sensor(bin::Reader& r) {
  SensorConfig s;
  s.beams = r.get<std::int32_t>();
  const auto n = r.get<std::uint32_t>();
  if (n > 65536) throw FormatError(r.position(), "implausible beam table");
  s.elevation_deg.resize(n);
  for (auto& e : s.elevation_deg) e = r.get_double();
  s.rotation_hz = r.get_double();
  s.azimuth_resolution_deg = r.get_double();
  s.azimuth_bins = r.get<std::int32_t>();
  s.max_range_m = r.get_double();
  try {
    s.validate();
  } catch (const ConfigError& e) {
    throw FormatError(r.position(), std::string("stored sensor config is invalid: ") + e.what());
  }
  return s;
}

void put_dpgmm_options(bin::Writer& w, const DPGMMOptions& o) {
  w.put(o.alpha);
  for (int i = 0; i < 3; ++i) w.put(o.prior.mu0[i]);
  w.put(o.prior.kappa0);
  w.put(o.prior.nu0);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) w.put(o.prior.psi0(i, j));
  }
  w.put(o.fixed_prior_mean);
  w.put(o.prior_mean_weight);
  w.put(static_cast<std::uint64_t>(o.table_cap));
}

DPGMMOptions get_dpgmm_options(bin::Reader& r) {
  DPGMMOptions o;
  o.alpha = r.get_double();
  for (int i = 0; i < 3; ++i) o.prior.mu0[i] = r.get_double();
  o.prior.kappa0 = r.get_double();
  o.prior.nu0 = r.get_double();
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) o.prior.psi0(i, j) = r.get_double();
  }
  o.fixed_prior_mean = r.get_bool();
  o.prior_mean_weight = r.get_double();
  o.table_cap = static_cast<std::size_t>(r.get<std::uint64_t>());
  return o;
}

void put_adaptive_options(bin::Writer& w, const AdaptiveOptions& o) {
  w.put(static_cast<std::int32_t>(o.components));
  w.put(o.learning_rate);
  w.put(o.match_sigma);
  w.put(o.background_portion);
  w.put(o.initial_variance);
  w.put(o.variance_floor);
  w.put(o.bootstrap_frames);
  w.put(o.use_weights);
  w.put(o.no_return_level);
}

AdaptiveOptions get_adaptive_options(bin::Reader& r) {
  AdaptiveOptions o;
  o.components = r.get<std::int32_t>();
  o.learning_rate = r.get_double();
  o.match_sigma = r.get_double();
  o.background_portion = r.get_double();
  o.initial_variance = r.get_double();
  o.variance_floor = r.get_double();
  o.bootstrap_frames = r.get<std::uint32_t>();
  o.use_weights = r.get_bool();
  o.no_return_level = r.get_double();
  return o;
}

void put_intensity(bin::Writer& w, const IntensityGMM& g) {
  w.put(static_cast<std::uint32_t>(g.components.size()));
  for (const auto& c : g.components) {
    w.put(c.weight);
    w.put(c.mean);
    w.put(c.variance);
  }
}

IntensityGMM get_intensity(bin::Reader& r) {
  IntensityGMM g;
  const auto n = r.get<std::uint32_t>();
  if (n > 64) throw FormatError(r.position(), "implausible intensity component count");
  g.components.resize(n);
  for (auto& c : g.components) {
    c.weight = r.get_double();
    c.mean = r.get_double();
    c.variance = r.get_double();
  }
  return g;
}

}  // namespace

std::vector<std::uint8_t> BackgroundModel::to_bytes() const {
  const std::size_t cells = cell_count();
  if (intensity.size() != cells || (type == ModelType::DPGMM ? dpgmm.size() : adaptive.size()) != cells) {
    throw LengthMismatch("model does not have one entry per grid cell");
  }
  bin::Writer w;
  w.put_bytes(kMagic.data(), kMagic.size());
  w.put(kVersion);
  w.put(static_cast<std::uint8_t>(type));
  put_sensor(w, sensor);
  w.put(static_cast<std::int32_t>(sampling_rate));
  put_dpgmm_options(w, dpgmm_options);
  put_adaptive_options(w, adaptive_options);
  w.put(metadata.frames);
  w.put(metadata.first_timestamp);
  w.put(metadata.last_timestamp);
  w.put(metadata.config_hash);
  w.put(static_cast<std::uint64_t>(cells));
  for (std::size_t c = 0; c < cells; ++c) {
    put_intensity(w, intensity[c]);
    if (type == ModelType::DPGMM) {
      dpgmm[c].serialize(w);
    } else {
      adaptive[c].serialize(w);
    }
  }
  return std::move(w.bytes());
}

BackgroundModel BackgroundModel::from_bytes(const std::vector<std::uint8_t>& bytes) {
  bin::Reader r(bytes);
  std::array<char, 8> magic{};
  r.get_bytes(magic.data(), magic.size());
  if (magic != kMagic) throw FormatError(0, "not a background model file");
  const auto version = r.get<std::uint32_t>();
  if (version != kVersion) {
    throw VersionMismatch("model file version " + std::to_string(version) + ", expected " +
                          std::to_string(kVersion));
  }
  BackgroundModel m;
  const auto tag = r.get<std::uint8_t>();
  if (tag != static_cast<std::uint8_t>(ModelType::DPGMM) && tag != static_cast<std::uint8_t>(ModelType::Adaptive)) {
    throw FormatError(r.position(), "unknown model type tag");
  }
  m.type = static_cast<ModelType>(tag);
  m.sensor = get_sensor(r);
  m.sampling_rate = r.get<std::int32_t>();
  m.dpgmm_options = get_dpgmm_options(r);
  m.adaptive_options = get_adaptive_options(r);
  m.metadata.frames = r.get<std::uint64_t>();
  m.metadata.first_timestamp = r.get_double();
  m.metadata.last_timestamp = r.get_double();
  m.metadata.config_hash = r.get<std::uint64_t>();
  const auto cells = r.get<std::uint64_t>();
  if (cells != m.sensor.cell_count()) throw FormatError(r.position(), "cell count does not match the sensor grid");
  m.intensity.reserve(cells);
  if (m.type == ModelType::DPGMM) {
    m.dpgmm.reserve(cells);
  } else {
    m.adaptive.reserve(cells);
  }
  for (std::uint64_t c = 0; c < cells; ++c) {
    m.intensity.push_back(get_intensity(r));
    if (m.type == ModelType::DPGMM) {
      m.dpgmm.push_back(GridDPGMM::deserialize(r, m.dpgmm_options));
    } else {
      m.adaptive.push_back(AdaptiveCell::deserialize(r));
    }
  }
  if (r.remaining() != 0) throw FormatError(r.position(), "trailing bytes after model");
  return m;
}

void BackgroundModel::save(const std::filesystem::path& path) const {
  const auto bytes = to_bytes();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write model " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

BackgroundModel BackgroundModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open model " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return from_bytes(bytes);
}

}  // namespace lidarbg
