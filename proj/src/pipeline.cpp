#include "lidarbg/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <istream>
#include <map>
#include <mutex>
#include <string>
#include <thread>

#include "lidarbg/binary_io.hpp"
#include "lidarbg/csv.hpp"
#include "lidarbg/error.hpp"
#include "lidarbg/synth.hpp"

namespace lidarbg {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

bool needs_intensity(const RunConfig& c) {
  if (c.sampling_rate == 0) return false;
  return c.model_type == ModelType::DPGMM || c.adaptive.use_weights;
}

double cell_weight(const BackgroundModel& model, std::size_t cell, const CellObservation& obs) {
  if (!obs.returned || model.sampling_rate == 0 || model.intensity[cell].empty()) return 1.0;
  return point_weight(model.intensity[cell], obs.intensity, model.sampling_rate);
}

std::vector<char> fence_flags(std::span<const Vec3> xyz, const TensorizeResult& t, const RunConfig& config) {
  std::vector<char> inside(xyz.size(), 1);
  if (config.geofence.empty()) return inside;
  std::vector<Vec3> pts;
  std::vector<std::size_t> owner;
  for (std::size_t i = 0; i < xyz.size(); ++i) {
    if (t.point_cells[i] < 0) continue;
    pts.push_back(xyz[i]);
    owner.push_back(i);
  }
  std::fill(inside.begin(), inside.end(), 0);
  for (std::size_t k : geofence_filter(pts, config.geofence)) inside[owner[k]] = 1;
  return inside;
}

struct Columns {
  std::map<std::string, std::size_t, std::less<>> index;

  explicit Columns(std::string_view header) {
    const auto fields = csv::split(header);
    for (std::size_t i = 0; i < fields.size(); ++i) index.emplace(std::string(csv::trim(fields[i])), i);
  }
  std::optional<std::size_t> find(std::string_view name) const {
    const auto it = index.find(name);
    if (it == index.end()) return std::nullopt;
    return it->second;
  }
  std::size_t require(std::string_view name) const {
    if (auto i = find(name)) return *i;
    throw FormatError(1, "missing column '" + std::string(name) + "'");
  }
};

std::string_view field(const std::vector<std::string_view>& f, std::size_t i, std::size_t row) {
  if (i >= f.size()) throw FormatError(row, "too few fields");
  return csv::trim(f[i]);
}

double number(const std::vector<std::string_view>& f, std::size_t i, std::size_t row) {
  auto v = csv::parse_double(field(f, i, row));
  if (!v) throw FormatError(row, "expected a number in column " + std::to_string(i + 1));
  return *v;
}

std::uint64_t unsigned_number(const std::vector<std::string_view>& f, std::size_t i, std::size_t row) {
  auto v = csv::parse_uint(field(f, i, row));
  if (!v) throw FormatError(row, "expected a non-negative integer in column " + std::to_string(i + 1));
  return *v;
}

}  // namespace

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t, std::size_t)>& fn) {
  const auto workers = static_cast<std::size_t>(std::min<std::size_t>(static_cast<std::size_t>(resolve_threads(threads)),
                                                                      std::max<std::size_t>(n, 1)));
  if (workers <= 1 || n < 1024) {
    fn(0, n);
    return;
  }
  const std::size_t chunk = (n + workers - 1) / workers;
  std::vector<std::thread> pool;
  std::exception_ptr failure;
  std::mutex failure_mutex;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&, begin, end] {
      try {
        fn(begin, end);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

FrameReplay replay(std::span<const Frame> frames) {
  return [frames](const FrameVisitor& visit) {
    for (const auto& f : frames) visit(f);
  };
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

BackgroundModel train_model(const FrameReplay& frames, const RunConfig& config, TrainTimings* timings) {
  config.validate();
  BackgroundModel model;
  model.type = config.model_type;
  model.sensor = config.sensor;
  model.sampling_rate = needs_intensity(config) ? config.sampling_rate : 0;
  model.dpgmm_options = config.dpgmm;
  model.adaptive_options = config.adaptive;
  model.metadata.config_hash = config.training_hash();
  const std::size_t cells = model.cell_count();
  model.intensity.assign(cells, IntensityGMM{});

  TrainTimings local;
  auto t0 = Clock::now();
  bool first = true;
  auto note_frame = [&](const Frame& f) {
    if (first) model.metadata.first_timestamp = f.timestamp;
    first = false;
    model.metadata.last_timestamp = f.timestamp;
  };

  if (model.sampling_rate > 0) {
    std::vector<std::vector<float>> history(cells);
    frames([&](const Frame& f) {
      const auto t = tensorize_frame(f, config.sensor, config.collision_policy);
      for (std::size_t c = 0; c < cells; ++c) {
        if (t.tensor[c].returned) history[c].push_back(static_cast<float>(t.tensor[c].intensity));
      }
    });
    parallel_for(cells, config.threads, [&](std::size_t begin, std::size_t end) {
      std::vector<double> samples;
      for (std::size_t c = begin; c < end; ++c) {
        if (history[c].empty()) continue;
        samples.assign(history[c].begin(), history[c].end());
        model.intensity[c] = fit_intensity_gmm(samples, config.intensity);
        std::vector<float>().swap(history[c]);
      }
    });
  }
  local.intensity_s = seconds_since(t0);

  t0 = Clock::now();
  DPGMMOptions opts = config.dpgmm;
  opts.keep_history = config.gibbs_sweeps > 0;
  if (model.type == ModelType::DPGMM) {
    model.dpgmm.assign(cells, GridDPGMM(opts));
  } else {
    model.adaptive.assign(cells, AdaptiveCell(config.adaptive.components));
  }
  frames([&](const Frame& f) {
    note_frame(f);
    ++local.frames;
    local.points += f.points.size();
    const auto t = tensorize_frame(f, config.sensor, config.collision_policy);
    parallel_for(cells, config.threads, [&](std::size_t begin, std::size_t end) {
      for (std::size_t c = begin; c < end; ++c) {
        const auto& obs = t.tensor[c];
        const double w = cell_weight(model, c, obs);
        if (model.type == ModelType::DPGMM) {
          model.dpgmm[c].update(obs, w, f.frame_id);
        } else {
          model.adaptive[c].update_and_classify(obs, config.adaptive, w);
        }
      }
    });
  });
  model.metadata.frames = local.frames;

  if (model.type == ModelType::DPGMM && config.gibbs_sweeps > 0) {
    parallel_for(cells, config.threads, [&](std::size_t begin, std::size_t end) {
      for (std::size_t c = begin; c < end; ++c) {
        if (model.dpgmm[c].history().empty()) continue;
        std::mt19937_64 rng(mix(config.seed ^ mix(c)));
        model.dpgmm[c].gibbs_refine(config.gibbs_sweeps, rng);
        // Drop the retained history; the model file never carries it.
        bin::Writer w;
        model.dpgmm[c].serialize(w);
        bin::Reader r(w.bytes());
        model.dpgmm[c] = GridDPGMM::deserialize(r, config.dpgmm);
      }
    });
  }
  local.model_s = seconds_since(t0);
  if (timings) *timings = local;
  return model;
}

// ---------------------------------------------------------------------------
// Subtraction
// ---------------------------------------------------------------------------

Subtractor::Subtractor(BackgroundModel& model, const RunConfig& config) : model_(model), config_(config) {
  if (!(model.sensor == config.sensor)) {
    throw ConfigError("the model was trained for a different sensor layout than the run config");
  }
}

FrameMask Subtractor::apply(const Frame& frame) {
  auto t0 = Clock::now();
  last_ = tensorize_frame(frame, model_.sensor, config_.collision_policy);
  times_.tensorize_s += seconds_since(t0);

  t0 = Clock::now();
  const std::size_t n = frame.points.size();
  FrameMask mask;
  mask.foreground.assign(n, 0);
  const auto inside = fence_flags(last_.point_xyz, last_, config_);

  if (model_.type == ModelType::DPGMM) {
    parallel_for(n, config_.threads, [&](std::size_t begin, std::size_t end) {
      for (std::size_t i = begin; i < end; ++i) {
        const auto cell = last_.point_cells[i];
        if (cell < 0 || !inside[i]) continue;
        const auto& m = model_.dpgmm[static_cast<std::size_t>(cell)];
        if (!m.has_tables()) {
          mask.foreground[i] = 1;
          continue;
        }
        const auto obs = CellObservation::at(last_.point_xyz[i], frame.points[i].intensity.value_or(0.0));
        mask.foreground[i] = m.classify(obs, config_.decision).label == Label::Foreground ? 1 : 0;
      }
    });
  } else {
    const std::size_t cells = model_.cell_count();
    std::vector<Label> cell_label(cells, Label::Background);
    parallel_for(cells, config_.threads, [&](std::size_t begin, std::size_t end) {
      for (std::size_t c = begin; c < end; ++c) {
        const auto& obs = last_.tensor[c];
        cell_label[c] = model_.adaptive[c].update_and_classify(obs, model_.adaptive_options, cell_weight(model_, c, obs));
      }
    });
    for (std::size_t i = 0; i < n; ++i) {
      const auto cell = last_.point_cells[i];
      if (cell < 0 || !inside[i]) continue;
      const auto c = static_cast<std::size_t>(cell);
      Label label;
      if (last_.tensor[c].source_index == static_cast<std::int32_t>(i)) {
        label = cell_label[c];
      } else {
        label = model_.adaptive[c].classify(CellObservation::at(last_.point_xyz[i], 0.0), model_.adaptive_options);
      }
      mask.foreground[i] = label == Label::Foreground ? 1 : 0;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (last_.point_cells[i] >= 0) ++mask.returns;
    mask.foreground_count += mask.foreground[i];
  }
  times_.classify_s += seconds_since(t0);
  return mask;
}

MeanMaxModel train_mean_max(const FrameReplay& frames, const RunConfig& config) {
  MeanMaxModel model(config.sensor.beams, config.sensor.azimuth_bins, {config.mean_max_tolerance_m});
  frames([&](const Frame& f) { model.observe(tensorize_frame(f, config.sensor, config.collision_policy).tensor); });
  return model;
}

FrameMask apply_mean_max(const MeanMaxModel& model, const Frame& frame, const RunConfig& config) {
  const auto t = tensorize_frame(frame, config.sensor, config.collision_policy);
  const auto inside = fence_flags(t.point_xyz, t, config);
  FrameMask mask;
  mask.foreground.assign(frame.points.size(), 0);
  for (std::size_t i = 0; i < frame.points.size(); ++i) {
    const auto cell = t.point_cells[i];
    if (cell < 0) continue;
    ++mask.returns;
    if (!inside[i]) continue;
    if (model.classify(static_cast<std::size_t>(cell), t.point_xyz[i]) == Label::Foreground) {
      mask.foreground[i] = 1;
      ++mask.foreground_count;
    }
  }
  return mask;
}

// ---------------------------------------------------------------------------
// Detection
// ---------------------------------------------------------------------------

FrameDetections detect_objects(std::span<const Vec3> foreground, const RunConfig& config) {
  FrameDetections out;
  std::vector<Vec3> pts;
  if (config.lof_enabled) {
    const auto kept = lof_filter(foreground, config.lof);
    pts.reserve(kept.size());
    for (auto i : kept) pts.push_back(foreground[i]);
    out.lof_removed = foreground.size() - kept.size();
  } else {
    pts.assign(foreground.begin(), foreground.end());
  }
  const auto clustering = dbscan(pts, config.dbscan);
  out.noise = clustering.noise.size();
  std::vector<Vec3> members;
  for (const auto& cluster : clustering.clusters) {
    members.clear();
    Vec3 centroid = Vec3::Zero();
    for (auto i : cluster) {
      members.push_back(pts[i]);
      centroid += pts[i];
    }
    centroid /= static_cast<double>(members.size());
    Detection d;
    try {
      d.box = fit_obb(members);
    } catch (const DegenerateCluster&) {
      ++out.degenerate;
      out.degenerate_points += members.size();
      continue;
    }
    d.centroid = centroid;
    d.point_count = members.size();
    d.object_class = classify_object(d.box, 0.0, config.classes);
    out.detections.push_back(d);
  }
  return out;
}

FrameDetections DetectionPipeline::process(const Frame& frame, FrameMask* mask_out) {
  auto mask = subtractor_.apply(frame);
  std::vector<Vec3> fg;
  fg.reserve(mask.foreground_count);
  const auto& xyz = subtractor_.last_xyz();
  for (std::size_t i = 0; i < mask.foreground.size(); ++i) {
    if (mask.foreground[i]) fg.push_back(xyz[i]);
  }
  auto out = detect_objects(fg, config_);
  if (mask_out) *mask_out = std::move(mask);
  return out;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

void write_mask_header(std::ostream& out) { out << "frame_id,point_index,label\n"; }

void write_mask(std::ostream& out, std::uint64_t frame_id, const FrameMask& mask) {
  for (std::size_t i = 0; i < mask.foreground.size(); ++i) {
    out << frame_id << ',' << i << ',' << (mask.foreground[i] ? "foreground" : "background") << '\n';
  }
}

void write_detection_header(std::ostream& out) {
  out << "frame_id,timestamp,cx,cy,cz,length,width,height,yaw,class,point_count\n";
}

void write_detections(std::ostream& out, const Frame& frame, std::span<const Detection> detections) {
  for (const auto& d : detections) {
    out << frame.frame_id << ',' << csv::format_double(frame.timestamp) << ','
        << csv::format_double(d.box.center.x()) << ',' << csv::format_double(d.box.center.y()) << ','
        << csv::format_double(d.box.center.z()) << ',' << csv::format_double(d.box.length) << ','
        << csv::format_double(d.box.width) << ',' << csv::format_double(d.box.height) << ','
        << csv::format_double(d.box.yaw) << ',' << to_string(d.object_class) << ',' << d.point_count << '\n';
  }
}

void write_trajectory_header(std::ostream& out) {
  out << "track_id,frame_id,timestamp,x,y,z,yaw,speed,class,status\n";
}

void write_trajectory(std::ostream& out, std::span<const TrajectorySample> samples) {
  for (const auto& s : samples) {
    out << s.track_id << ',' << s.frame_id << ',' << csv::format_double(s.timestamp) << ','
        << csv::format_double(s.position.x()) << ',' << csv::format_double(s.position.y()) << ','
        << csv::format_double(s.position.z()) << ',' << csv::format_double(s.yaw) << ','
        << csv::format_double(s.speed) << ',' << to_string(s.object_class) << ',' << to_string(s.status) << '\n';
  }
}

std::vector<TrajectorySample> snapshot_tracks(const Tracker& tracker, const Frame& frame) {
  std::vector<TrajectorySample> out;
  for (const auto& t : tracker.tracks()) {
    TrajectorySample s;
    s.track_id = t.id;
    s.frame_id = frame.frame_id;
    s.timestamp = frame.timestamp;
    s.position = t.position;
    s.yaw = t.yaw;
    s.speed = t.speed();
    s.object_class = t.majority_class();
    s.status = t.status;
    out.push_back(s);
  }
  return out;
}

LabeledPoints read_point_labels(std::istream& in) {
  LabeledPoints out;
  std::string line;
  if (!std::getline(in, line)) return out;
  const Columns cols(line);
  const auto fi = cols.require("frame_id");
  const auto li = cols.require("label");
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (csv::trim(line).empty()) continue;
    const auto f = csv::split(line);
    out.frame_ids.push_back(unsigned_number(f, fi, row));
    const auto label = field(f, li, row);
    if (label == "foreground") {
      out.labels.push_back(1);
    } else if (label == "background" || label == "clutter") {
      out.labels.push_back(0);
    } else {
      throw FormatError(row, "unknown label '" + std::string(label) + "'");
    }
  }
  return out;
}

std::vector<FrameBoxes> read_boxes(std::istream& in, std::size_t min_points) {
  std::vector<FrameBoxes> out;
  std::string line;
  if (!std::getline(in, line)) return out;
  const Columns cols(line);
  const auto fi = cols.require("frame_id");
  const auto xi = cols.require("cx");
  const auto yi = cols.require("cy");
  auto ci = cols.find("point_count");
  if (!ci) ci = cols.find("visible_points");
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (csv::trim(line).empty()) continue;
    const auto f = csv::split(line);
    const auto frame = unsigned_number(f, fi, row);
    if (ci && unsigned_number(f, *ci, row) < min_points) {
      if (out.empty() || out.back().frame_id != frame) out.push_back({frame, {}});
      continue;
    }
    if (out.empty() || out.back().frame_id != frame) {
      if (!out.empty() && frame < out.back().frame_id) throw FormatError(row, "frame ids must ascend");
      out.push_back({frame, {}});
    }
    out.back().boxes.push_back({number(f, xi, row), number(f, yi, row)});
  }
  return out;
}

std::vector<TrajectorySample> read_trajectory(std::istream& in) {
  std::vector<TrajectorySample> out;
  std::string line;
  if (!std::getline(in, line)) return out;
  const Columns cols(line);
  const auto id = cols.require("track_id");
  const auto fi = cols.require("frame_id");
  const auto ti = cols.require("timestamp");
  const auto xi = cols.require("x");
  const auto yi = cols.require("y");
  const auto zi = cols.require("z");
  const auto si = cols.find("status");
  const auto ci = cols.find("class");
  const auto vi = cols.find("speed");
  const auto wi = cols.find("yaw");
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (csv::trim(line).empty()) continue;
    const auto f = csv::split(line);
    TrajectorySample s;
    s.track_id = unsigned_number(f, id, row);
    s.frame_id = unsigned_number(f, fi, row);
    s.timestamp = number(f, ti, row);
    s.position = Vec3(number(f, xi, row), number(f, yi, row), number(f, zi, row));
    s.status = si ? parse_track_status(field(f, *si, row)) : TrackStatus::Confirmed;
    if (ci) s.object_class = parse_object_class(field(f, *ci, row));
    if (vi) s.speed = number(f, *vi, row);
    if (wi) s.yaw = number(f, *wi, row);
    out.push_back(s);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Bench
// ---------------------------------------------------------------------------

BenchReport run_bench(const BenchOptions& options) {
  if (options.beams < 1 || options.bins < 1 || options.frames < 1) throw ConfigError("bench grid and frames must be >= 1");
  SceneConfig scene = make_preset("urban-peak", options.seed);
  scene.sensor = SensorConfig::uniform(options.beams, -25.0, 5.0, 360.0 / options.bins, 120.0, 10.0);
  scene.duration_frames = options.train_frames + options.frames;
  SceneGenerator gen(scene);

  RunConfig config;
  config.sensor = scene.sensor;
  config.model_type = options.model_type;
  config.threads = options.threads;
  config.seed = options.seed;

  const FrameReplay train = [&](const FrameVisitor& visit) {
    Frame f;
    FrameTruth truth;
    for (std::uint64_t i = 0; i < options.train_frames; ++i) {
      gen.generate(i, f, truth);
      visit(f);
    }
  };

  BenchReport report;
  auto t0 = Clock::now();
  auto model = train_model(train, config);
  report.train_s = seconds_since(t0);

  Subtractor sub(model, config);
  std::uint64_t fg = 0;
  std::uint64_t returns = 0;
  double elapsed = 0.0;
  Frame f;
  FrameTruth truth;
  for (std::uint64_t i = 0; i < options.frames; ++i) {
    gen.generate(options.train_frames + i, f, truth);
    t0 = Clock::now();
    const auto mask = sub.apply(f);
    elapsed += seconds_since(t0);
    fg += mask.foreground_count;
    returns += mask.returns;
    report.points += f.points.size();
  }
  report.subtract_s = elapsed;
  report.frames = options.frames;
  report.tensorize_s = sub.times().tensorize_s;
  report.classify_s = sub.times().classify_s;
  report.frames_per_s = report.subtract_s > 0.0 ? static_cast<double>(report.frames) / report.subtract_s : 0.0;
  report.points_per_s = report.subtract_s > 0.0 ? static_cast<double>(report.points) / report.subtract_s : 0.0;
  report.foreground_fraction = returns > 0 ? static_cast<double>(fg) / static_cast<double>(returns) : 0.0;
  return report;
}

}  // namespace lidarbg
