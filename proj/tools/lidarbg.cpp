// lidarbg: command-line front end (synth, train, subtract, detect, track, eval, bench).

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "lidarbg/background_model.hpp"
#include "lidarbg/config.hpp"
#include "lidarbg/error.hpp"
#include "lidarbg/evaluate.hpp"
#include "lidarbg/pipeline.hpp"
#include "lidarbg/point_cloud_io.hpp"
#include "lidarbg/synth.hpp"
#include "lidarbg/tracker.hpp"

namespace fs = std::filesystem;
using namespace lidarbg;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitThreshold = 3;

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<int> sampling_rate;
  std::string model_type;
  bool bayes_normalized = false;
  bool json_log = false;
  std::string format;
};

class Log {
 public:
  explicit Log(bool json) : json_(json) {}

  void stage(const std::string& name, double seconds, const nlohmann::ordered_json& extra = {}) const {
    if (json_) {
      nlohmann::ordered_json j{{"stage", name}, {"seconds", seconds}};
      for (const auto& [k, v] : extra.items()) j[k] = v;
      std::cerr << j.dump() << '\n';
    } else {
      std::cerr << "[lidarbg] " << name << " " << std::fixed << std::setprecision(3) << seconds << "s";
      for (const auto& [k, v] : extra.items()) std::cerr << ' ' << k << '=' << v.dump();
      std::cerr << '\n';
      std::cerr.unsetf(std::ios::fixed);
    }
  }

 private:
  bool json_;
};

using Clock = std::chrono::steady_clock;
double since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

RunConfig make_config(const Common& c) {
  RunConfig cfg = c.config_path.empty() ? RunConfig{} : load_run_config(c.config_path);
  if (c.seed) {
    cfg.seed = *c.seed;
    cfg.intensity.seed = *c.seed;
  }
  if (c.threads) cfg.threads = *c.threads;
  if (c.sampling_rate) cfg.sampling_rate = *c.sampling_rate;
  if (!c.model_type.empty()) cfg.model_type = parse_model_type(c.model_type);
  if (c.bayes_normalized) cfg.decision.bayes_normalized = true;
  cfg.validate();
  return cfg;
}

FrameFormat format_for(const std::string& flag, const fs::path& path) {
  if (!flag.empty()) return parse_frame_format(flag);
  return path.extension() == ".bin" ? FrameFormat::Binary : FrameFormat::Csv;
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return in;
}

/// Visits frames [skip, skip + limit) of a frame file.
void for_frames(const fs::path& path, FrameFormat format, const RunConfig& cfg, std::uint64_t skip,
                std::uint64_t limit, const FrameVisitor& visit) {
  IoOptions io;
  io.max_intensity = cfg.max_intensity;
  auto reader = open_frame_reader(path, format, io);
  std::uint64_t index = 0;
  std::uint64_t used = 0;
  while (auto frame = reader->next()) {
    if (index++ < skip) continue;
    if (limit > 0 && used >= limit) break;
    ++used;
    visit(*frame);
  }
}

// ---------------------------------------------------------------------------

int cmd_synth(const Common& common, const std::string& preset, std::uint64_t frames, const fs::path& out_dir) {
  const Log log(common.json_log);
  RunConfig cfg = make_config(common);
  SceneConfig scene = make_preset(preset, common.seed.value_or(cfg.seed));
  if (frames > 0) scene.duration_frames = frames;
  const SceneGenerator gen(scene);
  cfg.sensor = scene.sensor;
  cfg.screenline = scene.screenline;

  fs::create_directories(out_dir);
  const FrameFormat format = common.format.empty() ? FrameFormat::Csv : parse_frame_format(common.format);
  const fs::path frames_path = out_dir / (format == FrameFormat::Csv ? "frames.csv" : "frames.bin");
  FrameWriter writer(frames_path, format);
  auto gt = open_out(out_dir / "gt.csv");
  auto boxes = open_out(out_dir / "boxes.csv");
  write_truth_labels_header(gt);
  write_truth_boxes_header(boxes);

  const auto t0 = Clock::now();
  const int threads = resolve_threads(cfg.threads);
  const std::uint64_t chunk = static_cast<std::uint64_t>(threads) * 4;
  std::uint64_t points = 0;
  std::uint64_t background = 0;
  for (std::uint64_t start = 0; start < gen.frame_count(); start += chunk) {
    const std::uint64_t n = std::min(chunk, gen.frame_count() - start);
    std::vector<Frame> batch(n);
    std::vector<FrameTruth> truth(n);
    parallel_for(n, threads, [&](std::size_t b, std::size_t e) {
      for (std::size_t i = b; i < e; ++i) gen.generate(start + i, batch[i], truth[i]);
    });
    for (std::uint64_t i = 0; i < n; ++i) {
      writer.write(batch[i]);
      write_truth_labels(gt, batch[i].frame_id, truth[i]);
      write_truth_boxes(boxes, batch[i].frame_id, batch[i].timestamp, truth[i]);
      points += truth[i].labels.size();
      background += static_cast<std::uint64_t>(
          std::count(truth[i].labels.begin(), truth[i].labels.end(), PointLabel::Background));
    }
  }
  writer.close();

  const auto trajectories = gen.true_trajectories();
  auto traj = open_out(out_dir / "trajectories.csv");
  write_trajectory_header(traj);
  write_trajectory(traj, trajectories);
  const auto counts = count_movements(trajectories, scene.screenline, {}, cfg.count_debounce_s);
  auto count_file = open_out(out_dir / "counts.csv");
  count_file << "inbound,outbound\n" << counts.inbound << ',' << counts.outbound << '\n';
  auto config_file = open_out(out_dir / "config.json");
  config_file << dump_run_config(cfg);

  log.stage("synth", since(t0),
            {{"preset", preset},
             {"frames", gen.frame_count()},
             {"points", points},
             {"background_fraction", points ? static_cast<double>(background) / static_cast<double>(points) : 0.0}});
  return 0;
}

int cmd_train(const Common& common, const fs::path& input, const fs::path& model_path, std::uint64_t skip,
              std::uint64_t limit) {
  const Log log(common.json_log);
  const RunConfig cfg = make_config(common);
  const FrameFormat format = format_for(common.format, input);
  const FrameReplay frames = [&](const FrameVisitor& visit) { for_frames(input, format, cfg, skip, limit, visit); };
  TrainTimings timings;
  const auto t0 = Clock::now();
  const auto model = train_model(frames, cfg, &timings);
  log.stage("train.intensity", timings.intensity_s);
  log.stage("train." + std::string(to_string(cfg.model_type)), timings.model_s,
            {{"frames", timings.frames}, {"points", timings.points}});
  const auto t1 = Clock::now();
  if (model_path.has_parent_path()) fs::create_directories(model_path.parent_path());
  model.save(model_path);
  log.stage("train.save", since(t1), {{"total_seconds", since(t0)}});
  if (timings.frames == 0) throw EmptyInput("no training frames in " + input.string());
  return 0;
}

struct LoadedRun {
  RunConfig cfg;
  BackgroundModel model;
};

LoadedRun load_run(const Common& common, const fs::path& model_path) {
  LoadedRun run{make_config(common), BackgroundModel::load(model_path)};
  run.cfg.sensor = run.model.sensor;
  return run;
}

int cmd_subtract(const Common& common, const fs::path& input, const fs::path& model_path, const fs::path& output,
                 std::uint64_t skip, std::uint64_t limit) {
  const Log log(common.json_log);
  auto run = load_run(common, model_path);
  Subtractor sub(run.model, run.cfg);
  auto out = open_out(output);
  write_mask_header(out);
  std::uint64_t total = 0;
  std::uint64_t foreground = 0;
  std::uint64_t frames = 0;
  const auto t0 = Clock::now();
  for_frames(input, format_for(common.format, input), run.cfg, skip, limit, [&](const Frame& f) {
    const auto mask = sub.apply(f);
    write_mask(out, f.frame_id, mask);
    total += f.points.size();
    foreground += mask.foreground_count;
    ++frames;
  });
  const double ratio = total ? static_cast<double>(foreground) / static_cast<double>(total) : 0.0;
  log.stage("subtract", since(t0),
            {{"frames", frames},
             {"points", total},
             {"foreground", foreground},
             {"compression_ratio", ratio},
             {"tensorize_seconds", sub.times().tensorize_s},
             {"classify_seconds", sub.times().classify_s}});
  std::cout << "compression_ratio " << ratio << " (" << foreground << " foreground of " << total << " points)\n";
  return 0;
}

int cmd_detect(const Common& common, const fs::path& input, const fs::path& model_path, const fs::path& output,
               std::uint64_t skip, std::uint64_t limit) {
  const Log log(common.json_log);
  auto run = load_run(common, model_path);
  DetectionPipeline pipeline(run.model, run.cfg);
  auto out = open_out(output);
  write_detection_header(out);
  std::uint64_t frames = 0;
  std::uint64_t detections = 0;
  const auto t0 = Clock::now();
  for_frames(input, format_for(common.format, input), run.cfg, skip, limit, [&](const Frame& f) {
    const auto det = pipeline.process(f);
    write_detections(out, f, det.detections);
    detections += det.detections.size();
    ++frames;
  });
  log.stage("detect", since(t0), {{"frames", frames}, {"detections", detections}});
  return 0;
}

int cmd_track(const Common& common, const fs::path& input, const fs::path& model_path, const fs::path& output,
              std::uint64_t skip, std::uint64_t limit) {
  const Log log(common.json_log);
  auto run = load_run(common, model_path);
  DetectionPipeline pipeline(run.model, run.cfg);
  Tracker tracker(run.cfg.tracker);
  auto out = open_out(output);
  write_trajectory_header(out);
  std::vector<TrajectorySample> all;
  std::optional<double> last_time;
  const double nominal_dt = 1.0 / run.cfg.sensor.rotation_hz;
  std::uint64_t frames = 0;
  const auto t0 = Clock::now();
  for_frames(input, format_for(common.format, input), run.cfg, skip, limit, [&](const Frame& f) {
    auto det = pipeline.process(f);
    const double dt = last_time ? f.timestamp - *last_time : nominal_dt;
    last_time = f.timestamp;
    tracker.step(det.detections, dt);
    const auto snap = snapshot_tracks(tracker, f);
    write_trajectory(out, snap);
    all.insert(all.end(), snap.begin(), snap.end());
    ++frames;
  });
  const auto counts = count_movements(all, run.cfg.screenline, {}, run.cfg.count_debounce_s);
  log.stage("track", since(t0),
            {{"frames", frames},
             {"tracks_issued", tracker.issued_ids() - 1},
             {"inbound", counts.inbound},
             {"outbound", counts.outbound}});
  return 0;
}

LabeledPoints from(LabeledPoints points, std::uint64_t first) {
  if (first == 0) return points;
  LabeledPoints kept;
  for (std::size_t i = 0; i < points.labels.size(); ++i) {
    if (points.frame_ids[i] < first) continue;
    kept.frame_ids.push_back(points.frame_ids[i]);
    kept.labels.push_back(points.labels[i]);
  }
  return kept;
}

template <typename T>
std::vector<T> from(std::vector<T> rows, std::uint64_t first) {
  std::erase_if(rows, [first](const T& r) { return r.frame_id < first; });
  return rows;
}

int cmd_eval(const Common& common, const std::string& level, const fs::path& pred, const fs::path& gt,
             const fs::path& output, std::optional<double> min_f1, std::optional<double> min_accuracy,
             std::size_t min_visible, std::uint64_t from_frame) {
  const RunConfig cfg = make_config(common);
  std::vector<MetricsRow> rows;
  bool below = false;

  if (level == "point") {
    auto pin = open_in(pred);
    auto gin = open_in(gt);
    const auto p = from(read_point_labels(pin), from_frame);
    const auto g = from(read_point_labels(gin), from_frame);
    if (p.frame_ids != g.frame_ids) throw LengthMismatch("prediction and truth cover different points");
    MetricsRow row{"point", "all", confusion(p.labels, g.labels), {}};
    row.metrics = metrics_from_counts(row.counts);
    rows.push_back(row);
    if (min_f1 && row.metrics.f1 < *min_f1) below = true;
    if (min_accuracy && row.metrics.accuracy < *min_accuracy) below = true;
  } else if (level == "object") {
    auto pin = open_in(pred);
    auto gin = open_in(gt);
    const auto p = from(read_boxes(pin), from_frame);
    const auto g = from(read_boxes(gin, min_visible), from_frame);
    std::map<std::uint64_t, const FrameBoxes*> pred_by_frame;
    for (const auto& f : p) pred_by_frame[f.frame_id] = &f;
    ConfusionCounts total;
    for (const auto& f : g) {
      const auto it = pred_by_frame.find(f.frame_id);
      const std::vector<BevBox> none;
      const auto& boxes = it == pred_by_frame.end() ? none : it->second->boxes;
      total += object_metrics(boxes, f.boxes, cfg.match_radius_m).counts;
    }
    MetricsRow row{"object", "all", total, {}};
    row.metrics.precision = total.tp + total.fp ? static_cast<double>(total.tp) / static_cast<double>(total.tp + total.fp) : 0.0;
    row.metrics.recall = total.tp + total.fn ? static_cast<double>(total.tp) / static_cast<double>(total.tp + total.fn) : 0.0;
    const double s = row.metrics.precision + row.metrics.recall;
    row.metrics.f1 = s > 0.0 ? 2.0 * row.metrics.precision * row.metrics.recall / s : 0.0;
    rows.push_back(row);
    if (min_f1 && row.metrics.f1 < *min_f1) below = true;
  } else if (level == "path") {
    auto pin = open_in(pred);
    auto gin = open_in(gt);
    const auto p = count_movements(from(read_trajectory(pin), from_frame), cfg.screenline, {}, cfg.count_debounce_s);
    const auto g = count_movements(from(read_trajectory(gin), from_frame), cfg.screenline, {}, cfg.count_debounce_s);
    auto out = open_out(output);
    out << "direction,reference,measured,accuracy\n";
    const std::pair<const char*, std::pair<std::uint64_t, std::uint64_t>> dirs[] = {
        {"inbound", {g.inbound, p.inbound}}, {"outbound", {g.outbound, p.outbound}}};
    for (const auto& [name, c] : dirs) {
      if (c.first == 0) {
        out << name << ',' << c.first << ',' << c.second << ",\n";
        continue;
      }
      const double acc = path_count_accuracy(static_cast<double>(c.first), static_cast<double>(c.second));
      out << name << ',' << c.first << ',' << c.second << ',' << acc << '\n';
      std::cout << name << ": reference " << c.first << ", measured " << c.second << ", accuracy " << acc << '\n';
      if (min_accuracy && acc < *min_accuracy) below = true;
    }
    return below ? kExitThreshold : 0;
  } else {
    throw ConfigError("unknown eval level '" + level + "' (point, object, path)");
  }

  auto out = open_out(output);
  write_metrics_csv(out, rows);
  write_metrics_table(std::cout, rows);
  return below ? kExitThreshold : 0;
}

int cmd_bench(const Common& common, const BenchOptions& options) {
  const Log log(common.json_log);
  const auto report = run_bench(options);
  log.stage("bench.train", report.train_s);
  log.stage("bench.subtract", report.subtract_s,
            {{"model_type", std::string(to_string(options.model_type))},
             {"grid", std::to_string(options.beams) + "x" + std::to_string(options.bins)},
             {"frames", report.frames},
             {"points", report.points},
             {"tensorize_seconds", report.tensorize_s},
             {"classify_seconds", report.classify_s},
             {"frames_per_second", report.frames_per_s},
             {"points_per_second", report.points_per_s},
             {"foreground_fraction", report.foreground_fraction}});
  std::cout << "frames_per_second " << report.frames_per_s << "\npoints_per_second " << report.points_per_s << '\n';
  return 0;
}

void add_common(CLI::App* app, Common& c, bool model_flags) {
  app->add_option("--config", c.config_path, "JSON run configuration")->check(CLI::ExistingFile);
  app->add_option("--seed", c.seed, "random seed");
  app->add_option("--threads", c.threads, "worker threads (0 = all cores)")->check(CLI::NonNegativeNumber);
  app->add_option("--format", c.format, "frame file format: csv or binary (default: by extension)")
      ->check(CLI::IsMember({"csv", "binary"}));
  app->add_flag("--json-log", c.json_log, "machine-readable stage timing on stderr");
  if (model_flags) {
    app->add_option("--sampling-rate", c.sampling_rate, "intensity sampling rate: 0, 2, 4 or 8")
        ->check(CLI::IsMember({0, 2, 4, 8}));
    app->add_option("--model-type", c.model_type, "dpgmm or adaptive")->check(CLI::IsMember({"dpgmm", "adaptive"}));
    app->add_flag("--bayes-normalized", c.bayes_normalized, "use the normalized Bayes denominator");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Roadside LiDAR background subtraction and detection"};
  app.require_subcommand(1);
  Common common;

  std::string preset = "urban-peak";
  std::uint64_t synth_frames = 0;
  std::string input, output, model_path, pred, gt, level = "point";
  std::uint64_t skip = 0, limit = 0;
  std::optional<double> min_f1, min_accuracy;
  std::size_t min_visible = 10;
  BenchOptions bench;
  std::string bench_type = "adaptive";

  auto* synth = app.add_subcommand("synth", "generate a synthetic scene with ground truth");
  add_common(synth, common, false);
  synth->add_option("--preset", preset, "clean-static, snow-low-volume or urban-peak")
      ->check(CLI::IsMember(preset_names()));
  synth->add_option("--frames", synth_frames, "override the preset duration");
  synth->add_option("--output", output, "output directory")->required();

  auto* train = app.add_subcommand("train", "fit the per-cell background model");
  add_common(train, common, true);
  train->add_option("--input", input, "training frames")->required()->check(CLI::ExistingFile);
  train->add_option("--model", model_path, "model file to write")->required();
  train->add_option("--skip-frames", skip, "frames to skip at the start of the input");
  train->add_option("--max-frames", limit, "stop after this many frames (0 = all)");

  auto add_run = [&](CLI::App* sub, const char* out_help) {
    add_common(sub, common, true);
    sub->add_option("--input", input, "frames to process")->required()->check(CLI::ExistingFile);
    sub->add_option("--model", model_path, "trained model file")->required()->check(CLI::ExistingFile);
    sub->add_option("--output", output, out_help)->required();
    sub->add_option("--skip-frames", skip, "frames to skip at the start of the input");
    sub->add_option("--max-frames", limit, "stop after this many frames (0 = all)");
  };
  auto* subtract = app.add_subcommand("subtract", "per-point background/foreground labels");
  add_run(subtract, "mask CSV");
  auto* detect = app.add_subcommand("detect", "foreground, denoise, cluster, box and classify");
  add_run(detect, "detection CSV");
  auto* track = app.add_subcommand("track", "detect and track; writes trajectories");
  add_run(track, "trajectory CSV");

  auto* eval = app.add_subcommand("eval", "score predictions against ground truth");
  add_common(eval, common, false);
  eval->add_option("--level", level, "point, object or path")->check(CLI::IsMember({"point", "object", "path"}));
  eval->add_option("--pred,--input", pred, "predicted masks, detections or trajectories")->required()->check(CLI::ExistingFile);
  eval->add_option("--gt", gt, "ground truth file")->required()->check(CLI::ExistingFile);
  eval->add_option("--output", output, "report CSV")->required();
  eval->add_option("--min-f1", min_f1, "exit 3 when F1 falls below this");
  eval->add_option("--min-accuracy", min_accuracy, "exit 3 when point or path-count accuracy falls below this");
  eval->add_option("--min-visible-points", min_visible, "ignore truth boxes with fewer visible points");
  eval->add_option("--from-frame", skip, "ignore frames with a smaller frame_id");

  auto* bench_cmd = app.add_subcommand("bench", "subtraction throughput on a synthetic grid");
  add_common(bench_cmd, common, false);
  bench_cmd->add_option("--model-type", bench_type, "dpgmm or adaptive")->check(CLI::IsMember({"dpgmm", "adaptive"}));
  bench_cmd->add_option("--beams", bench.beams, "grid beams");
  bench_cmd->add_option("--bins", bench.bins, "grid azimuth bins");
  bench_cmd->add_option("--frames", bench.frames, "timed frames");
  bench_cmd->add_option("--train-frames", bench.train_frames, "training frames");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*synth) return cmd_synth(common, preset, synth_frames, output);
    if (*train) return cmd_train(common, input, model_path, skip, limit);
    if (*subtract) return cmd_subtract(common, input, model_path, output, skip, limit);
    if (*detect) return cmd_detect(common, input, model_path, output, skip, limit);
    if (*track) return cmd_track(common, input, model_path, output, skip, limit);
    if (*eval) return cmd_eval(common, level, pred, gt, output, min_f1, min_accuracy, min_visible, skip);
    if (*bench_cmd) {
      bench.model_type = parse_model_type(bench_type);
      bench.seed = common.seed.value_or(1);
      bench.threads = common.threads.value_or(0);
      return cmd_bench(common, bench);
    }
  } catch (const ConfigError& e) {
    std::cerr << "lidarbg: configuration error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const FormatError& e) {
    std::cerr << "lidarbg: format error at row " << e.row() << ": " << e.reason() << '\n';
    return kExitData;
  } catch (const Error& e) {
    std::cerr << "lidarbg: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "lidarbg: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}
