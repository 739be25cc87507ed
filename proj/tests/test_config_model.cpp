#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "lidarbg/background_model.hpp"
#include "lidarbg/config.hpp"
#include "lidarbg/error.hpp"
#include "lidarbg/pipeline.hpp"
#include "lidarbg/synth.hpp"

using namespace lidarbg;
namespace fs = std::filesystem;

TEST_CASE("config defaults and overrides") {
  const auto def = parse_run_config("{}");
  CHECK(def.sampling_rate == 4);
  CHECK(def.dpgmm.alpha == 1.0);
  CHECK(def.dpgmm.prior.kappa0 == 0.1);
  CHECK(def.dpgmm.prior.nu0 == 5.0);
  CHECK(def.dbscan.eps == 0.8);
  CHECK(def.dbscan.min_pts == 5);
  CHECK(def.tracker.confirm_hits == 6);

  const auto c = parse_run_config(R"({"model_type": "adaptive", "intensity": {"sampling_rate": 8},
                                      "dpgmm": {"alpha": 2.5, "decision_level": 0.3},
                                      "dbscan": {"eps": 1.1}, "seed": 9})");
  CHECK(c.model_type == ModelType::Adaptive);
  CHECK(c.sampling_rate == 8);
  CHECK(c.dpgmm.alpha == 2.5);
  REQUIRE(c.decision.level.has_value());
  CHECK(*c.decision.level == 0.3);
  CHECK(c.dbscan.eps == 1.1);
  CHECK(c.seed == 9);
}

TEST_CASE("unknown keys are rejected with their path") {
  try {
    parse_run_config(R"({"dpgmm": {"alpah": 1}})");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("$.dpgmm.alpah") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_run_config(R"({"colour": 1})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"intensity": {"sampling_rate": 3}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"dbscan": {"eps": -1}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("{not json"), ConfigError);
}

TEST_CASE("config survives a dump and parse") {
  RunConfig c;
  c.model_type = ModelType::Adaptive;
  c.sampling_rate = 2;
  c.dpgmm.alpha = 0.7;
  c.geofence.push_back({{{0, 0}, {10, 0}, {10, 10}}, FenceMode::Exclude});
  c.screenline = {{1, 2}, {3, 4}};
  const auto back = parse_run_config(dump_run_config(c));
  CHECK(back.training_hash() == c.training_hash());
  CHECK(dump_run_config(back) == dump_run_config(c));
  RunConfig d = c;
  d.dpgmm.alpha = 0.8;
  CHECK(d.training_hash() != c.training_hash());
}

namespace {

RunConfig small_config() {
  RunConfig c;
  c.sensor = SensorConfig::uniform(8, -25.0, 5.0, 2.0, 120.0);
  c.threads = 1;
  return c;
}

std::vector<Frame> small_frames(const RunConfig& c, std::uint64_t n, std::uint64_t first = 0) {
  auto scene = make_preset("urban-peak", 3);
  scene.sensor = c.sensor;
  scene.duration_frames = first + n;
  const SceneGenerator gen(scene);
  std::vector<Frame> frames(n);
  FrameTruth t;
  for (std::uint64_t i = 0; i < n; ++i) gen.generate(first + i, frames[i], t);
  return frames;
}

}  // namespace

TEST_CASE("models survive save and load") {
  for (auto type : {ModelType::DPGMM, ModelType::Adaptive}) {
    auto cfg = small_config();
    cfg.model_type = type;
    const auto train = small_frames(cfg, 30);
    auto model = train_model(replay(train), cfg);
    const auto bytes = model.to_bytes();
    const auto path = fs::temp_directory_path() / "lidarbg_tests" / "model.lbg";
    fs::create_directories(path.parent_path());
    model.save(path);
    auto loaded = BackgroundModel::load(path);
    CHECK(loaded.to_bytes() == bytes);
    CHECK(loaded.metadata == model.metadata);
    CHECK(model.metadata.frames == 30);

    // The adaptive model learns while it labels, so both copies run the same stream.
    Subtractor a(model, cfg), b(loaded, cfg);
    std::size_t compared = 0;
    for (const auto& f : small_frames(cfg, 10, 30)) {
      const auto ma = a.apply(f);
      const auto mb = b.apply(f);
      CHECK(ma.foreground == mb.foreground);
      compared += f.points.size();
    }
    CHECK(compared >= 10000);
  }
}

TEST_CASE("damaged model files are rejected") {
  auto cfg = small_config();
  auto model = train_model(replay(small_frames(cfg, 5)), cfg);
  auto bytes = model.to_bytes();
  auto truncated = bytes;
  truncated.resize(bytes.size() / 2);
  CHECK_THROWS_AS(BackgroundModel::from_bytes(truncated), FormatError);
  auto trailing = bytes;
  trailing.push_back(0);
  CHECK_THROWS_AS(BackgroundModel::from_bytes(trailing), FormatError);
  auto version = bytes;
  version[8] = 99;
  CHECK_THROWS_AS(BackgroundModel::from_bytes(version), VersionMismatch);
  auto magic = bytes;
  magic[0] = 'X';
  CHECK_THROWS_AS(BackgroundModel::from_bytes(magic), FormatError);
}

TEST_CASE("a model rejects a different sensor layout") {
  auto cfg = small_config();
  auto model = train_model(replay(small_frames(cfg, 3)), cfg);
  auto other = cfg;
  other.sensor = SensorConfig::uniform(8, -25.0, 5.0, 1.0, 120.0);
  CHECK_THROWS_AS(Subtractor(model, other), ConfigError);
}
