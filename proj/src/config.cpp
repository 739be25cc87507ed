#include "lidarbg/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "lidarbg/error.hpp"
#include "lidarbg/synth.hpp"

namespace lidarbg {

using json = nlohmann::ordered_json;

std::string_view to_string(ModelType t) { return t == ModelType::Adaptive ? "adaptive" : "dpgmm"; }

ModelType parse_model_type(std::string_view name) {
  if (name == "dpgmm") return ModelType::DPGMM;
  if (name == "adaptive") return ModelType::Adaptive;
  throw ConfigError("unknown model type '" + std::string(name) + "'");
}

std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

RunConfig::RunConfig() : sensor(preset_sensor()) {}

void RunConfig::validate() const {
  sensor.validate();
  if (!(max_intensity > 0.0)) throw ConfigError("max_intensity must be > 0");
  if (intensity.components < 1 || intensity.max_iterations < 1 || intensity.restarts < 1 ||
      !(intensity.variance_floor > 0.0) || !(intensity.tolerance >= 0.0)) {
    throw ConfigError("intensity fit options out of range");
  }
  try {
    check_sampling_rate(sampling_rate);
  } catch (const InvalidSamplingRate& e) {
    throw ConfigError(e.what());
  }
  try {
    dpgmm.validate();
    decision.validate();
    adaptive.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  if (gibbs_sweeps < 0) throw ConfigError("gibbs_sweeps must be >= 0");
  if (!(mean_max_tolerance_m >= 0.0)) throw ConfigError("mean_max tolerance must be >= 0");
  for (const auto& g : geofence) {
    try {
      g.validate();
    } catch (const Error& e) {
      throw ConfigError(std::string("geofence: ") + e.what());
    }
  }
  if (lof.k < 1 || !(lof.threshold > 0.0)) throw ConfigError("lof k must be >= 1 and threshold > 0");
  if (!(dbscan.eps > 0.0) || dbscan.min_pts < 1 || dbscan.range_scale_reference_m < 0.0) {
    throw ConfigError("dbscan eps must be > 0 and min_pts >= 1");
  }
  if (!(tracker.gate_m > 0.0) || tracker.confirm_hits < 1 || tracker.delete_misses < 1 || tracker.miss_window < 1 ||
      tracker.miss_window > 8 || tracker.delete_misses > tracker.miss_window) {
    throw ConfigError("tracker options out of range (miss window is at most 8 frames)");
  }
  if (!(match_radius_m > 0.0) || count_debounce_s < 0.0) throw ConfigError("eval options out of range");
  if (threads < 0) throw ConfigError("threads must be >= 0");
}

namespace {

class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + " must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    used_.insert(key);
    try {
      out = it->template get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(path_ + "." + key + ": " + e.what());
    }
  }

  const json* sub(const char* key) {
    const auto it = j_.find(key);
    if (it == j_.end()) return nullptr;
    used_.insert(key);
    return &*it;
  }

  std::string child(const char* key) const { return path_ + "." + key; }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!used_.contains(k)) throw ConfigError("unknown config key '" + path_ + "." + k + "'");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

Vec2 parse_vec2(const json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
    throw ConfigError(path + " must be a [x, y] pair");
  }
  return {j[0].get<double>(), j[1].get<double>()};
}

json vec2_json(const Vec2& v) { return json::array({v.x(), v.y()}); }

}  // namespace

RunConfig parse_run_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig c;
  Section top(root, "$");

  if (const json* j = top.sub("sensor")) {
    Section s(*j, top.child("sensor"));
    s.get("beams", c.sensor.beams);
    s.get("elevation_deg", c.sensor.elevation_deg);
    s.get("rotation_hz", c.sensor.rotation_hz);
    s.get("azimuth_resolution_deg", c.sensor.azimuth_resolution_deg);
    s.get("azimuth_bins", c.sensor.azimuth_bins);
    s.get("max_range_m", c.sensor.max_range_m);
    s.get("max_intensity", c.max_intensity);
    std::string policy = std::string(to_string(c.collision_policy));
    s.get("collision_policy", policy);
    c.collision_policy = parse_collision_policy(policy);
    s.finish();
  }

  std::string model_type = std::string(to_string(c.model_type));
  top.get("model_type", model_type);
  c.model_type = parse_model_type(model_type);
  top.get("seed", c.seed);
  top.get("threads", c.threads);

  if (const json* j = top.sub("intensity")) {
    Section s(*j, top.child("intensity"));
    s.get("components", c.intensity.components);
    s.get("max_iterations", c.intensity.max_iterations);
    s.get("tolerance", c.intensity.tolerance);
    s.get("variance_floor", c.intensity.variance_floor);
    s.get("restarts", c.intensity.restarts);
    s.get("seed", c.intensity.seed);
    s.get("sampling_rate", c.sampling_rate);
    s.finish();
  }

  if (const json* j = top.sub("dpgmm")) {
    Section s(*j, top.child("dpgmm"));
    s.get("alpha", c.dpgmm.alpha);
    s.get("kappa0", c.dpgmm.prior.kappa0);
    s.get("nu0", c.dpgmm.prior.nu0);
    double psi_scale = c.dpgmm.prior.psi0(0, 0);
    s.get("psi0_scale", psi_scale);
    c.dpgmm.prior.psi0 = psi_scale * Mat3::Identity();
    s.get("table_cap", c.dpgmm.table_cap);
    s.get("prior_mean_weight", c.dpgmm.prior_mean_weight);
    s.get("p_b", c.decision.p_b);
    if (const json* lv = s.sub("decision_level"); lv && !lv->is_null()) {
      if (!lv->is_number()) throw ConfigError(s.child("decision_level") + " must be a number or null");
      c.decision.level = lv->get<double>();
    }
    s.get("bayes_normalized", c.decision.bayes_normalized);
    s.get("no_return_level", c.decision.no_return_level);
    s.get("gibbs_sweeps", c.gibbs_sweeps);
    s.finish();
  }

  if (const json* j = top.sub("adaptive")) {
    Section s(*j, top.child("adaptive"));
    s.get("components", c.adaptive.components);
    s.get("learning_rate", c.adaptive.learning_rate);
    s.get("match_sigma", c.adaptive.match_sigma);
    s.get("background_portion", c.adaptive.background_portion);
    s.get("initial_variance", c.adaptive.initial_variance);
    s.get("variance_floor", c.adaptive.variance_floor);
    s.get("bootstrap_frames", c.adaptive.bootstrap_frames);
    s.get("use_weights", c.adaptive.use_weights);
    s.get("no_return_level", c.adaptive.no_return_level);
    s.finish();
  }

  if (const json* j = top.sub("mean_max")) {
    Section s(*j, top.child("mean_max"));
    s.get("tolerance_m", c.mean_max_tolerance_m);
    s.finish();
  }

  if (const json* j = top.sub("geofence")) {
    if (!j->is_array()) throw ConfigError("$.geofence must be an array");
    for (std::size_t i = 0; i < j->size(); ++i) {
      const std::string path = "$.geofence[" + std::to_string(i) + "]";
      Section s((*j)[i], path);
      GeofencePolygon poly;
      std::string mode = "include";
      s.get("mode", mode);
      if (mode == "include") {
        poly.mode = FenceMode::Include;
      } else if (mode == "exclude") {
        poly.mode = FenceMode::Exclude;
      } else {
        throw ConfigError(path + ".mode must be 'include' or 'exclude'");
      }
      if (const json* v = s.sub("vertices")) {
        if (!v->is_array()) throw ConfigError(path + ".vertices must be an array");
        for (const auto& p : *v) poly.vertices.push_back(parse_vec2(p, path + ".vertices"));
      }
      s.finish();
      c.geofence.push_back(std::move(poly));
    }
  }

  if (const json* j = top.sub("lof")) {
    Section s(*j, top.child("lof"));
    s.get("enabled", c.lof_enabled);
    s.get("k", c.lof.k);
    s.get("threshold", c.lof.threshold);
    s.finish();
  }

  if (const json* j = top.sub("dbscan")) {
    Section s(*j, top.child("dbscan"));
    s.get("eps", c.dbscan.eps);
    s.get("min_pts", c.dbscan.min_pts);
    s.get("range_scale_reference_m", c.dbscan.range_scale_reference_m);
    s.finish();
  }

  if (const json* j = top.sub("classes")) {
    Section s(*j, top.child("classes"));
    auto& r = c.classes;
    s.get("pedestrian_max_length", r.pedestrian_max_length);
    s.get("pedestrian_min_height", r.pedestrian_min_height);
    s.get("pedestrian_max_height", r.pedestrian_max_height);
    s.get("pedestrian_max_speed", r.pedestrian_max_speed);
    s.get("car_min_length", r.car_min_length);
    s.get("car_max_length", r.car_max_length);
    s.get("car_max_height", r.car_max_height);
    s.get("truck_max_length", r.truck_max_length);
    s.get("truck_max_height", r.truck_max_height);
    s.finish();
  }

  if (const json* j = top.sub("tracker")) {
    Section s(*j, top.child("tracker"));
    s.get("gate_m", c.tracker.gate_m);
    s.get("confirm_hits", c.tracker.confirm_hits);
    s.get("delete_misses", c.tracker.delete_misses);
    s.get("miss_window", c.tracker.miss_window);
    s.get("count_spawn_hit", c.tracker.count_spawn_hit);
    s.get("position_gain", c.tracker.position_gain);
    s.get("velocity_gain", c.tracker.velocity_gain);
    s.finish();
  }

  if (const json* j = top.sub("eval")) {
    Section s(*j, top.child("eval"));
    s.get("match_radius_m", c.match_radius_m);
    s.get("count_debounce_s", c.count_debounce_s);
    if (const json* line = s.sub("screenline")) {
      Section l(*line, s.child("screenline"));
      if (const json* a = l.sub("a")) c.screenline.a = parse_vec2(*a, l.child("a"));
      if (const json* b = l.sub("b")) c.screenline.b = parse_vec2(*b, l.child("b"));
      l.finish();
    }
    s.finish();
  }

  top.finish();
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

std::string dump_run_config(const RunConfig& c) {
  json root;
  root["model_type"] = std::string(to_string(c.model_type));
  root["seed"] = c.seed;
  root["threads"] = c.threads;
  root["sensor"] = {{"beams", c.sensor.beams},
                    {"elevation_deg", c.sensor.elevation_deg},
                    {"rotation_hz", c.sensor.rotation_hz},
                    {"azimuth_resolution_deg", c.sensor.azimuth_resolution_deg},
                    {"azimuth_bins", c.sensor.azimuth_bins},
                    {"max_range_m", c.sensor.max_range_m},
                    {"max_intensity", c.max_intensity},
                    {"collision_policy", std::string(to_string(c.collision_policy))}};
  root["intensity"] = {{"components", c.intensity.components},
                       {"max_iterations", c.intensity.max_iterations},
                       {"tolerance", c.intensity.tolerance},
                       {"variance_floor", c.intensity.variance_floor},
                       {"restarts", c.intensity.restarts},
                       {"seed", c.intensity.seed},
                       {"sampling_rate", c.sampling_rate}};
  root["dpgmm"] = {{"alpha", c.dpgmm.alpha},
                   {"kappa0", c.dpgmm.prior.kappa0},
                   {"nu0", c.dpgmm.prior.nu0},
                   {"psi0_scale", c.dpgmm.prior.psi0(0, 0)},
                   {"table_cap", c.dpgmm.table_cap},
                   {"prior_mean_weight", c.dpgmm.prior_mean_weight},
                   {"p_b", c.decision.p_b},
                   {"decision_level", c.decision.level ? json(*c.decision.level) : json(nullptr)},
                   {"bayes_normalized", c.decision.bayes_normalized},
                   {"no_return_level", c.decision.no_return_level},
                   {"gibbs_sweeps", c.gibbs_sweeps}};
  root["adaptive"] = {{"components", c.adaptive.components},
                      {"learning_rate", c.adaptive.learning_rate},
                      {"match_sigma", c.adaptive.match_sigma},
                      {"background_portion", c.adaptive.background_portion},
                      {"initial_variance", c.adaptive.initial_variance},
                      {"variance_floor", c.adaptive.variance_floor},
                      {"bootstrap_frames", c.adaptive.bootstrap_frames},
                      {"use_weights", c.adaptive.use_weights},
                      {"no_return_level", c.adaptive.no_return_level}};
  root["mean_max"] = {{"tolerance_m", c.mean_max_tolerance_m}};
  json fences = json::array();
  for (const auto& g : c.geofence) {
    json verts = json::array();
    for (const auto& v : g.vertices) verts.push_back(vec2_json(v));
    fences.push_back({{"mode", g.mode == FenceMode::Include ? "include" : "exclude"}, {"vertices", verts}});
  }
  root["geofence"] = fences;
  root["lof"] = {{"enabled", c.lof_enabled}, {"k", c.lof.k}, {"threshold", c.lof.threshold}};
  root["dbscan"] = {{"eps", c.dbscan.eps},
                    {"min_pts", c.dbscan.min_pts},
                    {"range_scale_reference_m", c.dbscan.range_scale_reference_m}};
  const auto& r = c.classes;
  root["classes"] = {{"pedestrian_max_length", r.pedestrian_max_length},
                     {"pedestrian_min_height", r.pedestrian_min_height},
                     {"pedestrian_max_height", r.pedestrian_max_height},
                     {"pedestrian_max_speed", r.pedestrian_max_speed},
                     {"car_min_length", r.car_min_length},
                     {"car_max_length", r.car_max_length},
                     {"car_max_height", r.car_max_height},
                     {"truck_max_length", r.truck_max_length},
                     {"truck_max_height", r.truck_max_height}};
  root["tracker"] = {{"gate_m", c.tracker.gate_m},
                     {"confirm_hits", c.tracker.confirm_hits},
                     {"delete_misses", c.tracker.delete_misses},
                     {"miss_window", c.tracker.miss_window},
                     {"count_spawn_hit", c.tracker.count_spawn_hit},
                     {"position_gain", c.tracker.position_gain},
                     {"velocity_gain", c.tracker.velocity_gain}};
  root["eval"] = {{"match_radius_m", c.match_radius_m},
                  {"count_debounce_s", c.count_debounce_s},
                  {"screenline", {{"a", vec2_json(c.screenline.a)}, {"b", vec2_json(c.screenline.b)}}}};
  return root.dump(2) + "\n";
}

std::uint64_t RunConfig::training_hash() const {
  json j = json::parse(dump_run_config(*this));
  json t;
  t["sensor"] = j["sensor"];
  t["model_type"] = j["model_type"];
  t["intensity"] = j["intensity"];
  t["dpgmm"] = j["dpgmm"];
  t["adaptive"] = j["adaptive"];
  const std::string s = t.dump();
  return fnv1a(s.data(), s.size());
}

}  // namespace lidarbg
