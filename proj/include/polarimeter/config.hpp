#pragma once

// Versioned JSON configuration covering the noise model, timing profile,
// reconstruction options, engine and Monte Carlo settings.

#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "polarimeter/engine.hpp"
#include "polarimeter/error.hpp"
#include "polarimeter/simulation.hpp"

namespace polarimeter {

inline constexpr int kConfigVersion = 1;

using nlohmann::json;

namespace detail {

// Infinite CAR is written as the string "inf" (JSON has no infinity).
inline json real_or_inf(double v) { return std::isinf(v) ? json("inf") : json(v); }

inline double read_real(const json& j, const std::string& key) {
  if (j.is_string() && j.get<std::string>() == "inf") return std::numeric_limits<double>::infinity();
  if (!j.is_number()) throw ParseError("config key '" + key + "' must be a number");
  return j.get<double>();
}

/// Rejects keys this version does not know, so typos do not pass silently.
inline void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ParseError("config section '" + where + "' must be an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items())
    if (!ok.count(key)) throw ParseError("unknown config key '" + where + (where.empty() ? "" : ".") + key + "'");
}

template <class T>
void read_into(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  const std::string name = where + "." + key;
  try {
    if constexpr (std::is_same_v<T, double>)
      out = read_real(j.at(key), name);
    else
      out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ParseError("config key '" + name + "' has the wrong type");
  }
}

}  // namespace detail

// ---- NoiseModel -------------------------------------------------------------

inline json to_json(const NoiseModel& n) {
  return {{"pair_rate", n.pair_rate},   {"car", detail::real_or_inf(n.car)},
          {"dark_rate", n.dark_rate},   {"gate_rate", n.gate_rate},
          {"eta", n.eta},               {"systematic_angle_deg", n.systematic_angle_deg}};
}

inline NoiseModel noise_from_json(const json& j, NoiseModel n = {}) {
  detail::check_keys(j, "noise", {"pair_rate", "car", "dark_rate", "gate_rate", "eta", "systematic_angle_deg"});
  detail::read_into(j, "pair_rate", n.pair_rate, "noise");
  detail::read_into(j, "car", n.car, "noise");
  detail::read_into(j, "dark_rate", n.dark_rate, "noise");
  detail::read_into(j, "gate_rate", n.gate_rate, "noise");
  detail::read_into(j, "eta", n.eta, "noise");
  detail::read_into(j, "systematic_angle_deg", n.systematic_angle_deg, "noise");
  n.validate();
  return n;
}

// ---- TimingProfile ----------------------------------------------------------

inline TimingProfile timing_from_json(const json& j, TimingProfile p = TimingProfile::polarimeter()) {
  detail::check_keys(j, "timing", {"preset", "name", "m", "tau_m", "tau_s", "tau_a", "pair_rate", "eta"});
  if (j.contains("preset")) p = TimingProfile::preset(j.at("preset").get<std::string>());
  detail::read_into(j, "name", p.name, "timing");
  detail::read_into(j, "m", p.m, "timing");
  detail::read_into(j, "tau_m", p.tau_m, "timing");
  detail::read_into(j, "tau_s", p.tau_s, "timing");
  detail::read_into(j, "tau_a", p.tau_a, "timing");
  detail::read_into(j, "pair_rate", p.pair_rate, "timing");
  detail::read_into(j, "eta", p.eta, "timing");
  p.validate();
  return p;
}

// ---- ReconstructionOptions --------------------------------------------------

inline json to_json(const ReconstructionOptions& o) {
  return {{"subtract_accidentals", o.subtract_accidentals},
          {"normalize_per_setting", o.normalize_per_setting},
          {"rank_tolerance", o.rank_tolerance},
          {"ml",
           {{"gradient_tolerance", o.ml.gradient_tolerance},
            {"max_iterations", o.ml.max_iterations},
            {"start_mixing", o.ml.start_mixing}}}};
}

inline ReconstructionOptions reconstruction_from_json(const json& j, ReconstructionOptions o = {}) {
  detail::check_keys(j, "reconstruction", {"subtract_accidentals", "normalize_per_setting", "rank_tolerance", "ml"});
  detail::read_into(j, "subtract_accidentals", o.subtract_accidentals, "reconstruction");
  detail::read_into(j, "normalize_per_setting", o.normalize_per_setting, "reconstruction");
  detail::read_into(j, "rank_tolerance", o.rank_tolerance, "reconstruction");
  if (j.contains("ml")) {
    const json& ml = j.at("ml");
    detail::check_keys(ml, "reconstruction.ml", {"gradient_tolerance", "max_iterations", "start_mixing"});
    detail::read_into(ml, "gradient_tolerance", o.ml.gradient_tolerance, "reconstruction.ml");
    detail::read_into(ml, "max_iterations", o.ml.max_iterations, "reconstruction.ml");
    detail::read_into(ml, "start_mixing", o.ml.start_mixing, "reconstruction.ml");
  }
  if (!(o.rank_tolerance > 0.0)) throw InvalidArgument("rank_tolerance must be > 0");
  if (!(o.ml.gradient_tolerance > 0.0)) throw InvalidArgument("ml.gradient_tolerance must be > 0");
  if (o.ml.max_iterations < 1) throw InvalidArgument("ml.max_iterations must be >= 1");
  if (!(o.ml.start_mixing > 0.0 && o.ml.start_mixing <= 1.0)) throw InvalidArgument("ml.start_mixing must lie in (0, 1]");
  return o;
}

// ---- SourceState / EngineConfig ---------------------------------------------

inline json to_json(const SourceState& s) {
  return {{"theta", s.theta}, {"car", detail::real_or_inf(s.car)}, {"rate", s.pair_rate},
          {"depolarization", s.depolarization}};
}

inline SourceState source_from_json(const json& j, SourceState s = {}) {
  detail::check_keys(j, "source", {"theta", "car", "rate", "depolarization"});
  detail::read_into(j, "theta", s.theta, "source");
  detail::read_into(j, "car", s.car, "source");
  detail::read_into(j, "rate", s.pair_rate, "source");
  detail::read_into(j, "depolarization", s.depolarization, "source");
  return s;
}

inline json to_json(const EngineConfig& c) {
  return {{"timing", to_json(c.timing)},
          {"window_m", c.window_m},
          {"pacing", to_string(c.pacing)},
          {"seed", c.seed},
          {"randomized_order", c.randomized_order},
          {"noise", to_json(c.noise)},
          {"reconstruction", to_json(c.reconstruction)},
          {"target", c.target}};
}

inline EngineConfig engine_from_json(const json& j, EngineConfig c = {}) {
  detail::check_keys(j, "engine", {"timing", "window_m", "pacing", "seed", "randomized_order", "noise",
                                   "reconstruction", "target"});
  if (j.contains("timing")) c.timing = timing_from_json(j.at("timing"), c.timing);
  detail::read_into(j, "window_m", c.window_m, "engine");
  if (j.contains("pacing")) c.pacing = parse_pacing(j.at("pacing").get<std::string>());
  detail::read_into(j, "seed", c.seed, "engine");
  detail::read_into(j, "randomized_order", c.randomized_order, "engine");
  if (j.contains("noise")) c.noise = noise_from_json(j.at("noise"), c.noise);
  if (j.contains("reconstruction")) c.reconstruction = reconstruction_from_json(j.at("reconstruction"), c.reconstruction);
  detail::read_into(j, "target", c.target, "engine");
  c.validate();
  return c;
}

// ---- whole document ---------------------------------------------------------

struct MonteCarloConfig {
  int trials = 500;
  Method estimator = Method::lls;
  int settings_m = 9;
  std::vector<double> n_values;
  std::vector<double> t_values;
  std::vector<std::string> profiles{"freespace", "polarimeter"};
  std::string state = "phi+";
};

struct ServeConfig {
  std::string address = "127.0.0.1";
  unsigned short port = 8765;
  std::size_t mailbox = 64;  ///< frames buffered per client before dropping
};

struct AppConfig {
  std::uint64_t seed = 1;
  NoiseModel noise;  ///< used by simulate-counts and montecarlo
  TimingProfile timing = TimingProfile::polarimeter();
  ReconstructionOptions reconstruction;
  EngineConfig engine;
  SourceState source;
  MonteCarloConfig montecarlo;
  ServeConfig serve;
};

inline json to_json(const AppConfig& c) {
  json mc{{"trials", c.montecarlo.trials},
          {"estimator", to_string(c.montecarlo.estimator)},
          {"settings_m", c.montecarlo.settings_m},
          {"n_values", c.montecarlo.n_values},
          {"t_values", c.montecarlo.t_values},
          {"profiles", c.montecarlo.profiles},
          {"state", c.montecarlo.state}};
  json eng = to_json(c.engine);
  eng.erase("seed");  // top-level seed drives everything
  return {{"version", kConfigVersion},
          {"seed", c.seed},
          {"noise", to_json(c.noise)},
          {"timing", to_json(c.timing)},
          {"reconstruction", to_json(c.reconstruction)},
          {"engine", eng},
          {"source", to_json(c.source)},
          {"montecarlo", mc},
          {"serve", {{"address", c.serve.address}, {"port", c.serve.port}, {"mailbox", c.serve.mailbox}}}};
}

inline AppConfig config_from_json(const json& j) {
  detail::check_keys(j, "", {"version", "seed", "noise", "timing", "reconstruction", "engine", "source", "montecarlo",
                             "serve"});
  if (!j.contains("version")) throw ParseError("config has no 'version'");
  if (j.at("version") != kConfigVersion)
    throw ParseError("unsupported config version " + j.at("version").dump() + " (expected " +
                     std::to_string(kConfigVersion) + ")");
  AppConfig c;
  detail::read_into(j, "seed", c.seed, "");
  if (j.contains("noise")) c.noise = noise_from_json(j.at("noise"));
  if (j.contains("timing")) c.timing = timing_from_json(j.at("timing"));
  if (j.contains("reconstruction")) c.reconstruction = reconstruction_from_json(j.at("reconstruction"));
  if (j.contains("engine")) {
    json eng = j.at("engine");
    if (eng.contains("seed")) throw ParseError("set the seed at the top level, not in 'engine'");
    c.engine = engine_from_json(eng);
  }
  c.engine.seed = c.seed;
  if (j.contains("source")) c.source = source_from_json(j.at("source"));
  if (j.contains("montecarlo")) {
    const json& mc = j.at("montecarlo");
    detail::check_keys(mc, "montecarlo",
                       {"trials", "estimator", "settings_m", "n_values", "t_values", "profiles", "state"});
    detail::read_into(mc, "trials", c.montecarlo.trials, "montecarlo");
    if (mc.contains("estimator")) c.montecarlo.estimator = parse_method(mc.at("estimator").get<std::string>());
    detail::read_into(mc, "settings_m", c.montecarlo.settings_m, "montecarlo");
    detail::read_into(mc, "n_values", c.montecarlo.n_values, "montecarlo");
    detail::read_into(mc, "t_values", c.montecarlo.t_values, "montecarlo");
    detail::read_into(mc, "profiles", c.montecarlo.profiles, "montecarlo");
    detail::read_into(mc, "state", c.montecarlo.state, "montecarlo");
    if (!is_target(c.montecarlo.state) || c.montecarlo.state == "source")
      throw ParseError("montecarlo.state must name a fixed target state");
  }
  if (j.contains("serve")) {
    const json& s = j.at("serve");
    detail::check_keys(s, "serve", {"address", "port", "mailbox"});
    detail::read_into(s, "address", c.serve.address, "serve");
    detail::read_into(s, "port", c.serve.port, "serve");
    detail::read_into(s, "mailbox", c.serve.mailbox, "serve");
  }
  return c;
}

inline AppConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config file '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError("config file '" + path + "': " + e.what());
  }
  return config_from_json(j);
}

}  // namespace polarimeter
