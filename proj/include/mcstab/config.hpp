#pragma once

// JSON run configuration. Unknown keys are rejected at every level.
//
// {
//   "model":      {"name": "ard", "params": {...}, "initial_guess": [...]},
//   "topology":   {"n": 4, "lengths": [50], "mu_um2_per_s": 83, "boundary": "periodic",
//                  "time_unit": "min", "flux_gain": 1},
//   "analysis":   {"omega_min": 1e-6, "omega_max": 1e6, "points_per_decade": 50},
//   "simulation": {"cells_per_segment": 32, "dt": 0, "t_final": 100, "perturbation": [...],
//                  "channel_init": "equilibrium", "window_fraction": 0.5,
//                  "samples": 2000, "profile_samples": 0},
//   "sweep":      {"param_name": "gamma_a", "lo": 2.5, "hi": 3.0, "bisection_tol": 1e-3}
// }

#include <algorithm>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "mcstab/channel.hpp"
#include "mcstab/errors.hpp"
#include "mcstab/reaction.hpp"
#include "mcstab/simulator.hpp"
#include "mcstab/stability.hpp"

namespace mcstab {

using json = nlohmann::json;

struct ModelConfig {
  std::string name;
  ParamMap params;
  std::optional<StateVector> initial_guess;
};

struct SweepConfig {
  std::string param_name;
  double lo = 0, hi = 0, bisection_tol = 1e-3;
};

struct RunConfig {
  ModelConfig model;
  ChannelTopology topology;
  ContourGrid analysis;
  SimConfig simulation;
  std::optional<SweepConfig> sweep;
  json source;  // the document as read, echoed into reports

  ReactionModel build_model() const { return make_model(model.name, model.params); }

  ReactionModel build_model_with(const std::string& param, double value) const {
    ParamMap p = model.params;
    p[param] = value;
    return make_model(model.name, p);
  }

  AnalysisOptions analysis_options() const { return {analysis, model.initial_guess, 100}; }
};

namespace detail {

inline void reject_unknown(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, _] : obj.items())
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
      throw ConfigError(where + "." + key + ": unknown key");
}

template <class T>
T get_as(const json& obj, const std::string& where, const char* key) {
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

template <class T>
T get_or(const json& obj, const std::string& where, const char* key, T fallback) {
  if (!obj.contains(key)) return fallback;
  return get_as<T>(obj, where, key);
}

inline double positive(double v, const std::string& what) {
  if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(what + ": must be positive");
  return v;
}

// 1-based line of a byte offset, for parse error messages.
inline std::size_t line_of(const std::string& text, std::size_t byte) {
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(
                                                                              std::min(byte, text.size())),
                                                 '\n'));
}

}  // namespace detail

inline RunConfig parse_config(const json& doc) {
  using namespace detail;
  reject_unknown(doc, "config", {"model", "topology", "analysis", "simulation", "sweep"});
  RunConfig cfg;
  cfg.source = doc;

  if (!doc.contains("model")) throw ConfigError("config.model: missing");
  const json& jm = doc.at("model");
  reject_unknown(jm, "model", {"name", "params", "initial_guess"});
  cfg.model.name = get_as<std::string>(jm, "model", "name");
  if (jm.contains("params") && jm.at("params").is_object())
    for (const auto& [key, value] : jm.at("params").items())
      if (value.is_null()) throw ConfigError("model.params." + key + ": null; placeholder value not filled in");
  cfg.model.params = get_or<ParamMap>(jm, "model", "params", {});
  if (jm.contains("initial_guess")) cfg.model.initial_guess = get_as<StateVector>(jm, "model", "initial_guess");
  const ReactionModel model = cfg.build_model();
  if (cfg.model.initial_guess && cfg.model.initial_guess->size() != model.m)
    throw ConfigError("model.initial_guess: expected " + std::to_string(model.m) + " entries");

  if (!doc.contains("topology")) throw ConfigError("config.topology: missing");
  const json& jt = doc.at("topology");
  reject_unknown(jt, "topology", {"n", "lengths", "mu_um2_per_s", "boundary", "time_unit", "flux_gain"});
  auto& topo = cfg.topology;
  topo.n = get_as<std::size_t>(jt, "topology", "n");
  if (topo.n < 1) throw ConfigError("topology.n: must be >= 1");
  const auto boundary = get_or<std::string>(jt, "topology", "boundary", "periodic");
  if (boundary == "periodic") topo.boundary = Boundary::Periodic;
  else if (boundary == "dirichlet_zero_ends") topo.boundary = Boundary::DirichletZeroEnds;
  else throw ConfigError("topology.boundary: expected 'periodic' or 'dirichlet_zero_ends'");
  const auto unit = get_or<std::string>(jt, "topology", "time_unit", "min");
  if (unit == "min") topo.time_unit = TimeUnit::Minutes;
  else if (unit == "s") topo.time_unit = TimeUnit::Seconds;
  else throw ConfigError("topology.time_unit: expected 'min' or 's'");
  topo.lengths = get_as<std::vector<double>>(jt, "topology", "lengths");
  if (topo.lengths.size() == 1 && topo.segment_count() > 1) topo.lengths.assign(topo.segment_count(), topo.lengths[0]);
  topo.mu_um2_per_s = positive(get_as<double>(jt, "topology", "mu_um2_per_s"), "topology.mu_um2_per_s");
  topo.flux_gain = positive(get_or<double>(jt, "topology", "flux_gain", 1.0), "topology.flux_gain");
  topo.validate();

  if (doc.contains("analysis")) {
    const json& ja = doc.at("analysis");
    reject_unknown(ja, "analysis", {"omega_min", "omega_max", "points_per_decade"});
    auto& g = cfg.analysis;
    g.omega_min = positive(get_or<double>(ja, "analysis", "omega_min", g.omega_min), "analysis.omega_min");
    g.omega_max = positive(get_or<double>(ja, "analysis", "omega_max", g.omega_max), "analysis.omega_max");
    g.points_per_decade = get_or<std::size_t>(ja, "analysis", "points_per_decade", g.points_per_decade);
    g.validate();
  }

  if (doc.contains("simulation")) {
    const json& js = doc.at("simulation");
    reject_unknown(js, "simulation",
                   {"cells_per_segment", "dt", "t_final", "perturbation", "channel_init", "window_fraction",
                    "samples", "profile_samples"});
    auto& s = cfg.simulation;
    s.cells_per_segment = get_or<std::size_t>(js, "simulation", "cells_per_segment", s.cells_per_segment);
    s.dt = get_or<double>(js, "simulation", "dt", s.dt);
    s.t_final = positive(get_or<double>(js, "simulation", "t_final", s.t_final), "simulation.t_final");
    if (js.contains("perturbation")) {
      const json& jp = js.at("perturbation");
      if (jp.is_array() && !jp.empty() && jp.front().is_array())
        s.perturbation = get_as<std::vector<std::vector<double>>>(js, "simulation", "perturbation");
      else
        s.perturbation = {get_as<std::vector<double>>(js, "simulation", "perturbation")};
    }
    const auto init = get_or<std::string>(js, "simulation", "channel_init", "equilibrium");
    if (init == "equilibrium") s.channel_init = ChannelInit::Equilibrium;
    else if (init == "zero") s.channel_init = ChannelInit::Zero;
    else throw ConfigError("simulation.channel_init: expected 'equilibrium' or 'zero'");
    s.window_fraction = get_or<double>(js, "simulation", "window_fraction", s.window_fraction);
    s.samples = get_or<std::size_t>(js, "simulation", "samples", s.samples);
    s.profile_samples = get_or<std::size_t>(js, "simulation", "profile_samples", s.profile_samples);
    s.validate(topo, model.m);
  }

  if (doc.contains("sweep")) {
    const json& jw = doc.at("sweep");
    reject_unknown(jw, "sweep", {"param_name", "lo", "hi", "bisection_tol"});
    SweepConfig sw;
    sw.param_name = get_as<std::string>(jw, "sweep", "param_name");
    sw.lo = get_as<double>(jw, "sweep", "lo");
    sw.hi = get_as<double>(jw, "sweep", "hi");
    sw.bisection_tol = positive(get_or<double>(jw, "sweep", "bisection_tol", sw.bisection_tol), "sweep.bisection_tol");
    if (!cfg.model.params.count(sw.param_name))
      throw ConfigError("sweep.param_name: '" + sw.param_name + "' is not a model parameter");
    if (!(sw.hi > sw.lo)) throw ConfigError("sweep: need lo < hi");
    for (double v : {sw.lo, sw.hi}) {
      try {
        (void)cfg.build_model_with(sw.param_name, v);
      } catch (const ConfigError& e) {
        throw ConfigError(std::string("sweep: ") + sw.param_name + " = " + std::to_string(v) + " rejected: " + e.what());
      }
    }
    cfg.sweep = sw;
  }
  return cfg;
}

inline RunConfig parse_config_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("config: parse error at line " + std::to_string(detail::line_of(text, e.byte)) + ": " +
                      e.what());
  }
  return parse_config(doc);
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

}  // namespace mcstab
