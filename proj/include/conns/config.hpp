#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "conns/errors.hpp"
#include "conns/evaluation.hpp"
#include "conns/integrator.hpp"
#include "conns/network.hpp"
#include "conns/ode.hpp"
#include "conns/projection.hpp"

namespace conns {

/// Everything a pipeline run needs, parsed from one JSON file. Validation
/// errors name the offending field path.
struct RunConfig {
  // system block
  std::string system_name;
  nlohmann::json system_params = nlohmann::json::object();
  std::string params_path;  // resolved absolute path, empty if inline/absent
  StateVector sampler_base;
  Vec sampler_scale;
  std::uint64_t sampler_seed = 1;

  // integration block
  double dt = 0.01;
  double t_end = 3.0;
  NewtonConfig newton;

  // data block
  int n_train = 40;
  int n_test = 50;
  int n_sim = 0;  // trajectories written by the simulate command; 0 = n_test

  // train block
  Arch arch;
  double lr = 1e-4;
  int epochs = 1000;
  struct LrStage {
    double lr = 1e-4;
    int epochs = 1;
  };
  std::vector<LrStage> stages;  // empty: single stage from lr/epochs
  AdamParams adam;
  ProjectionMode projection_mode = ProjectionMode::spectral;
  double proj_epsilon = 1e-3;
  std::uint64_t train_seed = 0;
  std::optional<double> loss_target;
  bool standardize = false;

  // eval block
  double fp_tol = 1e-9;
  int fp_max_iter = 500;
  std::optional<double> fp_tol_fallback;  // softened tolerance retry
  int overlay_trajectories = 1;
  int vf_axis_i = 0;
  int vf_axis_j = 1;
  GridSpec vf_grid;
  StateVector vf_anchor;  // empty = sampler base

  int simulate_count() const { return n_sim > 0 ? n_sim : n_test; }

  std::vector<LrStage> effective_stages() const {
    if (!stages.empty()) return stages;
    return {LrStage{lr, epochs}};
  }

  DynamicalSystem make_sys() const { return make_system(system_name, system_params); }

  InitialConditionSampler make_sampler() const {
    return InitialConditionSampler(sampler_base, sampler_scale, sampler_seed);
  }

  NewtonConfig newton_config() const { return newton; }

  TrainingConfig training_config(ProjectionMode mode) const {
    TrainingConfig cfg;
    cfg.lr = lr;
    cfg.epochs = epochs;
    cfg.adam = adam;
    cfg.projection_mode = mode;
    cfg.epsilon = proj_epsilon;
    cfg.seed = train_seed;
    cfg.loss_target = loss_target;
    cfg.standardize = standardize;
    return cfg;
  }
};

namespace detail {

template <class T>
T require(const nlohmann::json& j, const std::string& path, const std::string& key) {
  if (!j.contains(key)) throw ConfigError("config: missing field " + path + "." + key);
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("config: field " + path + "." + key + " has the wrong type");
  }
}

template <class T>
T optional_field(const nlohmann::json& j, const std::string& path, const std::string& key,
                 T fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("config: field " + path + "." + key + " has the wrong type");
  }
}

}  // namespace detail

inline RunConfig parse_config(const nlohmann::json& doc, const std::string& base_dir) {
  RunConfig c;
  if (!doc.contains("system")) throw ConfigError("config: missing field system");
  const auto& sys = doc.at("system");
  c.system_name = detail::require<std::string>(sys, "system", "name");
  if (sys.contains("params_path") && !sys.at("params_path").is_null()) {
    std::filesystem::path p = sys.at("params_path").get<std::string>();
    if (p.is_relative()) p = std::filesystem::path(base_dir) / p;
    if (!std::filesystem::exists(p))
      throw ConfigError("config: system.params_path does not resolve: " + p.string());
    c.params_path = p.string();
    nlohmann::json pdoc;
    try {
      pdoc = nlohmann::json::parse(read_text_file(c.params_path));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("config: system.params_path is not valid JSON: " + std::string(e.what()));
    }
    c.system_params = pdoc.contains("params") ? pdoc.at("params") : pdoc;
  } else if (sys.contains("params")) {
    c.system_params = sys.at("params");
  }
  const auto& sampler = sys.contains("sampler") ? sys.at("sampler") : nlohmann::json::object();
  c.sampler_base = detail::optional_field<StateVector>(sampler, "system.sampler", "base", {});
  c.sampler_scale = detail::optional_field<Vec>(sampler, "system.sampler", "scale", {});
  c.sampler_seed = detail::optional_field<std::uint64_t>(sampler, "system.sampler", "seed", 1);

  const auto& integ = doc.contains("integration") ? doc.at("integration") : nlohmann::json::object();
  c.dt = detail::optional_field<double>(integ, "integration", "dt", 0.01);
  c.t_end = detail::optional_field<double>(integ, "integration", "t_end", 3.0);
  c.newton.tol = detail::optional_field<double>(integ, "integration", "tol", 1e-9);
  c.newton.max_iter = detail::optional_field<int>(integ, "integration", "max_iter", 50);

  const auto& data = doc.contains("data") ? doc.at("data") : nlohmann::json::object();
  c.n_train = detail::optional_field<int>(data, "data", "n_train", 40);
  c.n_test = detail::optional_field<int>(data, "data", "n_test", 50);
  c.n_sim = detail::optional_field<int>(data, "data", "n_sim", 0);

  const auto& train = doc.contains("train") ? doc.at("train") : nlohmann::json::object();
  const auto& arch = train.contains("arch") ? train.at("arch") : nlohmann::json::object();
  c.arch.m = detail::optional_field<int>(arch, "train.arch", "width", 40);
  c.arch.hidden_layers = detail::optional_field<int>(arch, "train.arch", "hidden_layers", 3);
  c.arch.final_linear = detail::optional_field<bool>(arch, "train.arch", "final_linear", true);
  c.lr = detail::optional_field<double>(train, "train", "lr", 1e-4);
  c.epochs = detail::optional_field<int>(train, "train", "epochs", 1000);
  if (train.contains("stages")) {
    if (!train.at("stages").is_array())
      throw ConfigError("config: field train.stages must be an array");
    for (const auto& stage : train.at("stages")) {
      RunConfig::LrStage s;
      s.lr = detail::require<double>(stage, "train.stages[]", "lr");
      s.epochs = detail::require<int>(stage, "train.stages[]", "epochs");
      c.stages.push_back(s);
    }
  }
  const auto& adam = train.contains("adam") ? train.at("adam") : nlohmann::json::object();
  c.adam.beta1 = detail::optional_field<double>(adam, "train.adam", "beta1", 0.9);
  c.adam.beta2 = detail::optional_field<double>(adam, "train.adam", "beta2", 0.999);
  c.adam.eps = detail::optional_field<double>(adam, "train.adam", "eps", 1e-8);
  const auto& proj = train.contains("projection") ? train.at("projection") : nlohmann::json::object();
  c.projection_mode = projection_mode_from_string(
      detail::optional_field<std::string>(proj, "train.projection", "mode", "spectral"));
  c.proj_epsilon = detail::optional_field<double>(proj, "train.projection", "epsilon", 1e-3);
  c.train_seed = detail::optional_field<std::uint64_t>(train, "train", "seed", 0);
  if (train.contains("loss_target") && !train.at("loss_target").is_null())
    c.loss_target = train.at("loss_target").get<double>();
  c.standardize = detail::optional_field<bool>(train, "train", "standardize", false);

  const auto& ev = doc.contains("eval") ? doc.at("eval") : nlohmann::json::object();
  c.fp_tol = detail::optional_field<double>(ev, "eval", "fp_tol", 1e-9);
  c.fp_max_iter = detail::optional_field<int>(ev, "eval", "fp_max_iter", 500);
  if (ev.contains("fp_tol_fallback") && !ev.at("fp_tol_fallback").is_null())
    c.fp_tol_fallback = ev.at("fp_tol_fallback").get<double>();
  c.overlay_trajectories = detail::optional_field<int>(ev, "eval", "overlay_trajectories", 1);
  const auto& grid = ev.contains("vector_field") ? ev.at("vector_field") : nlohmann::json::object();
  c.vf_axis_i = detail::optional_field<int>(grid, "eval.vector_field", "axis_i", 0);
  c.vf_axis_j = detail::optional_field<int>(grid, "eval.vector_field", "axis_j", 1);
  c.vf_grid.i_min = detail::optional_field<double>(grid, "eval.vector_field", "i_min", -2.0);
  c.vf_grid.i_max = detail::optional_field<double>(grid, "eval.vector_field", "i_max", 2.0);
  c.vf_grid.j_min = detail::optional_field<double>(grid, "eval.vector_field", "j_min", -2.0);
  c.vf_grid.j_max = detail::optional_field<double>(grid, "eval.vector_field", "j_max", 2.0);
  c.vf_grid.ni = detail::optional_field<int>(grid, "eval.vector_field", "ni", 20);
  c.vf_grid.nj = detail::optional_field<int>(grid, "eval.vector_field", "nj", 20);
  c.vf_anchor = detail::optional_field<StateVector>(grid, "eval.vector_field", "anchor", {});
  return c;
}

/// Field-by-field validation; throws ConfigError naming the bad field.
inline void validate_config(const RunConfig& c) {
  DynamicalSystem sys;
  try {
    sys = c.make_sys();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("config: system block invalid: ") + e.what());
  }
  const auto n = static_cast<std::size_t>(sys.n);
  if (!c.sampler_base.empty() && c.sampler_base.size() != n)
    throw ConfigError("config: system.sampler.base length must equal system dimension " +
                      std::to_string(sys.n));
  if (!c.sampler_scale.empty() && c.sampler_scale.size() != n)
    throw ConfigError("config: system.sampler.scale length must equal system dimension " +
                      std::to_string(sys.n));
  for (double s : c.sampler_scale)
    if (s < 0.0) throw ConfigError("config: system.sampler.scale entries must be >= 0");
  if (!(c.dt > 0.0 && c.dt <= 0.1))
    throw ConfigError("config: integration.dt must lie in (0, 0.1]");
  if (c.t_end <= 0.0) throw ConfigError("config: integration.t_end must be > 0");
  if (c.t_end < c.dt) throw ConfigError("config: integration.t_end shorter than one step");
  if (c.newton.tol <= 0.0) throw ConfigError("config: integration.tol must be > 0");
  if (c.newton.max_iter < 1) throw ConfigError("config: integration.max_iter must be >= 1");
  if (c.n_train < 1) throw ConfigError("config: data.n_train must be >= 1");
  if (c.n_test < 1) throw ConfigError("config: data.n_test must be >= 1");
  if (c.n_sim < 0) throw ConfigError("config: data.n_sim must be >= 0");
  if (c.arch.m < 1) throw ConfigError("config: train.arch.width must be >= 1");
  if (c.arch.hidden_layers < 1)
    throw ConfigError("config: train.arch.hidden_layers must be >= 1");
  if (c.lr <= 0.0) throw ConfigError("config: train.lr must be > 0");
  if (c.epochs < 1) throw ConfigError("config: train.epochs must be >= 1");
  for (const auto& s : c.stages) {
    if (s.lr <= 0.0) throw ConfigError("config: train.stages[].lr must be > 0");
    if (s.epochs < 1) throw ConfigError("config: train.stages[].epochs must be >= 1");
  }
  if (!(c.proj_epsilon > 0.0 && c.proj_epsilon <= 0.5))
    throw ConfigError("config: train.projection.epsilon must lie in (0, 0.5]");
  if (c.loss_target && *c.loss_target <= 0.0)
    throw ConfigError("config: train.loss_target must be > 0");
  if (c.fp_tol <= 0.0) throw ConfigError("config: eval.fp_tol must be > 0");
  if (c.fp_max_iter < 1) throw ConfigError("config: eval.fp_max_iter must be >= 1");
  if (c.vf_axis_i == c.vf_axis_j || c.vf_axis_i < 0 || c.vf_axis_j < 0 ||
      c.vf_axis_i >= sys.n || c.vf_axis_j >= sys.n)
    throw ConfigError("config: eval.vector_field axis pair invalid for dimension " +
                      std::to_string(sys.n));
  if (!c.vf_anchor.empty() && c.vf_anchor.size() != n)
    throw ConfigError("config: eval.vector_field.anchor length must equal system dimension");
}

inline RunConfig load_config(const std::string& path) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config: " + path + " is not valid JSON: " + std::string(e.what()));
  }
  std::filesystem::path dir = std::filesystem::path(path).parent_path();
  RunConfig c = parse_config(doc, dir.empty() ? "." : dir.string());
  // fill defaulted sampler vectors once the dimension is known
  DynamicalSystem sys = c.make_sys();
  if (c.sampler_base.empty()) c.sampler_base.assign(static_cast<std::size_t>(sys.n), 0.0);
  if (c.sampler_scale.empty()) c.sampler_scale.assign(static_cast<std::size_t>(sys.n), 1.0);
  validate_config(c);
  return c;
}

}  // namespace conns
