#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "conns/config.hpp"
#include "conns/dataset.hpp"
#include "conns/evaluation.hpp"
#include "conns/integrator.hpp"
#include "conns/io.hpp"
#include "conns/network.hpp"
#include "conns/parallel.hpp"
#include "conns/runtime.hpp"

namespace conns {

namespace paths {
inline std::string data_dir(const std::string& out) { return out + "/data"; }
inline std::string train_dataset(const std::string& out) { return data_dir(out) + "/train.cnns"; }
inline std::string test_dataset(const std::string& out) { return data_dir(out) + "/test.cnns"; }
inline std::string model_dir(const std::string& out) { return out + "/models"; }
inline std::string model_file(const std::string& out, const std::string& name) {
  return model_dir(out) + "/" + name + ".cnnm";
}
inline std::string report_file(const std::string& out, const std::string& name) {
  return model_dir(out) + "/" + name + "_report.json";
}
inline std::string sim_dir(const std::string& out) { return out + "/sim"; }
inline std::string eval_dir(const std::string& out) { return out + "/eval"; }
}  // namespace paths

namespace detail {
inline void ensure_dir(const std::string& dir) { std::filesystem::create_directories(dir); }
}  // namespace detail

// ---- simulate ----

/// Integrates `count` perturbed trajectories with the exact Newton solver
/// and writes one CSV (plus sidecar) per trajectory.
inline std::vector<std::string> cmd_simulate(const RunConfig& cfg, const std::string& out_dir) {
  const DynamicalSystem sys = cfg.make_sys();
  const InitialConditionSampler sampler = cfg.make_sampler();
  detail::ensure_dir(paths::sim_dir(out_dir));
  const int count = cfg.simulate_count();
  std::vector<TrajectoryRecord> records(static_cast<std::size_t>(count));
  parallel_for_chunks(count, [&](int id) {
    const StateVector x0 = sampler.sample_for_trajectory(static_cast<std::uint64_t>(id));
    records[static_cast<std::size_t>(id)] =
        simulate(sys, x0, cfg.dt, cfg.t_end, cfg.newton_config());
  });
  std::vector<std::string> files;
  for (int id = 0; id < count; ++id) {
    const std::string path =
        paths::sim_dir(out_dir) + "/newton_traj_" + std::to_string(id) + ".csv";
    save_trajectory(records[static_cast<std::size_t>(id)], path, "newton_iters", sys.name);
    files.push_back(path);
  }
  return files;
}

// ---- generate ----

struct GenerateResult {
  std::string train_path;
  std::string test_path;
  std::size_t train_samples = 0;
  std::size_t test_samples = 0;
};

/// Harvests Newton-step data for n_train + n_test trajectories; whole
/// trajectories land on exactly one side (ids below n_train train, the rest
/// test), so there is no sample leakage.
inline GenerateResult cmd_generate(const RunConfig& cfg, const std::string& out_dir) {
  const DynamicalSystem sys = cfg.make_sys();
  const InitialConditionSampler sampler = cfg.make_sampler();
  const int total = cfg.n_train + cfg.n_test;
  Dataset all = generate_dataset(sys, sampler, total, cfg.dt, cfg.t_end, cfg.newton_config());

  std::vector<std::uint32_t> train_ids, test_ids;
  for (int i = 0; i < cfg.n_train; ++i) train_ids.push_back(static_cast<std::uint32_t>(i));
  for (int i = cfg.n_train; i < total; ++i) test_ids.push_back(static_cast<std::uint32_t>(i));
  Dataset train = select_trajectories(all, train_ids);
  Dataset test = select_trajectories(all, test_ids);

  detail::ensure_dir(paths::data_dir(out_dir));
  GenerateResult res;
  res.train_path = paths::train_dataset(out_dir);
  res.test_path = paths::test_dataset(out_dir);
  res.train_samples = train.samples.size();
  res.test_samples = test.samples.size();
  save_dataset(train, res.train_path);
  save_dataset(test, res.test_path);
  return res;
}

// ---- train ----

enum class TrainMode { unconstrained, constrained, unconstrained_matched };

inline TrainMode train_mode_from_string(const std::string& s) {
  if (s == "unconstrained") return TrainMode::unconstrained;
  if (s == "constrained") return TrainMode::constrained;
  if (s == "unconstrained_matched") return TrainMode::unconstrained_matched;
  throw ConfigError("unknown train mode \"" + s +
                    "\" (expected unconstrained, constrained, or unconstrained_matched)");
}

struct TrainResult {
  std::string model_path;
  std::string report_path;
  NetworkParams params;
  TrainReport report;
};

inline void write_train_report(const TrainReport& r, const NetworkParams& p,
                               const std::string& path) {
  nlohmann::json doc{{"final_loss", r.final_loss},
                     {"epochs_run", r.epochs_run},
                     {"wall_time_seconds", r.wall_time_seconds},
                     {"loss_history", r.loss_history},
                     {"projection_mode", to_string(p.meta.mode)},
                     {"epsilon", p.meta.epsilon}};
  nlohmann::json audits = nlohmann::json::array();
  for (const Vec& epoch : r.sv_audit_history) audits.push_back(epoch);
  doc["sv_audit_history"] = std::move(audits);
  write_text_file(path, doc.dump(2) + "\n");
}

struct TrainOptions {
  bool cold = false;  // constrained mode: skip the QR warm start
  std::optional<double> loss_target_override;
  std::string model_name;  // defaults to the mode name
};

namespace detail {

inline void merge_reports(TrainReport& into, const TrainReport& stage) {
  into.loss_history.insert(into.loss_history.end(), stage.loss_history.begin(),
                           stage.loss_history.end());
  into.sv_audit_history.insert(into.sv_audit_history.end(), stage.sv_audit_history.begin(),
                               stage.sv_audit_history.end());
  into.epochs_run += stage.epochs_run;
  into.wall_time_seconds += stage.wall_time_seconds;
  into.final_loss = stage.final_loss;
}

/// Runs the configured lr stages in sequence; stops early once loss_target is
/// reached. `p` carries the warm start (or a fresh he_init when default).
inline TrainReport run_stages(NetworkParams& p, const Dataset& ds, const RunConfig& cfg,
                              TrainingConfig base) {
  BatchedSamples data = batch_samples(ds.samples);
  TrainReport merged;
  for (const RunConfig::LrStage& stage : cfg.effective_stages()) {
    TrainingConfig tc = base;
    tc.lr = stage.lr;
    tc.epochs = stage.epochs;
    const TrainReport r = train_in_place(p, data, tc);
    merge_reports(merged, r);
    if (base.loss_target && merged.final_loss <= *base.loss_target) break;
  }
  return merged;
}

}  // namespace detail

/// unconstrained: fresh network, no projections.
/// constrained: warm-started from the data-aware projection of the
///   unconstrained checkpoint (unless cold), then projected training.
/// unconstrained_matched: unconstrained retrain that stops at the
///   constrained run's final loss -- the equal-loss comparison baseline.
inline TrainResult cmd_train(const RunConfig& cfg, const std::string& out_dir, TrainMode mode,
                             const TrainOptions& opts = {}) {
  const std::string train_path = paths::train_dataset(out_dir);
  if (!std::filesystem::exists(train_path))
    throw ConfigError("train: dataset not found at " + train_path + " (run generate first)");
  Dataset ds = load_dataset(train_path);
  detail::ensure_dir(paths::model_dir(out_dir));

  TrainResult res;
  std::string name;
  if (mode == TrainMode::unconstrained) {
    name = opts.model_name.empty() ? "unconstrained" : opts.model_name;
    TrainingConfig tc = cfg.training_config(ProjectionMode::none);
    if (opts.loss_target_override) tc.loss_target = opts.loss_target_override;
    res.params = he_init(ds.dim(), cfg.arch, tc.seed);
    res.params.meta.system_name = ds.system_name;
    res.params.meta.dt = ds.dt;
    if (tc.standardize) res.params.meta.standardization = compute_standardization(ds);
    res.report = detail::run_stages(res.params, ds, cfg, tc);
  } else if (mode == TrainMode::constrained) {
    name = opts.model_name.empty() ? "constrained" : opts.model_name;
    TrainingConfig tc = cfg.training_config(cfg.projection_mode == ProjectionMode::none
                                                ? ProjectionMode::spectral
                                                : cfg.projection_mode);
    if (opts.loss_target_override) tc.loss_target = opts.loss_target_override;
    const ProjectionSpec spec{tc.projection_mode, tc.epsilon};
    if (opts.cold) {
      res.params = he_init(ds.dim(), cfg.arch, tc.seed);
      res.params.meta.system_name = ds.system_name;
      res.params.meta.dt = ds.dt;
      if (tc.standardize) res.params.meta.standardization = compute_standardization(ds);
    } else {
      const std::string upath = paths::model_file(out_dir, "unconstrained");
      if (!std::filesystem::exists(upath))
        throw ConfigError("train: constrained mode needs the unconstrained checkpoint at " +
                          upath + " (run train unconstrained first, or pass --cold)");
      NetworkParams unconstrained = load_model(upath);
      auto [warm, proj_report] = constrained_init(unconstrained, ds, spec);
      write_text_file(paths::model_dir(out_dir) + "/" + name + "_init_projection.csv",
                      proj_report.to_csv());
      res.params = std::move(warm);
    }
    res.report = detail::run_stages(res.params, ds, cfg, tc);
  } else {
    name = opts.model_name.empty() ? "unconstrained_matched" : opts.model_name;
    TrainingConfig tc = cfg.training_config(ProjectionMode::none);
    if (opts.loss_target_override) {
      tc.loss_target = opts.loss_target_override;
    } else {
      const std::string rpath = paths::report_file(out_dir, "constrained");
      if (!std::filesystem::exists(rpath))
        throw ConfigError("train: matched mode needs the constrained report at " + rpath);
      const nlohmann::json doc = nlohmann::json::parse(read_text_file(rpath));
      tc.loss_target = doc.at("final_loss").get<double>();
    }
    res.params = he_init(ds.dim(), cfg.arch, tc.seed);
    res.params.meta.system_name = ds.system_name;
    res.params.meta.dt = ds.dt;
    if (tc.standardize) res.params.meta.standardization = compute_standardization(ds);
    res.report = detail::run_stages(res.params, ds, cfg, tc);
  }
  res.params.meta.system_name = ds.system_name;
  res.params.meta.dt = ds.dt;
  res.model_path = paths::model_file(out_dir, name);
  res.report_path = paths::report_file(out_dir, name);
  save_model(res.params, res.model_path);
  write_train_report(res.report, res.params, res.report_path);
  return res;
}

// ---- eval ----

struct ModelEval {
  std::string name;
  MetricsTable train_table;
  MetricsTable test_table;
  SvAudit audit;
  bool feasible = false;
  int fallback_trajectories = 0;  // solved with the softened tolerance
};

struct EvalOutputs {
  MetricsTable newton_train;  // warm-start vs cold-start solver noise floor
  MetricsTable newton_test;
  std::vector<ModelEval> models;
  std::string metrics_csv_path;
  std::string summary_json_path;
};

namespace detail {

struct TrajectorySet {
  std::vector<TrajectoryRecord> newton_ref;
  std::vector<TrajectoryRecord> newton_alt;  // f(x)-initialized re-run
  std::vector<StateVector> x0;
};

inline TrajectorySet reference_trajectories(const RunConfig& cfg, const DynamicalSystem& sys,
                                            int id_begin, int id_end) {
  const InitialConditionSampler sampler = cfg.make_sampler();
  const int count = id_end - id_begin;
  TrajectorySet set;
  set.newton_ref.resize(static_cast<std::size_t>(count));
  set.newton_alt.resize(static_cast<std::size_t>(count));
  set.x0.resize(static_cast<std::size_t>(count));
  parallel_for_chunks(count, [&](int i) {
    const StateVector x0 =
        sampler.sample_for_trajectory(static_cast<std::uint64_t>(id_begin + i));
    set.x0[static_cast<std::size_t>(i)] = x0;
    NewtonConfig warm = cfg.newton_config();
    warm.k2_init_policy = K2InitPolicy::previous_step;
    set.newton_ref[static_cast<std::size_t>(i)] = simulate(sys, x0, cfg.dt, cfg.t_end, warm);
    NewtonConfig cold = cfg.newton_config();
    cold.k2_init_policy = K2InitPolicy::f_of_x;
    set.newton_alt[static_cast<std::size_t>(i)] = simulate(sys, x0, cfg.dt, cfg.t_end, cold);
  });
  return set;
}

inline MetricsTable newton_noise_floor(const TrajectorySet& set, const std::string& split) {
  std::vector<Vec> errors;
  std::vector<long long> iters;
  for (std::size_t i = 0; i < set.newton_ref.size(); ++i) {
    errors.push_back(trajectory_error(set.newton_ref[i], set.newton_alt[i]));
    iters.push_back(set.newton_ref[i].cumulative_iterations());
  }
  return summarize(errors, iters, "newton", split);
}

inline std::pair<TrajectoryRecord, bool> model_trajectory(const NetworkParams& p,
                                                          const DynamicalSystem& sys,
                                                          const StateVector& x0,
                                                          const RunConfig& cfg) {
  FixedPointConfig fp;
  fp.tol = cfg.fp_tol;
  fp.max_iter = cfg.fp_max_iter;
  const NonConvergencePolicy policy = p.meta.mode == ProjectionMode::none
                                          ? NonConvergencePolicy::accept_best
                                          : NonConvergencePolicy::abort;
  try {
    return {conns_simulate(p, sys, x0, cfg.dt, cfg.t_end, fp, policy), false};
  } catch (const SolverError&) {
    if (!cfg.fp_tol_fallback) throw;
    FixedPointConfig soft = fp;
    soft.tol = *cfg.fp_tol_fallback;
    return {conns_simulate(p, sys, x0, cfg.dt, cfg.t_end, soft, policy), true};
  }
}

}  // namespace detail

/// Benchmarks each checkpoint against the Newton reference on the training
/// and test trajectory sets; writes the metrics CSV, a JSON summary, and the
/// overlay / vector-field / singular-value figures.
inline EvalOutputs cmd_eval(const RunConfig& cfg, const std::string& out_dir,
                            const std::vector<std::pair<std::string, std::string>>& model_files) {
  const DynamicalSystem sys = cfg.make_sys();
  const std::string edir = paths::eval_dir(out_dir);
  detail::ensure_dir(edir);

  detail::TrajectorySet train_set = detail::reference_trajectories(cfg, sys, 0, cfg.n_train);
  detail::TrajectorySet test_set =
      detail::reference_trajectories(cfg, sys, cfg.n_train, cfg.n_train + cfg.n_test);

  EvalOutputs out;
  out.newton_train = detail::newton_noise_floor(train_set, "Training");
  out.newton_test = detail::newton_noise_floor(test_set, "Test");

  std::vector<MetricsTable> all_tables{out.newton_train, out.newton_test};

  struct LoadedModel {
    std::string name;
    NetworkParams params;
  };
  std::vector<LoadedModel> models;
  for (const auto& [name, file] : model_files) {
    if (!std::filesystem::exists(file))
      throw ConfigError("eval: model file not found: " + file);
    models.push_back({name, load_model(file)});
  }

  for (LoadedModel& lm : models) {
    ModelEval me;
    me.name = lm.name;
    const NetworkParams& p = lm.params;

    auto run_split = [&](const detail::TrajectorySet& set, const std::string& split,
                         MetricsTable& table) {
      const int count = static_cast<int>(set.x0.size());
      std::vector<TrajectoryRecord> recs(static_cast<std::size_t>(count));
      std::vector<int> fell_back(static_cast<std::size_t>(count), 0);
      parallel_for_chunks(count, [&](int i) {
        auto [rec, fb] = detail::model_trajectory(p, sys, set.x0[static_cast<std::size_t>(i)], cfg);
        recs[static_cast<std::size_t>(i)] = std::move(rec);
        fell_back[static_cast<std::size_t>(i)] = fb ? 1 : 0;
      });
      std::vector<Vec> errors;
      std::vector<long long> iters;
      for (int i = 0; i < count; ++i) {
        Vec err = trajectory_error(set.newton_ref[static_cast<std::size_t>(i)],
                                   recs[static_cast<std::size_t>(i)]);
        // a diverged rollout (overflowed states) counts as infinite error
        for (double& v : err)
          if (!std::isfinite(v)) v = std::numeric_limits<double>::infinity();
        errors.push_back(std::move(err));
        iters.push_back(recs[static_cast<std::size_t>(i)].cumulative_iterations());
        me.fallback_trajectories += fell_back[static_cast<std::size_t>(i)];
      }
      table = summarize(errors, iters, lm.name, split);
      return recs;
    };

    run_split(train_set, "Training", me.train_table);
    std::vector<TrajectoryRecord> test_recs = run_split(test_set, "Test", me.test_table);

    me.audit = max_singular_values(p);
    me.feasible = true;
    for (double s : me.audit.w_max)
      if (s > 1.0 - p.meta.epsilon + 1e-8) me.feasible = false;

    // figures: overlays on the first test trajectories, vector field, spectra
    for (int t = 0; t < std::min(cfg.overlay_trajectories, static_cast<int>(test_recs.size()));
         ++t) {
      for (int s = 0; s < sys.n; ++s) {
        const std::vector<OverlaySeries> series{
            {"newton", &test_set.newton_ref[static_cast<std::size_t>(t)]},
            {lm.name, &test_recs[static_cast<std::size_t>(t)]}};
        const std::string stem =
            edir + "/overlay_" + lm.name + "_test" + std::to_string(t) + "_x" + std::to_string(s + 1);
        write_text_file(stem + ".svg",
                        render_overlay_svg(series, s, sys.name + " test trajectory"));
        write_text_file(stem + ".csv", overlay_to_csv(series, s));
      }
    }
    StateVector anchor = cfg.vf_anchor.empty() ? cfg.sampler_base : cfg.vf_anchor;
    FixedPointConfig fp;
    fp.tol = cfg.fp_tol;
    fp.max_iter = cfg.fp_max_iter;
    FixedPointResult fp_res = fixed_point_iterate(p, anchor, eval_rhs(sys, anchor), fp);
    VectorFieldGrid grid = export_vector_field(p, anchor, cfg.vf_axis_i, cfg.vf_axis_j,
                                               cfg.vf_grid, fp_res.k2_star);
    write_text_file(edir + "/vf_" + lm.name + ".csv", vector_field_to_csv(grid));
    write_text_file(edir + "/vf_" + lm.name + ".svg",
                    render_quiver_svg(grid, lm.name + " displacement field"));
    const SvHistogram hist = export_sv_histogram(p);
    write_text_file(edir + "/sv_" + lm.name + ".csv", sv_histogram_to_csv(hist));
    write_text_file(edir + "/sv_" + lm.name + ".svg",
                    render_sv_histogram_svg(hist, lm.name + " singular values"));

    all_tables.push_back(me.train_table);
    all_tables.push_back(me.test_table);
    out.models.push_back(std::move(me));
  }

  // combined-method overlays for the first test trajectory
  if (!models.empty()) {
    std::vector<TrajectoryRecord> recs;
    recs.reserve(models.size());
    for (LoadedModel& lm : models)
      recs.push_back(detail::model_trajectory(lm.params, sys, test_set.x0[0], cfg).first);
    for (int s = 0; s < sys.n; ++s) {
      std::vector<OverlaySeries> series{{"newton", &test_set.newton_ref[0]}};
      for (std::size_t mi = 0; mi < models.size(); ++mi)
        series.push_back({models[mi].name, &recs[mi]});
      write_text_file(edir + "/overlay_all_test0_x" + std::to_string(s + 1) + ".svg",
                      render_overlay_svg(series, s, sys.name + " test trajectory 0"));
    }
  }

  out.metrics_csv_path = edir + "/metrics.csv";
  write_text_file(out.metrics_csv_path, metrics_to_csv(all_tables));

  nlohmann::json summary;
  auto table_json = [](const MetricsTable& t) {
    return nlohmann::json{{"method", t.method},       {"split", t.split},
                          {"mean_err", t.mean_err},   {"sd_err", t.sd_err},
                          {"max_err", t.max_err},     {"iter_mean", t.iter_mean},
                          {"iter_sd", t.iter_sd},     {"iter_max", t.iter_max},
                          {"trajectories", t.trajectories}};
  };
  summary["newton"] = {table_json(out.newton_train), table_json(out.newton_test)};
  for (const ModelEval& me : out.models) {
    summary["models"][me.name] = {{"train", table_json(me.train_table)},
                                  {"test", table_json(me.test_table)},
                                  {"sv_max", me.audit.w_max},
                                  {"sv_u", me.audit.u_max},
                                  {"feasible", me.feasible},
                                  {"fallback_trajectories", me.fallback_trajectories}};
  }
  out.summary_json_path = edir + "/summary.json";
  write_text_file(out.summary_json_path, summary.dump(2) + "\n");
  return out;
}

// ---- audit ----

struct AuditResult {
  SvAudit audit;
  bool constrained_tagged = false;
  bool feasible = true;
  double epsilon = 0.0;
  std::string text;

  int exit_code() const { return (constrained_tagged && !feasible) ? 1 : 0; }
};

/// Per-layer largest singular values and the feasibility verdict for a
/// checkpoint. Infeasible constrained-tagged checkpoints exit nonzero.
inline AuditResult cmd_audit(const std::string& model_path) {
  const NetworkParams p = load_model(model_path);
  AuditResult res;
  res.audit = max_singular_values(p);
  res.constrained_tagged = p.meta.mode != ProjectionMode::none;
  res.epsilon = p.meta.epsilon;
  const double bound = res.constrained_tagged ? 1.0 - p.meta.epsilon + 1e-8 : 1.0;
  res.text = "checkpoint: " + model_path + "\n";
  res.text += "projection_mode: " + to_string(p.meta.mode) +
              (res.constrained_tagged ? " (epsilon " + fmt_g17(p.meta.epsilon) + ")" : "") + "\n";
  const auto weights = p.weight_list();
  for (std::size_t l = 0; l < res.audit.w_max.size(); ++l) {
    const std::string label =
        l == 0 ? "W1" : (l + 1 == weights.size() ? "Wh" : "W" + std::to_string(l + 1));
    const bool ok = res.audit.w_max[l] <= bound;
    if (res.constrained_tagged && !ok) res.feasible = false;
    res.text += label + ": sigma_max = " + fmt_g17(res.audit.w_max[l]) +
                (res.constrained_tagged ? (ok ? "  [ok]" : "  [VIOLATION]") : "") + "\n";
  }
  res.text += "U: sigma_max = " + fmt_g17(res.audit.u_max) + "  (never constrained)\n";
  res.text += res.constrained_tagged
                  ? (res.feasible ? "verdict: feasible\n" : "verdict: INFEASIBLE\n")
                  : "verdict: unconstrained checkpoint, nothing to enforce\n";
  return res;
}

}  // namespace conns
