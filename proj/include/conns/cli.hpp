#pragma once

#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "conns/config.hpp"
#include "conns/parallel.hpp"
#include "conns/pipeline.hpp"

namespace conns {

/// Entry point behind the conns binary; also callable from tests.
/// Exit codes: 0 success, 1 feasibility/solver failure, 2 usage/config error.
inline int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"contracting neural-Newton solver toolkit"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand name

  std::string config_path;
  std::string out_dir = "runs/out";
  std::uint64_t seed_override = 0;
  bool seed_set = false;
  int threads = 0;

  app.add_option("--config", config_path, "run configuration JSON");
  app.add_option("--out", out_dir, "output directory")->capture_default_str();
  app.add_option("--seed", seed_override, "override sampler and training seeds")
      ->each([&](const std::string&) { seed_set = true; });
  app.add_option("--threads", threads, "worker threads (CONNS_THREADS fallback)");

  auto* sim = app.add_subcommand("simulate", "integrate perturbed trajectories with Newton");
  auto* gen = app.add_subcommand("generate", "harvest Newton-step training data");
  auto* trn = app.add_subcommand("train", "train a solver network");
  auto* evl = app.add_subcommand("eval", "benchmark checkpoints against the Newton reference");
  auto* aud = app.add_subcommand("audit", "feasibility report for a checkpoint");

  std::string mode_str = "unconstrained";
  bool cold = false;
  double loss_target = 0.0;
  bool loss_target_set = false;
  std::string model_name;
  trn->add_option("--mode", mode_str,
                  "unconstrained | constrained | unconstrained_matched")
      ->capture_default_str();
  trn->add_flag("--cold", cold, "constrained mode: train from scratch, no warm start");
  trn->add_option("--loss-target", loss_target, "stop when the epoch loss reaches this value")
      ->each([&](const std::string&) { loss_target_set = true; });
  trn->add_option("--model-name", model_name, "checkpoint name override");

  std::vector<std::string> eval_models;
  evl->add_option("--model", eval_models,
                  "name=path checkpoint to evaluate (repeatable); defaults to "
                  "constrained + unconstrained_matched");

  std::string audit_path;
  aud->add_option("checkpoint", audit_path, "model file to audit")->required();

  try {
    std::vector<const char*> argv;
    argv.push_back("conns");
    for (const std::string& a : args) argv.push_back(a.c_str());
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  if (threads > 0) set_num_threads(threads);

  try {
    if (aud->parsed()) {
      AuditResult res = cmd_audit(audit_path);
      std::fputs(res.text.c_str(), stdout);
      return res.exit_code();
    }

    if (config_path.empty()) {
      std::fputs("error: --config is required for this subcommand\n", stderr);
      return 2;
    }
    RunConfig cfg = load_config(config_path);
    if (seed_set) {
      cfg.sampler_seed = seed_override;
      cfg.train_seed = seed_override;
    }

    if (sim->parsed()) {
      const auto files = cmd_simulate(cfg, out_dir);
      std::printf("wrote %zu trajectory files under %s\n", files.size(),
                  paths::sim_dir(out_dir).c_str());
      return 0;
    }
    if (gen->parsed()) {
      const GenerateResult res = cmd_generate(cfg, out_dir);
      std::printf("train: %zu samples -> %s\ntest:  %zu samples -> %s\n", res.train_samples,
                  res.train_path.c_str(), res.test_samples, res.test_path.c_str());
      return 0;
    }
    if (trn->parsed()) {
      TrainOptions opts;
      opts.cold = cold;
      opts.model_name = model_name;
      if (loss_target_set) opts.loss_target_override = loss_target;
      const TrainResult res = cmd_train(cfg, out_dir, train_mode_from_string(mode_str), opts);
      std::printf("model -> %s\nfinal loss %.6e after %d epochs (%.1fs)\n",
                  res.model_path.c_str(), res.report.final_loss, res.report.epochs_run,
                  res.report.wall_time_seconds);
      return 0;
    }
    if (evl->parsed()) {
      std::vector<std::pair<std::string, std::string>> model_files;
      for (const std::string& spec : eval_models) {
        const auto eq = spec.find('=');
        if (eq == std::string::npos) {
          std::fputs("error: --model expects name=path\n", stderr);
          return 2;
        }
        model_files.emplace_back(spec.substr(0, eq), spec.substr(eq + 1));
      }
      if (model_files.empty()) {
        model_files.emplace_back("constrained", paths::model_file(out_dir, "constrained"));
        const std::string matched = paths::model_file(out_dir, "unconstrained_matched");
        model_files.emplace_back("unconstrained",
                                 std::filesystem::exists(matched)
                                     ? matched
                                     : paths::model_file(out_dir, "unconstrained"));
      }
      const EvalOutputs res = cmd_eval(cfg, out_dir, model_files);
      std::printf("metrics -> %s\nsummary -> %s\n", res.metrics_csv_path.c_str(),
                  res.summary_json_path.c_str());
      return 0;
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const ArgumentError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const FormatError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}

}  // namespace conns
