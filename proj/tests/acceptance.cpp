// Acceptance suite: one pass/fail line per criterion, nonzero exit when any
// criterion fails. Heavy pipelines (dataset -> train -> eval) run once per
// benchmark system and are shared by the criteria that need them.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "conns/cli.hpp"
#include "conns/conns.hpp"

using namespace conns;

namespace {

struct CriterionCheck {
  bool ok = true;
  std::string failures;
  std::vector<std::string> notes;

  void require(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      failures += (failures.empty() ? "" : "; ") + what;
    }
  }
  void note(const std::string& line) { notes.push_back(line); }
};

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

// ---- shared pipeline artifacts ----

struct PipelineArtifacts {
  RunConfig cfg;
  std::string out;
  TrainResult unconstrained;
  TrainResult constrained;
  TrainResult matched;
  EvalOutputs eval;
};

const std::string kWorkDir = "acceptance_work";

PipelineArtifacts run_pipeline(const std::string& config_name, const std::string& tag) {
  PipelineArtifacts art;
  art.cfg = load_config(std::string(CONNS_SOURCE_DIR) + "/configs/" + config_name);
  art.out = kWorkDir + "/" + tag;
  std::filesystem::remove_all(art.out);
  std::printf("       [%s] generating data...\n", tag.c_str());
  std::fflush(stdout);
  cmd_generate(art.cfg, art.out);
  std::printf("       [%s] training unconstrained...\n", tag.c_str());
  std::fflush(stdout);
  art.unconstrained = cmd_train(art.cfg, art.out, TrainMode::unconstrained);
  std::printf("       [%s] unconstrained loss %.4e (%d epochs, %.0fs)\n", tag.c_str(),
              art.unconstrained.report.final_loss, art.unconstrained.report.epochs_run,
              art.unconstrained.report.wall_time_seconds);
  std::printf("       [%s] training constrained (warm start + projections)...\n", tag.c_str());
  std::fflush(stdout);
  art.constrained = cmd_train(art.cfg, art.out, TrainMode::constrained);
  std::printf("       [%s] constrained loss %.4e (%d epochs, %.0fs)\n", tag.c_str(),
              art.constrained.report.final_loss, art.constrained.report.epochs_run,
              art.constrained.report.wall_time_seconds);
  std::printf("       [%s] training matched-loss baseline...\n", tag.c_str());
  std::fflush(stdout);
  art.matched = cmd_train(art.cfg, art.out, TrainMode::unconstrained_matched);
  std::printf("       [%s] matched baseline loss %.4e (%d epochs)\n", tag.c_str(),
              art.matched.report.final_loss, art.matched.report.epochs_run);
  std::printf("       [%s] evaluating...\n", tag.c_str());
  std::fflush(stdout);
  art.eval = cmd_eval(art.cfg, art.out,
                      {{"constrained", art.constrained.model_path},
                       {"unconstrained", art.matched.model_path}});
  return art;
}

std::optional<PipelineArtifacts>& cubic_slot() {
  static std::optional<PipelineArtifacts> slot;
  return slot;
}
std::optional<PipelineArtifacts>& hopf_slot() {
  static std::optional<PipelineArtifacts> slot;
  return slot;
}
std::optional<PipelineArtifacts>& kundur_slot() {
  static std::optional<PipelineArtifacts> slot;
  return slot;
}

const PipelineArtifacts& cubic_pipeline() {
  if (!cubic_slot()) cubic_slot() = run_pipeline("cubic_oscillator.json", "cubic");
  return *cubic_slot();
}
const PipelineArtifacts& hopf_pipeline() {
  if (!hopf_slot()) hopf_slot() = run_pipeline("hopf.json", "hopf");
  return *hopf_slot();
}
const PipelineArtifacts& kundur_pipeline() {
  if (!kundur_slot()) kundur_slot() = run_pipeline("kundur.json", "kundur");
  return *kundur_slot();
}

DynamicalSystem linear_decay() {
  DynamicalSystem sys;
  sys.name = "linear_decay";
  sys.n = 1;
  sys.rhs = [](const StateVector& x) { return StateVector{-x[0]}; };
  sys.jacobian = [](const StateVector&) {
    Mat j(1, 1);
    j(0, 0) = -1.0;
    return j;
  };
  return sys;
}

Vec random_vec(std::size_t n, Rng& rng, double scale = 1.0) {
  Vec v(n);
  for (double& x : v) x = scale * rng.normal();
  return v;
}

Mat random_mat(int rows, int cols, Rng& rng, double scale = 1.0) {
  Mat m(rows, cols);
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

// ---- criteria ----

void criterion_1(CriterionCheck& c) {
  DynamicalSystem sys = linear_decay();
  NewtonConfig cfg;  // tol 1e-9
  auto run = [&](double dt) {
    const TrajectoryRecord rec = simulate(sys, {1.0}, dt, 1.0, cfg);
    for (int iters : rec.iterations_per_step)
      c.require(iters <= 10, "newton solve exceeded 10 iterations at dt " + fmt(dt));
    return std::abs(rec.states.back()[0] - std::exp(-1.0));
  };
  const double e20 = run(0.02), e10 = run(0.01), e05 = run(0.005);
  const double r1 = e20 / e10, r2 = e10 / e05;
  c.note("error ratios when halving dt: " + fmt(r1) + ", " + fmt(r2));
  c.require(r1 >= 3.5 && r1 <= 4.5, "0.02->0.01 error ratio " + fmt(r1) + " outside [3.5, 4.5]");
  c.require(r2 >= 3.5 && r2 <= 4.5, "0.01->0.005 error ratio " + fmt(r2) + " outside [3.5, 4.5]");
}

void criterion_2(CriterionCheck& c) {
  auto residual = [](const StateVector& v) { return StateVector{v[0] * v[0]}; };
  auto jacobian = [](const StateVector& v) {
    Mat j(1, 1);
    j(0, 0) = 2.0 * v[0];
    return j;
  };
  const std::vector<StateVector> probes{{0.3}, {0.7}, {1.0}, {2.5}, {-1.2}, {-0.4}};
  const ContractionEstimate est = newton_map_contraction(residual, jacobian, probes);
  c.note("scalar quadratic newton-map contraction estimate: " + fmt(est.sup));
  for (const auto& p : est.probes) {
    c.require(p.ok, "probe failed");
    c.require(std::abs(p.value - 0.5) <= 1e-3,
              "estimate " + fmt(p.value) + " not within 1e-3 of 0.5");
  }
}

void criterion_3(CriterionCheck& c) {
  Rng rng(8071);
  const ProjectionSpec specs[2] = {{ProjectionMode::spectral, 0.01},
                                   {ProjectionMode::symmetric, 0.01}};
  for (const ProjectionSpec& spec : specs) {
    double worst_violation = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      const Mat w = random_mat(5, 5, rng, 1.0);
      const Mat p = project(w, spec);
      const FeasibilityCheck f = verify_feasible(p, spec);
      c.require(f.feasible, "projected matrix infeasible (" + to_string(spec.mode) + ")");
      worst_violation = std::max(worst_violation, f.sigma_max - (1.0 - spec.epsilon));
      c.require(max_abs(project(p, spec) - p) <= 1e-12,
                "projection not idempotent (" + to_string(spec.mode) + ")");
      const double d_proj = frobenius_norm(w - p);
      for (int z = 0; z < 1000; ++z) {
        const Mat zf = project(random_mat(5, 5, rng, 1.2), spec);
        if (d_proj > frobenius_norm(w - zf) + 1e-10) {
          c.require(false, "projection dominated by a sampled feasible point");
          break;
        }
      }
    }
    c.note(to_string(spec.mode) + ": worst sigma_max excess over bound = " +
           fmt(worst_violation));
  }
}

void criterion_4(CriterionCheck& c) {
  Rng rng(515);
  auto relu = [](Vec v) {
    for (double& x : v) x = std::max(x, 0.0);
    return v;
  };
  for (int trial = 0; trial < 10000; ++trial) {
    const Vec x = random_vec(8, rng, 2.0);
    const Vec y = random_vec(8, rng, 2.0);
    const Vec d = x - y;
    const Vec dr = relu(x) - relu(y);
    c.require(norm1(dr) <= norm1(d) + 1e-15, "relu expanded in the 1-norm");
    c.require(norm2(dr) <= norm2(d) + 1e-15, "relu expanded in the 2-norm");
    c.require(norm_inf(dr) <= norm_inf(d) + 1e-15, "relu expanded in the max-norm");
    if (!c.ok) return;
  }

  // single layer: contraction factor bounded by the largest singular value
  for (int trial = 0; trial < 500; ++trial) {
    const Mat w = random_mat(6, 6, rng, 0.4);
    const double sv = spectral_norm(w);
    const Vec b = random_vec(6, rng);
    const Vec x = random_vec(6, rng, 2.0), y = random_vec(6, rng, 2.0);
    const Vec gx = relu(matvec(w, x) + b), gy = relu(matvec(w, y) + b);
    c.require(norm2(gx - gy) <= sv * norm2(x - y) + 1e-12,
              "layer exceeded its singular-value contraction factor");
    if (!c.ok) return;
  }

  // whole networks: projected random checkpoints of each benchmark shape,
  // plus the trained constrained cubic checkpoint
  std::vector<NetworkParams> nets;
  const ProjectionSpec spec{ProjectionMode::spectral, 1e-3};
  Arch cubic_arch{40, 3, true}, hopf_arch{50, 3, true}, kundur_arch{100, 4, true};
  const int dims[3] = {2, 3, 10};
  const Arch archs[3] = {cubic_arch, hopf_arch, kundur_arch};
  for (int k = 0; k < 3; ++k) {
    NetworkParams p = he_init(dims[k], archs[k], 900 + static_cast<std::uint64_t>(k));
    for (Mat* w : p.weight_list()) *w = project(*w, spec);
    nets.push_back(std::move(p));
  }
  nets.push_back(load_model(cubic_pipeline().constrained.model_path));

  const int triples = 10000 / static_cast<int>(nets.size());
  for (const NetworkParams& p : nets) {
    double product = 1.0;
    for (const Mat* w : p.weight_list()) product *= spectral_norm(*w);
    c.require(product <= 1.0, "feasible checkpoint has singular-value product above one");
    for (int trial = 0; trial < triples; ++trial) {
      const auto n = static_cast<std::size_t>(p.n);
      const Vec a = random_vec(n, rng, 2.0);
      const Vec b = random_vec(n, rng, 2.0);
      const Vec x = random_vec(n, rng, 2.0);
      const double lhs = norm2(forward(p, a, x) - forward(p, b, x));
      c.require(lhs <= norm2(a - b) + 1e-12, "feasible network expanded a k2 pair");
      if (!c.ok) return;
    }
  }
  c.note("checked 3 projected shapes + trained cubic checkpoint");
}

void criterion_5(CriterionCheck& c) {
  const PipelineArtifacts& art = cubic_pipeline();
  const NetworkParams model = load_model(art.constrained.model_path);
  const InitialConditionSampler sampler = art.cfg.make_sampler();
  FixedPointConfig cfg;
  cfg.tol = art.cfg.fp_tol;
  cfg.max_iter = 5000;
  Rng rng(606);
  double worst_spread = 0.0, worst_rate = 0.0;
  for (int anchor = 0; anchor < 20; ++anchor) {
    const StateVector x =
        sampler.sample_for_trajectory(static_cast<std::uint64_t>(1000 + anchor));
    const FixedPointResult ref = fixed_point_iterate(model, x, eval_rhs(art.cfg.make_sys(), x), cfg);
    c.require(ref.converged, "reference fixed-point run did not converge");
    for (int init = 0; init < 100; ++init) {
      const FixedPointResult res =
          fixed_point_iterate(model, x, random_vec(2, rng, 2.0), cfg);
      c.require(res.converged, "random initialization did not converge");
      const double spread = norm2(res.k2_star - ref.k2_star);
      worst_spread = std::max(worst_spread, spread);
      c.require(spread <= 10.0 * cfg.tol, "fixed points disagree beyond 10x tol");
      worst_rate = std::max(worst_rate, res.rate_estimate);
      c.require(res.rate_estimate < 1.0, "geometric rate estimate not below one");
      if (!c.ok) return;
    }
  }
  c.note("max fixed-point spread " + fmt(worst_spread) + ", max rate estimate " +
         fmt(worst_rate));
}

void criterion_6(CriterionCheck& c) {
  Rng rng(2718);
  int tested = 0;
  double worst = 0.0;
  for (int attempt = 0; attempt < 400 && tested < 50; ++attempt) {
    Arch arch{6, 2, true};
    NetworkParams p = he_init(2, arch, 4000 + static_cast<std::uint64_t>(attempt));
    for (Mat* w : p.weight_list())
      for (std::size_t i = 0; i < w->size(); ++i) w->data()[i] *= 0.6;
    Rng brng(5000 + static_cast<std::uint64_t>(attempt));
    for (Vec& b : p.b)
      for (double& v : b) v = 0.1 * brng.normal();
    std::vector<StepSample> batch;
    for (int s = 0; s < 3; ++s) {
      StepSample smp;
      smp.k2_in = random_vec(2, rng);
      smp.x = random_vec(2, rng);
      smp.k2_out = random_vec(2, rng);
      batch.push_back(std::move(smp));
    }
    // skip parameter points with pre-activations near the relu kink
    bool near_kink = false;
    for (const StepSample& s : batch) {
      Vec z = matvec(p.w1, s.k2_in) + matvec(p.u, s.x) + p.b[0];
      for (double v : z) near_kink |= std::abs(v) < 1e-3;
      Vec act(z.size());
      for (std::size_t i = 0; i < z.size(); ++i) act[i] = std::max(z[i], 0.0);
      for (std::size_t l = 0; l < p.inner.size(); ++l) {
        z = matvec(p.inner[l], act) + p.b[l + 1];
        for (double v : z) near_kink |= std::abs(v) < 1e-3;
        for (std::size_t i = 0; i < z.size(); ++i) act[i] = std::max(z[i], 0.0);
      }
    }
    if (near_kink) continue;
    ++tested;

    NetGrads g = gradient(p, batch);
    const double h = 1e-6;
    Vec fd_all, an_all;
    auto probe_tensor = [&](Mat& w, const Mat& gw) {
      Rng pick(7);
      for (int probe = 0; probe < 4; ++probe) {
        const std::size_t idx = pick.next_u64() % w.size();
        const double save = w.data()[idx];
        w.data()[idx] = save + h;
        const double up = loss_mse(p, batch);
        w.data()[idx] = save - h;
        const double dn = loss_mse(p, batch);
        w.data()[idx] = save;
        fd_all.push_back((up - dn) / (2.0 * h));
        an_all.push_back(gw.data()[idx]);
      }
    };
    probe_tensor(p.w1, g.w1);
    probe_tensor(p.u, g.u);
    for (std::size_t l = 0; l < p.inner.size(); ++l) probe_tensor(p.inner[l], g.inner[l]);
    probe_tensor(p.wh, g.wh);
    const double rel = norm2(fd_all - an_all) / std::max(norm2(an_all), 1e-12);
    worst = std::max(worst, rel);
    c.require(rel <= 1e-5, "gradient relative error " + fmt(rel) + " above 1e-5");
    if (!c.ok) return;
  }
  c.require(tested == 50, "only assembled " + std::to_string(tested) + " kink-free points");
  c.note("worst relative error over 50 parameter points: " + fmt(worst));
}

void criterion_7(CriterionCheck& c) {
  const PipelineArtifacts& art = cubic_pipeline();
  const ModelEval* con = nullptr;
  const ModelEval* unc = nullptr;
  for (const ModelEval& m : art.eval.models) {
    if (m.name == "constrained") con = &m;
    if (m.name == "unconstrained") unc = &m;
  }
  c.require(con && unc, "eval outputs missing a model");
  if (!con || !unc) return;

  c.note("matched losses: constrained " + fmt(art.constrained.report.final_loss) +
         " vs baseline " + fmt(art.matched.report.final_loss));
  for (std::size_t s = 0; s < con->test_table.mean_err.size(); ++s) {
    const double ce = con->test_table.mean_err[s];
    const double ue = unc->test_table.mean_err[s];
    c.note("state x" + std::to_string(s + 1) + " mean test error: constrained " + fmt(ce) +
           ", unconstrained " + fmt(ue));
    c.require(ce < ue, "constrained error not strictly below unconstrained");
    c.require(2.0 * ce <= ue, "improvement below the 2x target");
  }

  const double con_iters = con->test_table.iter_mean;
  const double unc_iters = unc->test_table.iter_mean;
  const double newton_iters = art.eval.newton_test.iter_mean;
  c.note("mean cumulative test iterations: newton " + fmt(newton_iters) + ", constrained " +
         fmt(con_iters) + ", unconstrained " + fmt(unc_iters));
  c.require(con_iters <= unc_iters / 5.0,
            "constrained iterations above one fifth of unconstrained");
  c.require(con_iters <= 10.0 * newton_iters,
            "constrained iterations above 10x newton (order of magnitude)");

  const SvAudit audit = max_singular_values(load_model(art.constrained.model_path));
  for (double sv : audit.w_max)
    c.require(sv <= 1.0, "post-training singular value above 1: " + fmt(sv));
  c.note("post-training max singular value: " +
         fmt(*std::max_element(audit.w_max.begin(), audit.w_max.end())));
}

void criterion_8(CriterionCheck& c) {
  const PipelineArtifacts& art = hopf_pipeline();
  const ModelEval* con = nullptr;
  const ModelEval* unc = nullptr;
  for (const ModelEval& m : art.eval.models) {
    if (m.name == "constrained") con = &m;
    if (m.name == "unconstrained") unc = &m;
  }
  c.require(con && unc, "eval outputs missing a model");
  if (!con || !unc) return;

  for (std::size_t s = 0; s < con->test_table.mean_err.size(); ++s) {
    const double ce = con->test_table.mean_err[s];
    const double ue = unc->test_table.mean_err[s];
    c.note("state " + std::string(s == 0 ? "mu" : (s == 1 ? "x" : "y")) +
           " mean test error: constrained " + fmt(ce) + ", unconstrained " + fmt(ue));
    c.require(ce <= ue, "constrained error above unconstrained at matched loss");
  }

  // both bifurcation regimes, tracked within 5x the reference table values
  const DynamicalSystem sys = art.cfg.make_sys();
  const NetworkParams con_model = load_model(art.constrained.model_path);
  const NetworkParams unc_model = load_model(art.matched.model_path);
  const double bounds[3] = {5.0 * 0.02821, 5.0 * 0.19543, 5.0 * 0.19447};
  for (double mu : {0.1, -0.1}) {
    const StateVector x0{mu, 1.0, 0.0};
    const TrajectoryRecord ref = simulate(sys, x0, art.cfg.dt, art.cfg.t_end, art.cfg.newton_config());
    FixedPointConfig fp;
    fp.tol = art.cfg.fp_tol;
    fp.max_iter = art.cfg.fp_max_iter;
    const TrajectoryRecord con_traj =
        conns_simulate(con_model, sys, x0, art.cfg.dt, art.cfg.t_end, fp);
    const TrajectoryRecord unc_traj = conns_simulate(
        unc_model, sys, x0, art.cfg.dt, art.cfg.t_end, fp, NonConvergencePolicy::accept_best);
    const Vec ce = trajectory_error(ref, con_traj);
    const Vec ue = trajectory_error(ref, unc_traj);
    for (int s = 0; s < 3; ++s) {
      c.note("mu=" + fmt(mu) + " state " + std::to_string(s) + ": constrained err " +
             fmt(ce[static_cast<std::size_t>(s)]) + ", unconstrained err " +
             fmt(ue[static_cast<std::size_t>(s)]) + " (bound " +
             fmt(bounds[static_cast<std::size_t>(s)]) + ")");
      c.require(ce[static_cast<std::size_t>(s)] < bounds[static_cast<std::size_t>(s)],
                "constrained regime-tracking error above 5x the reference mean");
      c.require(std::isfinite(ue[static_cast<std::size_t>(s)]) &&
                    ue[static_cast<std::size_t>(s)] < bounds[static_cast<std::size_t>(s)],
                "unconstrained regime-tracking error above 5x the reference mean");
    }
  }
}

void criterion_9(CriterionCheck& c) {
  const PipelineArtifacts& art = kundur_pipeline();
  const ModelEval* con = nullptr;
  const ModelEval* unc = nullptr;
  for (const ModelEval& m : art.eval.models) {
    if (m.name == "constrained") con = &m;
    if (m.name == "unconstrained") unc = &m;
  }
  c.require(con && unc, "eval outputs missing a model");
  if (!con || !unc) return;

  c.note("matched losses: constrained " + fmt(art.constrained.report.final_loss) +
         " vs baseline " + fmt(art.matched.report.final_loss) + " (target 1e-6)");
  double con_mean = 0.0, unc_mean = 0.0;
  for (std::size_t s = 0; s < con->test_table.mean_err.size(); ++s) {
    con_mean += con->test_table.mean_err[s];
    unc_mean += unc->test_table.mean_err[s];
  }
  con_mean /= static_cast<double>(con->test_table.mean_err.size());
  unc_mean /= static_cast<double>(unc->test_table.mean_err.size());
  c.note("mean test error over states: constrained " + fmt(con_mean) + ", unconstrained " +
         fmt(unc_mean));
  c.require(con_mean < unc_mean, "constrained error not below unconstrained");

  const double con_iters = con->test_table.iter_mean;
  const double unc_iters = unc->test_table.iter_mean;
  c.note("mean cumulative test iterations: constrained " + fmt(con_iters) +
         ", unconstrained " + fmt(unc_iters));
  c.require(con_iters < unc_iters, "constrained iterations not below unconstrained");
  c.require(art.cfg.fp_tol == 1e-4, "kundur eval tolerance must be softened to 1e-4");
  c.require(art.cfg.fp_max_iter == 500, "kundur iteration cap must be 500");
}

void criterion_10(CriterionCheck& c) {
  // data-aware initialization beats the naive projection on both oscillators
  struct Case {
    const char* tag;
    const PipelineArtifacts* art;
  };
  const Case cases[2] = {{"cubic", &cubic_pipeline()}, {"hopf", &hopf_pipeline()}};
  for (const Case& k : cases) {
    const Dataset ds = load_dataset(paths::train_dataset(k.art->out));
    const NetworkParams unc = load_model(k.art->unconstrained.model_path);
    const ProjectionSpec spec{k.art->cfg.projection_mode, k.art->cfg.proj_epsilon};
    auto [aware, report] = constrained_init(unc, ds, spec);
    const NetworkParams naive = naive_projection(unc, spec);
    const double loss_aware = loss_mse(aware, ds.samples);
    const double loss_naive = loss_mse(naive, ds.samples);
    c.note(std::string(k.tag) + ": init loss " + fmt(loss_aware) + " (data-aware) vs " +
           fmt(loss_naive) + " (naive)");
    c.require(loss_aware < loss_naive, std::string(k.tag) + ": data-aware init not below naive");
  }

  // full and reduced formulations of the data-aware objective agree
  Rng rng(1415);
  const ProjectionSpec spec{ProjectionMode::spectral, 0.01};
  for (int trial = 0; trial < 5; ++trial) {
    const Mat w = random_mat(3, 3, rng, 1.2);
    const Mat x = random_mat(3, 48, rng);
    ConstrainedLsOptions opt;
    opt.update_tol = 1e-12;
    const Mat full = constrained_least_squares(w, x, matmul(w, x), spec, opt);
    const Mat reduced = qr_optimal_projection(w, x, spec, opt);
    const double gap = frobenius_norm(full - reduced);
    c.require(gap <= 1e-6, "full/reduced minimizers differ by " + fmt(gap));
  }
  c.note("full vs reduced objective minimizers agree on 3x3 instances");
}

struct Criterion {
  int id;
  const char* title;
  std::function<void(CriterionCheck&)> body;
};

}  // namespace

int main(int argc, char** argv) {
  const bool verbose = argc > 1 && std::string(argv[1]) == "-v";
  std::filesystem::create_directories(kWorkDir);
  const std::vector<Criterion> criteria{
      {1, "trapezoidal integrator order and newton convergence", criterion_1},
      {2, "scalar newton-map contraction diagnostic", criterion_2},
      {3, "projection feasibility, idempotence, optimality dominance", criterion_3},
      {4, "relu / layer / network contraction properties", criterion_4},
      {5, "banach behaviour of the trained constrained model", criterion_5},
      {6, "reverse-mode gradient vs central differences", criterion_6},
      {7, "cubic oscillator end-to-end benchmark", criterion_7},
      {8, "hopf bifurcation benchmark", criterion_8},
      {9, "kundur swing-network benchmark", criterion_9},
      {10, "data-aware initialization value and reduction equivalence", criterion_10},
  };

  int failures = 0;
  for (const Criterion& cr : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    CriterionCheck check;
    try {
      cr.body(check);
    } catch (const std::exception& e) {
      check.ok = false;
      check.failures += std::string(check.failures.empty() ? "" : "; ") + "exception: " + e.what();
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    (void)verbose;
    for (const std::string& n : check.notes) std::printf("       %s\n", n.c_str());
    std::printf("[%s] criterion %2d: %s (%.1fs)%s%s\n", check.ok ? "PASS" : "FAIL", cr.id,
                cr.title, secs, check.ok ? "" : " -- ", check.ok ? "" : check.failures.c_str());
    std::fflush(stdout);
    if (!check.ok) ++failures;
  }
  if (failures > 0) std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
