#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "conns/decomp.hpp"
#include "conns/errors.hpp"
#include "conns/io.hpp"
#include "conns/linalg.hpp"
#include "conns/ode.hpp"

namespace conns {

/// Runge-Kutta coefficients. Only the trapezoidal instance is shipped, but
/// the consistency invariant is kept checkable for any tableau.
struct ButcherTableau {
  int s = 0;
  Mat alpha;
  Vec b;
  Vec c;

  static ButcherTableau trapezoidal() {
    ButcherTableau t;
    t.s = 2;
    t.alpha = Mat(2, 2);
    t.alpha(1, 0) = 0.5;
    t.alpha(1, 1) = 0.5;
    t.b = {0.5, 0.5};
    t.c = {0.0, 1.0};
    return t;
  }

  bool consistent(double tol = 1e-14) const {
    for (int i = 0; i < s; ++i) {
      double row = 0.0;
      for (int j = 0; j < s; ++j) row += alpha(i, j);
      if (std::abs(row - c[static_cast<std::size_t>(i)]) > tol) return false;
    }
    return true;
  }
};

enum class K2InitPolicy { previous_step, f_of_x };

struct NewtonConfig {
  double tol = 1e-9;          // infinity norm of the stage residual
  int max_iter = 50;
  K2InitPolicy k2_init_policy = K2InitPolicy::previous_step;
};

/// Full record of one Newton solve: every iterate k2^(0)..k2^(I) and the
/// residual norm at each, anchored at (x, dt).
struct NewtonTrace {
  std::vector<StateVector> iterates;
  Vec residual_norms;
  bool converged = false;
  StateVector x;
  double dt = 0.0;

  int iterations() const { return static_cast<int>(iterates.size()) - 1; }
};

struct TrajectoryRecord {
  Vec times;
  std::vector<StateVector> states;
  std::vector<int> iterations_per_step;
  double dt = 0.0;

  long long cumulative_iterations() const {
    long long acc = 0;
    for (int it : iterations_per_step) acc += it;
    return acc;
  }
};

/// Stage residual of the trapezoidal implicit step,
///   K(k2) = k2 - f(x + (dt/2) k1 + (dt/2) k2),   k1 = f(x).
inline StateVector trapezoidal_residual(const DynamicalSystem& sys, const StateVector& x,
                                        const StateVector& k1, const StateVector& k2,
                                        double dt) {
  const auto n = static_cast<std::size_t>(sys.n);
  if (x.size() != n || k1.size() != n || k2.size() != n)
    throw ArgumentError("trapezoidal_residual: dimension mismatch");
  StateVector arg = x;
  axpy(0.5 * dt, k1, arg);
  axpy(0.5 * dt, k2, arg);
  StateVector r = k2 - sys.rhs(arg);
  return r;
}

/// d/dk2 of the stage residual: I - (dt/2) df/dx at the interior point.
inline Mat trapezoidal_jacobian(const DynamicalSystem& sys, const StateVector& x,
                                const StateVector& k1, const StateVector& k2, double dt) {
  const auto n = static_cast<std::size_t>(sys.n);
  if (x.size() != n || k1.size() != n || k2.size() != n)
    throw ArgumentError("trapezoidal_jacobian: dimension mismatch");
  StateVector arg = x;
  axpy(0.5 * dt, k1, arg);
  axpy(0.5 * dt, k2, arg);
  Mat jf = sys.jacobian(arg);
  Mat j = Mat::identity(sys.n);
  for (int i = 0; i < sys.n; ++i)
    for (int k = 0; k < sys.n; ++k) j(i, k) -= 0.5 * dt * jf(i, k);
  return j;
}

/// Newton iteration k2 <- k2 - J^-1 K on the trapezoidal stage equation.
/// When k2_init is empty the policy fallback f(x) is used.
inline NewtonTrace newton_solve(const DynamicalSystem& sys, const StateVector& x, double dt,
                                const NewtonConfig& cfg, StateVector k2_init = {}) {
  if (cfg.tol <= 0.0 || cfg.max_iter < 1)
    throw ArgumentError("newton_solve: need tol > 0 and max_iter >= 1");
  const StateVector k1 = eval_rhs(sys, x);
  StateVector k2 = k2_init.empty() ? k1 : std::move(k2_init);
  if (static_cast<int>(k2.size()) != sys.n)
    throw ArgumentError("newton_solve: k2 init has wrong length");

  NewtonTrace trace;
  trace.x = x;
  trace.dt = dt;
  StateVector residual = trapezoidal_residual(sys, x, k1, k2, dt);
  trace.iterates.push_back(k2);
  trace.residual_norms.push_back(norm_inf(residual));
  if (trace.residual_norms.back() <= cfg.tol) {
    trace.converged = true;
    return trace;
  }
  for (int it = 0; it < cfg.max_iter; ++it) {
    Mat j = trapezoidal_jacobian(sys, x, k1, k2, dt);
    StateVector delta;
    try {
      delta = lu_solve(std::move(j), residual);
    } catch (const NumericError& e) {
      throw SolverError(std::string("newton_solve: ") + e.what() + " at iteration " +
                        std::to_string(it));
    }
    for (std::size_t i = 0; i < k2.size(); ++i) k2[i] -= delta[i];
    residual = trapezoidal_residual(sys, x, k1, k2, dt);
    trace.iterates.push_back(k2);
    trace.residual_norms.push_back(norm_inf(residual));
    if (trace.residual_norms.back() <= cfg.tol) {
      trace.converged = true;
      break;
    }
  }
  return trace;
}

/// A single Newton update k2 - J^-1 K at (x, dt); the map whose graph the
/// training data records.
inline StateVector newton_update(const DynamicalSystem& sys, const StateVector& x,
                                 const StateVector& k2, double dt) {
  const StateVector k1 = eval_rhs(sys, x);
  StateVector residual = trapezoidal_residual(sys, x, k1, k2, dt);
  Vec delta = lu_solve(trapezoidal_jacobian(sys, x, k1, k2, dt), std::move(residual));
  StateVector next = k2;
  for (std::size_t i = 0; i < next.size(); ++i) next[i] -= delta[i];
  return next;
}

/// One trapezoidal step: x_next = x + (dt/2)(k1 + k2*).
inline std::pair<StateVector, NewtonTrace> step_trapezoidal(const DynamicalSystem& sys,
                                                            const StateVector& x, double dt,
                                                            const NewtonConfig& cfg,
                                                            StateVector k2_init = {}) {
  NewtonTrace trace = newton_solve(sys, x, dt, cfg, std::move(k2_init));
  if (!trace.converged)
    throw SolverError("step_trapezoidal: Newton did not converge within " +
                      std::to_string(cfg.max_iter) + " iterations");
  const StateVector k1 = eval_rhs(sys, x);
  StateVector x_next = x;
  axpy(0.5 * dt, k1, x_next);
  axpy(0.5 * dt, trace.iterates.back(), x_next);
  return {std::move(x_next), std::move(trace)};
}

namespace detail {

/// Advances one grid interval, retrying with up to four dt halvings when the
/// inner Newton solve stalls. Returns the state at t+dt and the iteration
/// count spent, and updates the warm-start carry.
inline std::pair<StateVector, int> advance_interval(const DynamicalSystem& sys,
                                                    const StateVector& x, double dt,
                                                    const NewtonConfig& cfg,
                                                    StateVector& warm_k2, int step_index) {
  for (int halving = 0; halving <= 4; ++halving) {
    const int substeps = 1 << halving;
    const double h = dt / substeps;
    StateVector cur = x;
    StateVector carry = warm_k2;
    int iters = 0;
    bool ok = true;
    for (int s = 0; s < substeps; ++s) {
      StateVector init;
      if (cfg.k2_init_policy == K2InitPolicy::previous_step && !carry.empty()) init = carry;
      NewtonTrace trace = newton_solve(sys, cur, h, cfg, std::move(init));
      iters += trace.iterations();
      if (!trace.converged) {
        ok = false;
        break;
      }
      const StateVector k1 = eval_rhs(sys, cur);
      axpy(0.5 * h, k1, cur);
      axpy(0.5 * h, trace.iterates.back(), cur);
      carry = trace.iterates.back();
    }
    if (ok) {
      warm_k2 = std::move(carry);
      return {std::move(cur), iters};
    }
  }
  throw SolverError("simulate: Newton failed at step index " + std::to_string(step_index) +
                    " (t = " + std::to_string(step_index * dt) + ") after 4 dt halvings");
}

}  // namespace detail

/// Integrates x' = f(x) on the uniform grid {0, dt, ..., t_end}, recording
/// the Newton iteration count of every step.
inline TrajectoryRecord simulate(const DynamicalSystem& sys, const StateVector& x0, double dt,
                                 double t_end, const NewtonConfig& cfg) {
  if (dt <= 0.0 || t_end <= 0.0) throw ArgumentError("simulate: need dt > 0 and t_end > 0");
  const int n_steps = static_cast<int>(std::llround(t_end / dt));
  if (n_steps < 1) throw ArgumentError("simulate: t_end shorter than one step");

  TrajectoryRecord rec;
  rec.dt = dt;
  rec.times.reserve(static_cast<std::size_t>(n_steps) + 1);
  rec.states.reserve(static_cast<std::size_t>(n_steps) + 1);
  rec.iterations_per_step.reserve(static_cast<std::size_t>(n_steps));
  rec.times.push_back(0.0);
  rec.states.push_back(x0);

  StateVector x = x0;
  StateVector warm_k2;
  for (int step = 0; step < n_steps; ++step) {
    auto [x_next, iters] = detail::advance_interval(sys, x, dt, cfg, warm_k2, step);
    x = std::move(x_next);
    rec.times.push_back(dt * (step + 1));
    rec.states.push_back(x);
    rec.iterations_per_step.push_back(iters);
  }
  return rec;
}

// ---- trajectory serialization ----

/// CSV with header "t,x1..xn,<iters_label>"; the iterations column on each
/// row is the count of the step that produced that row (0 on the first row).
inline std::string trajectory_to_csv(const TrajectoryRecord& rec,
                                     const std::string& iters_label) {
  std::string out = "t";
  const int n = rec.states.empty() ? 0 : static_cast<int>(rec.states.front().size());
  for (int i = 1; i <= n; ++i) out += ",x" + std::to_string(i);
  out += "," + iters_label + "\n";
  for (std::size_t t = 0; t < rec.times.size(); ++t) {
    out += fmt_g17(rec.times[t]);
    for (double v : rec.states[t]) out += "," + fmt_g17(v);
    out += "," + std::to_string(t == 0 ? 0 : rec.iterations_per_step[t - 1]);
    out += "\n";
  }
  return out;
}

inline void save_trajectory(const TrajectoryRecord& rec, const std::string& csv_path,
                            const std::string& iters_label, const std::string& system_name) {
  write_text_file(csv_path, trajectory_to_csv(rec, iters_label));
  nlohmann::json sidecar{{"system", system_name},
                         {"dt", rec.dt},
                         {"points", rec.times.size()},
                         {"iterations_column", iters_label}};
  write_text_file(csv_path + ".json", sidecar.dump(2) + "\n");
}

// ---- contraction diagnostic ----

struct ContractionProbeResult {
  StateVector probe;
  double value = 0.0;
  bool ok = false;
};

struct ContractionEstimate {
  double sup = 0.0;                          // max singular value over successful probes
  std::vector<ContractionProbeResult> probes;
};

/// Largest singular value of the Jacobian of the generic Newton map
/// G(k) = k - J(k)^-1 F(k), estimated by central differences of G at each
/// probe followed by power iteration. A value < 1 at all probes certifies
/// that the Newton iteration contracts there.
inline ContractionEstimate newton_map_contraction(
    const std::function<StateVector(const StateVector&)>& residual,
    const std::function<Mat(const StateVector&)>& jacobian,
    const std::vector<StateVector>& probe_points, double fd_step = 1e-6) {
  auto newton_map = [&](const StateVector& k) {
    StateVector f = residual(k);
    Vec delta = lu_solve(jacobian(k), f);
    StateVector g = k;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] -= delta[i];
    return g;
  };

  ContractionEstimate est;
  for (const StateVector& probe : probe_points) {
    ContractionProbeResult r;
    r.probe = probe;
    const int n = static_cast<int>(probe.size());
    try {
      Mat dg(n, n);
      for (int j = 0; j < n; ++j) {
        const double h = fd_step * std::max(1.0, std::abs(probe[static_cast<std::size_t>(j)]));
        StateVector hi = probe, lo = probe;
        hi[static_cast<std::size_t>(j)] += h;
        lo[static_cast<std::size_t>(j)] -= h;
        const StateVector ghi = newton_map(hi);
        const StateVector glo = newton_map(lo);
        for (int i = 0; i < n; ++i)
          dg(i, j) = (ghi[static_cast<std::size_t>(i)] - glo[static_cast<std::size_t>(i)]) / (2.0 * h);
      }
      r.value = spectral_norm_power(dg);
      r.ok = true;
      est.sup = std::max(est.sup, r.value);
    } catch (const NumericError&) {
      r.ok = false;  // singular Jacobian at this probe
    }
    est.probes.push_back(std::move(r));
  }
  return est;
}

/// The diagnostic specialized to the trapezoidal stage equation at (x, dt).
inline ContractionEstimate check_newton_contraction(const DynamicalSystem& sys,
                                                    const StateVector& x, double dt,
                                                    const std::vector<StateVector>& probes,
                                                    double fd_step = 1e-6) {
  const StateVector k1 = eval_rhs(sys, x);
  auto residual = [&sys, &x, &k1, dt](const StateVector& k2) {
    return trapezoidal_residual(sys, x, k1, k2, dt);
  };
  auto jacobian = [&sys, &x, &k1, dt](const StateVector& k2) {
    return trapezoidal_jacobian(sys, x, k1, k2, dt);
  };
  return newton_map_contraction(residual, jacobian, probes, fd_step);
}

}  // namespace conns
