#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "conns/errors.hpp"
#include "conns/integrator.hpp"
#include "conns/linalg.hpp"
#include "conns/network.hpp"
#include "conns/ode.hpp"

namespace conns {

enum class FpInitPolicy { previous_step, f_of_x, zeros };
enum class NonConvergencePolicy { abort, accept_best };

struct FixedPointConfig {
  double tol = 1e-9;  // infinity norm of the update
  int max_iter = 500;
  FpInitPolicy init_policy = FpInitPolicy::previous_step;

  void validate() const {
    if (tol <= 0.0 || max_iter < 1)
      throw ArgumentError("FixedPointConfig: need tol > 0 and max_iter >= 1");
  }
};

struct FixedPointResult {
  StateVector k2_star;
  int iterations = 0;  // passes through the network
  bool converged = false;
  double final_delta = 0.0;
  double rate_estimate = 0.0;  // geometric fit of successive update norms
};

/// Iterations needed to push a geometric update sequence with ratio `rate`
/// from delta0 below tol; the a-priori bound of the fixed-point theorem.
inline int banach_iteration_bound(double delta0, double tol, double rate) {
  if (delta0 <= tol) return 0;
  if (!(rate > 0.0 && rate < 1.0)) throw ArgumentError("banach_iteration_bound: rate not in (0,1)");
  return static_cast<int>(std::ceil(std::log(tol / delta0) / std::log(rate)));
}

/// Repeated passes k2 <- Phi(k2, x) until the update infinity norm falls
/// below tol. The rate estimate is the median ratio of successive update
/// 2-norms over the last ten updates.
inline FixedPointResult fixed_point_iterate(const NetworkParams& p, const StateVector& x,
                                            StateVector k2_init, const FixedPointConfig& cfg) {
  cfg.validate();
  if (static_cast<int>(k2_init.size()) != p.n || static_cast<int>(x.size()) != p.n)
    throw ArgumentError("fixed_point_iterate: dimension mismatch");

  FixedPointResult res;
  StateVector k2 = std::move(k2_init);
  Vec update_norms;
  StateVector best = k2;
  double best_delta = std::numeric_limits<double>::infinity();
  for (int it = 0; it < cfg.max_iter; ++it) {
    StateVector next = forward(p, k2, x);
    res.iterations = it + 1;
    double delta_inf = 0.0, delta_2 = 0.0;
    for (std::size_t i = 0; i < next.size(); ++i) {
      const double d = next[i] - k2[i];
      delta_inf = std::max(delta_inf, std::abs(d));
      delta_2 += d * d;
    }
    delta_2 = std::sqrt(delta_2);
    update_norms.push_back(delta_2);
    k2 = std::move(next);
    res.final_delta = delta_inf;
    if (delta_inf < best_delta) {
      best_delta = delta_inf;
      best = k2;
    }
    if (delta_inf <= cfg.tol) {
      res.converged = true;
      break;
    }
  }
  res.k2_star = res.converged ? std::move(k2) : std::move(best);

  // geometric rate from the last <= 10 update-norm ratios
  Vec ratios;
  const std::size_t first = update_norms.size() > 11 ? update_norms.size() - 11 : 0;
  for (std::size_t i = first; i + 1 < update_norms.size(); ++i)
    if (update_norms[i] > 0.0) ratios.push_back(update_norms[i + 1] / update_norms[i]);
  if (!ratios.empty()) {
    std::sort(ratios.begin(), ratios.end());
    res.rate_estimate = ratios[ratios.size() / 2];
  }
  return res;
}

namespace detail {

inline void check_runtime_meta(const NetworkParams& p, const DynamicalSystem& sys, double dt) {
  if (p.meta.system_name != sys.name)
    throw ArgumentError("conns_step: model was trained on system \"" + p.meta.system_name +
                        "\", not \"" + sys.name + "\"");
  const double rel = std::abs(p.meta.dt - dt) / std::max(std::abs(p.meta.dt), 1e-300);
  if (rel > 1e-12)
    throw ArgumentError("conns_step: model was trained at dt = " + std::to_string(p.meta.dt) +
                        ", stepped at dt = " + std::to_string(dt));
  if (p.n != sys.n) throw ArgumentError("conns_step: model/system dimension mismatch");
}

inline StateVector fp_init(const NetworkParams& p, const StateVector& k1,
                           const FixedPointConfig& cfg, const StateVector& carry) {
  switch (cfg.init_policy) {
    case FpInitPolicy::previous_step:
      if (!carry.empty()) return carry;
      return k1;  // first step falls back to f(x)
    case FpInitPolicy::f_of_x:
      return k1;
    case FpInitPolicy::zeros:
      return StateVector(static_cast<std::size_t>(p.n), 0.0);
  }
  return k1;
}

}  // namespace detail

/// One trapezoidal step with the network in place of the Newton solver:
/// x_next = x + (dt/2)(f(x) + k2*).
inline std::pair<StateVector, FixedPointResult> conns_step(const NetworkParams& p,
                                                           const DynamicalSystem& sys,
                                                           const StateVector& x, double dt,
                                                           const FixedPointConfig& cfg,
                                                           StateVector k2_init = {}) {
  detail::check_runtime_meta(p, sys, dt);
  const StateVector k1 = eval_rhs(sys, x);
  StateVector init = k2_init.empty() ? detail::fp_init(p, k1, cfg, {}) : std::move(k2_init);
  FixedPointResult res = fixed_point_iterate(p, x, std::move(init), cfg);
  StateVector x_next = x;
  axpy(0.5 * dt, k1, x_next);
  axpy(0.5 * dt, res.k2_star, x_next);
  return {std::move(x_next), std::move(res)};
}

/// Network-driven trajectory on the uniform grid. Non-convergence handling:
/// abort raises, accept_best keeps the best iterate and moves on (the cap
/// behaviour used for unconstrained baselines).
inline TrajectoryRecord conns_simulate(const NetworkParams& p, const DynamicalSystem& sys,
                                       const StateVector& x0, double dt, double t_end,
                                       const FixedPointConfig& cfg,
                                       NonConvergencePolicy policy = NonConvergencePolicy::abort) {
  detail::check_runtime_meta(p, sys, dt);
  if (dt <= 0.0 || t_end <= 0.0)
    throw ArgumentError("conns_simulate: need dt > 0 and t_end > 0");
  const int n_steps = static_cast<int>(std::llround(t_end / dt));
  if (n_steps < 1) throw ArgumentError("conns_simulate: t_end shorter than one step");

  TrajectoryRecord rec;
  rec.dt = dt;
  rec.times.push_back(0.0);
  rec.states.push_back(x0);
  StateVector x = x0;
  StateVector carry;
  for (int step = 0; step < n_steps; ++step) {
    const StateVector k1 = eval_rhs(sys, x);
    StateVector init = detail::fp_init(p, k1, cfg, carry);
    FixedPointResult res = fixed_point_iterate(p, x, std::move(init), cfg);
    if (!res.converged && policy == NonConvergencePolicy::abort)
      throw SolverError("conns_simulate: no fixed-point convergence at step " +
                        std::to_string(step) + " (t = " + std::to_string(step * dt) + ")");
    axpy(0.5 * dt, k1, x);
    axpy(0.5 * dt, res.k2_star, x);
    carry = res.k2_star;
    rec.times.push_back(dt * (step + 1));
    rec.states.push_back(x);
    rec.iterations_per_step.push_back(res.iterations);
  }
  return rec;
}

}  // namespace conns
