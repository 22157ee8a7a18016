#include <doctest.h>

#include <cmath>

#include "conns/runtime.hpp"
#include "test_helpers.hpp"

using namespace conns;

namespace {

/// Degenerate network encoding the affine map Phi(k2) = slope*k2 + offset on
/// the region where the hidden pre-activation stays positive.
NetworkParams affine_map_net(double slope, double offset) {
  Arch arch;
  arch.m = 1;
  arch.hidden_layers = 1;
  NetworkParams p = make_network(1, arch);
  p.w1(0, 0) = slope;
  p.b[0][0] = offset;
  p.wh(0, 0) = 1.0;
  return p;
}

/// Exact surrogate for the scalar linear-decay stage equation: the stage
/// root of x' = a x is k2* = c(a, dt) * x, independent of k2. Encoded with
/// two hidden units so negative x passes through the relu pair.
NetworkParams exact_linear_solver_net(double a, double dt) {
  const double c = a * (1.0 + 0.5 * dt * a) / (1.0 - 0.5 * dt * a);
  Arch arch;
  arch.m = 2;
  arch.hidden_layers = 1;
  NetworkParams p = make_network(1, arch);
  p.u(0, 0) = 1.0;
  p.u(1, 0) = -1.0;
  p.wh(0, 0) = c;
  p.wh(0, 1) = -c;
  p.meta.system_name = "linear_decay";
  p.meta.dt = dt;
  return p;
}

}  // namespace

TEST_CASE("fixed_point_iterate on a contracting affine map") {
  const NetworkParams p = affine_map_net(0.5, 1.0);  // fixed point 2, rate 0.5
  FixedPointConfig cfg;
  cfg.tol = 1e-12;
  cfg.max_iter = 200;
  const FixedPointResult res = fixed_point_iterate(p, {0.0}, {0.0}, cfg);
  CHECK(res.converged);
  CHECK(res.k2_star[0] == doctest::Approx(2.0).epsilon(1e-10));
  CHECK(res.rate_estimate == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(res.final_delta <= cfg.tol);
}

TEST_CASE("fixed point initialization at the fixed point converges immediately") {
  const NetworkParams p = affine_map_net(0.5, 1.0);
  FixedPointConfig cfg;
  cfg.tol = 1e-10;
  const FixedPointResult res = fixed_point_iterate(p, {0.0}, {2.0}, cfg);
  CHECK(res.converged);
  CHECK(res.iterations == 1);
}

TEST_CASE("uniqueness of the reached fixed point across initializations") {
  Arch arch;
  arch.m = 8;
  arch.hidden_layers = 2;
  NetworkParams p = he_init(1, arch, 12);
  const ProjectionSpec spec{ProjectionMode::spectral, 0.05};
  for (Mat* w : p.weight_list()) *w = project(*w, spec);
  FixedPointConfig cfg;
  cfg.tol = 1e-11;
  cfg.max_iter = 2000;
  Rng rng(5);
  const StateVector x{0.4};
  const FixedPointResult ref = fixed_point_iterate(p, x, {0.0}, cfg);
  REQUIRE(ref.converged);
  for (int trial = 0; trial < 100; ++trial) {
    const FixedPointResult res =
        fixed_point_iterate(p, x, testutil::random_vec(1, rng, 3.0), cfg);
    CHECK(res.converged);
    CHECK(std::abs(res.k2_star[0] - ref.k2_star[0]) <= 10.0 * cfg.tol);
    CHECK(res.rate_estimate < 1.0);
  }
}

TEST_CASE("banach a-priori iteration bound is honoured by feasible networks") {
  Arch arch;
  arch.m = 6;
  arch.hidden_layers = 2;
  const ProjectionSpec spec{ProjectionMode::spectral, 0.2};
  Rng rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    NetworkParams p = he_init(2, arch, 100 + static_cast<std::uint64_t>(trial));
    for (Mat* w : p.weight_list()) *w = project(*w, spec);
    double rate = 1.0;
    for (const Mat* w : p.weight_list()) rate *= spectral_norm(*w);
    REQUIRE(rate < 1.0);

    const StateVector x = testutil::random_vec(2, rng);
    const StateVector k0 = testutil::random_vec(2, rng, 2.0);
    // one probe pass to measure the first update
    FixedPointConfig probe;
    probe.tol = 1e-30;
    probe.max_iter = 1;
    const StateVector k1 = forward(p, k0, x);
    const double delta0 = norm2(k1 - k0);

    FixedPointConfig cfg;
    cfg.tol = 1e-10;
    cfg.max_iter = banach_iteration_bound(delta0, cfg.tol, rate) + 5;
    const FixedPointResult res = fixed_point_iterate(p, x, k0, cfg);
    CHECK(res.converged);
  }
}

TEST_CASE("conns_step matches the exact stage solve for a perfect surrogate") {
  DynamicalSystem sys = testutil::linear_decay(-1.0);
  const double dt = 0.01;
  const NetworkParams p = exact_linear_solver_net(-1.0, dt);
  FixedPointConfig cfg;
  cfg.tol = 1e-12;
  auto [x_conns, fp] = conns_step(p, sys, {1.0}, dt, cfg);
  auto [x_newton, trace] = step_trapezoidal(sys, {1.0}, dt, NewtonConfig{});
  CHECK(fp.converged);
  CHECK(x_conns[0] == doctest::Approx(x_newton[0]).epsilon(1e-10));
}

TEST_CASE("conns_step refuses mismatched metadata") {
  DynamicalSystem sys = testutil::linear_decay(-1.0);
  NetworkParams p = exact_linear_solver_net(-1.0, 0.01);
  FixedPointConfig cfg;
  SUBCASE("wrong dt") {
    CHECK_THROWS_AS(conns_step(p, sys, {1.0}, 0.02, cfg), ArgumentError);
  }
  SUBCASE("wrong system") {
    p.meta.system_name = "hopf";
    CHECK_THROWS_AS(conns_step(p, sys, {1.0}, 0.01, cfg), ArgumentError);
  }
}

TEST_CASE("zero field with a zero fixed point leaves the state in place") {
  DynamicalSystem sys = testutil::linear_decay(0.0);
  Arch arch;
  arch.m = 4;
  arch.hidden_layers = 1;
  NetworkParams p = make_network(1, arch);  // all zeros: Phi == 0
  p.meta.system_name = "linear_decay";
  p.meta.dt = 0.05;
  FixedPointConfig cfg;
  auto [x_next, fp] = conns_step(p, sys, {0.75}, 0.05, cfg);
  CHECK(fp.converged);
  CHECK(x_next[0] == 0.75);
}

TEST_CASE("conns_simulate") {
  DynamicalSystem sys = testutil::linear_decay(-1.0);
  const double dt = 0.01;
  const NetworkParams p = exact_linear_solver_net(-1.0, dt);
  FixedPointConfig cfg;
  cfg.tol = 1e-12;

  SUBCASE("t_end equal to dt gives two points") {
    const TrajectoryRecord rec = conns_simulate(p, sys, {1.0}, dt, dt, cfg);
    CHECK(rec.times.size() == 2);
    CHECK(rec.iterations_per_step.size() == 1);
  }
  SUBCASE("tracks the newton trajectory") {
    const TrajectoryRecord net = conns_simulate(p, sys, {1.0}, dt, 1.0, cfg);
    const TrajectoryRecord ref = simulate(sys, {1.0}, dt, 1.0, NewtonConfig{});
    REQUIRE(net.states.size() == ref.states.size());
    for (std::size_t t = 0; t < net.states.size(); ++t)
      CHECK(std::abs(net.states[t][0] - ref.states[t][0]) < 1e-8);
  }
  SUBCASE("abort policy surfaces non-convergence") {
    const NetworkParams diverging = [] {
      NetworkParams q = affine_map_net(1.5, 1.0);  // expanding map
      q.meta.system_name = "linear_decay";
      q.meta.dt = 0.01;
      return q;
    }();
    FixedPointConfig tight;
    tight.tol = 1e-12;
    tight.max_iter = 30;
    CHECK_THROWS_AS(
        conns_simulate(diverging, sys, {1.0}, dt, 0.1, tight, NonConvergencePolicy::abort),
        SolverError);
    // accept_best completes and reports the capped iteration count
    const TrajectoryRecord rec =
        conns_simulate(diverging, sys, {1.0}, dt, 0.1, tight, NonConvergencePolicy::accept_best);
    CHECK(rec.times.size() == 11);
    for (int iters : rec.iterations_per_step) CHECK(iters == tight.max_iter);
  }
}

TEST_CASE("fixed-point discrepancy follows the perturbation bound") {
  // For Phi(k) = mu k + c the fixed point is c / (1 - mu); a surrogate whose
  // per-step prediction is off by delta lands 1/(1-mu) times delta away.
  FixedPointConfig cfg;
  cfg.tol = 1e-13;
  cfg.max_iter = 20000;
  double previous_gap = 0.0;
  for (double mu : {0.3, 0.6, 0.9}) {
    const double delta = 0.01;
    const NetworkParams exact = affine_map_net(mu, 1.0);
    const NetworkParams off = affine_map_net(mu, 1.0 + delta);
    const FixedPointResult a = fixed_point_iterate(exact, {0.0}, {0.5}, cfg);
    const FixedPointResult b = fixed_point_iterate(off, {0.0}, {0.5}, cfg);
    REQUIRE(a.converged);
    REQUIRE(b.converged);
    const double gap = std::abs(b.k2_star[0] - a.k2_star[0]);
    CHECK(gap == doctest::Approx(delta / (1.0 - mu)).epsilon(1e-6));
    CHECK(gap > previous_gap);  // amplification grows with the contraction rate
    previous_gap = gap;
  }
}

TEST_CASE("contraction rate estimate stays below the singular value product") {
  Arch arch;
  arch.m = 8;
  arch.hidden_layers = 2;
  NetworkParams p = he_init(2, arch, 9);
  const ProjectionSpec spec{ProjectionMode::spectral, 0.1};
  for (Mat* w : p.weight_list()) *w = project(*w, spec);
  double product = 1.0;
  for (const Mat* w : p.weight_list()) product *= spectral_norm(*w);
  FixedPointConfig cfg;
  cfg.tol = 1e-12;
  cfg.max_iter = 5000;
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const FixedPointResult res =
        fixed_point_iterate(p, testutil::random_vec(2, rng), testutil::random_vec(2, rng, 2.0), cfg);
    REQUIRE(res.converged);
    CHECK(res.rate_estimate <= product + 0.05);
  }
}
