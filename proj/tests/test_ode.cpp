#include <doctest.h>

#include <cmath>

#include "conns/ode.hpp"
#include "test_helpers.hpp"

using namespace conns;

TEST_CASE("cubic oscillator right-hand side") {
  DynamicalSystem sys = make_system("cubic_oscillator");
  CHECK(sys.n == 2);
  const StateVector origin = eval_rhs(sys, {0.0, 0.0});
  CHECK(origin[0] == 0.0);
  CHECK(origin[1] == 0.0);
  const StateVector at11 = eval_rhs(sys, {1.0, 1.0});
  CHECK(at11[0] == doctest::Approx(1.9).epsilon(1e-15));
  CHECK(at11[1] == doctest::Approx(-2.1).epsilon(1e-15));
}

TEST_CASE("cubic oscillator jacobian hand values") {
  DynamicalSystem sys = make_system("cubic_oscillator");
  const Mat j0 = eval_jacobian(sys, {0.0, 0.0});
  CHECK(max_abs(j0) == 0.0);
  const Mat j1 = eval_jacobian(sys, {1.0, 0.0});
  CHECK(j1(0, 0) == doctest::Approx(-0.3));
  CHECK(j1(0, 1) == 0.0);
  CHECK(j1(1, 0) == doctest::Approx(-6.0));
  CHECK(j1(1, 1) == 0.0);
}

TEST_CASE("hopf system basics") {
  DynamicalSystem sys = make_system("hopf");
  CHECK(sys.n == 3);
  const StateVector at0 = eval_rhs(sys, {0.1, 0.0, 0.0});
  CHECK(at0[0] == 0.0);
  CHECK(at0[1] == 0.0);
  CHECK(at0[2] == 0.0);
}

TEST_CASE("hopf mu-derivative row is identically zero") {
  DynamicalSystem sys = make_system("hopf");
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const StateVector x = testutil::random_vec(3, rng, 2.0);
    CHECK(eval_rhs(sys, x)[0] == 0.0);
    const Mat j = eval_jacobian(sys, x);
    for (int c = 0; c < 3; ++c) CHECK(j(0, c) == 0.0);
  }
}

TEST_CASE("analytic jacobians match central finite differences") {
  std::vector<DynamicalSystem> systems;
  systems.push_back(make_system("cubic_oscillator"));
  systems.push_back(make_system("hopf"));
  systems.push_back(make_system("kundur", testutil::kundur_default_params()));
  Rng rng(17);
  for (const DynamicalSystem& sys : systems) {
    for (int trial = 0; trial < 100; ++trial) {
      const StateVector x = testutil::random_vec(static_cast<std::size_t>(sys.n), rng, 0.8);
      const Mat ja = eval_jacobian(sys, x);
      const Mat jf = testutil::fd_jacobian([&](const StateVector& v) { return eval_rhs(sys, v); }, x);
      const double scale = std::max(1.0, max_abs(ja));
      CHECK(max_abs(ja - jf) / scale < 1e-6);
    }
  }
}

TEST_CASE("kundur system wiring") {
  DynamicalSystem sys = make_system("kundur", testutil::kundur_default_params());
  CHECK(sys.n == 10);

  SUBCASE("shipped parameters balance at the reference angles") {
    const StateVector eq = testutil::kundur_equilibrium();
    const StateVector f = eval_rhs(sys, eq);
    for (double v : f) CHECK(std::abs(v) < 1e-12);
  }

  SUBCASE("off-diagonal speed/angle coupling") {
    // d(omega_i')/d(delta_j) = +B_ij cos(delta_i - delta_j) for i != j
    Rng rng(4);
    const StateVector x = testutil::random_vec(10, rng, 0.5);
    const Mat j = eval_jacobian(sys, x);
    const auto params = testutil::kundur_default_params();
    const auto b = params.at("B").get<std::vector<Vec>>();
    for (int i = 0; i < 5; ++i)
      for (int jj = 0; jj < 5; ++jj) {
        if (i == jj) continue;
        const double expect =
            b[static_cast<std::size_t>(i)][static_cast<std::size_t>(jj)] *
            std::cos(x[static_cast<std::size_t>(i)] - x[static_cast<std::size_t>(jj)]);
        CHECK(j(5 + i, jj) == doctest::Approx(expect).epsilon(1e-12));
      }
  }

  SUBCASE("symmetric coupling cancels in the speed-sum with zero damping") {
    nlohmann::json params = testutil::kundur_default_params();
    params["d"] = Vec(5, 0.0);
    DynamicalSystem undamped = make_system("kundur", params);
    double psum = 0.0;
    for (double v : params.at("p").get<Vec>()) psum += v;
    Rng rng(12);
    for (int trial = 0; trial < 20; ++trial) {
      const StateVector x = testutil::random_vec(10, rng, 1.0);
      const StateVector f = eval_rhs(undamped, x);
      double speed_sum = 0.0;
      for (int i = 5; i < 10; ++i) speed_sum += f[static_cast<std::size_t>(i)];
      CHECK(speed_sum == doctest::Approx(psum).epsilon(1e-9));
    }
  }

  SUBCASE("incomplete parameters are rejected") {
    nlohmann::json params = testutil::kundur_default_params();
    params.erase("B");
    CHECK_THROWS_AS(make_system("kundur", params), ConfigError);
  }
}

TEST_CASE("unknown system names are rejected") {
  CHECK_THROWS_AS(make_system("van_der_pol"), ConfigError);
}

TEST_CASE("system files load through the {name, params} schema") {
  const nlohmann::json doc =
      nlohmann::json::parse(conns::read_text_file(testutil::source_dir() +
                                                  "/configs/kundur_params.json"));
  const DynamicalSystem sys = load_system(doc);
  CHECK(sys.name == "kundur");
  CHECK(sys.n == 10);
  CHECK_THROWS_AS(load_system(nlohmann::json::object()), ConfigError);
}

TEST_CASE("dimension mismatches are rejected") {
  DynamicalSystem sys = make_system("cubic_oscillator");
  CHECK_THROWS_AS(eval_rhs(sys, {1.0, 2.0, 3.0}), ArgumentError);
  CHECK_THROWS_AS(eval_jacobian(sys, {1.0}), ArgumentError);
}

TEST_CASE("rhs evaluation is deterministic") {
  DynamicalSystem sys = make_system("kundur", testutil::kundur_default_params());
  Rng rng(5);
  const StateVector x = testutil::random_vec(10, rng, 0.7);
  const StateVector a = eval_rhs(sys, x);
  const StateVector b = eval_rhs(sys, x);
  CHECK(a == b);
}

TEST_CASE("initial condition sampler") {
  const StateVector base{1.0, -2.0};
  SUBCASE("zero scale returns the base exactly") {
    InitialConditionSampler s(base, {0.0, 0.0}, 5);
    CHECK(s.sample() == base);
  }
  SUBCASE("same seed reproduces the sequence") {
    InitialConditionSampler a(base, {0.5, 0.5}, 17), b(base, {0.5, 0.5}, 17);
    for (int i = 0; i < 10; ++i) CHECK(a.sample() == b.sample());
  }
  SUBCASE("per-trajectory streams are reproducible") {
    InitialConditionSampler a(base, {0.5, 0.5}, 17);
    CHECK(a.sample_for_trajectory(3) == a.sample_for_trajectory(3));
    CHECK(a.sample_for_trajectory(3) != a.sample_for_trajectory(4));
  }
  SUBCASE("halving the scale halves the sample deviation") {
    InitialConditionSampler full(base, {1.0, 1.0}, 99);
    InitialConditionSampler half(base, {0.5, 0.5}, 131);
    const int draws = 10000;
    double var_full = 0.0, var_half = 0.0;
    for (int i = 0; i < draws; ++i) {
      const StateVector f = full.sample();
      const StateVector h = half.sample();
      var_full += (f[0] - base[0]) * (f[0] - base[0]);
      var_half += (h[0] - base[0]) * (h[0] - base[0]);
    }
    const double sd_ratio = std::sqrt(var_half / var_full);
    CHECK(sd_ratio == doctest::Approx(0.5).epsilon(0.05));
  }
  SUBCASE("negative scales are rejected") {
    CHECK_THROWS_AS(InitialConditionSampler(base, {-0.1, 0.1}, 1), ArgumentError);
  }
}
