#pragma once

#include <cmath>
#include <filesystem>
#include <string>

#include "conns/integrator.hpp"
#include "conns/linalg.hpp"
#include "conns/network.hpp"
#include "conns/ode.hpp"
#include "conns/rng.hpp"

namespace testutil {

inline conns::Mat random_mat(int rows, int cols, conns::Rng& rng, double scale = 1.0) {
  conns::Mat m(rows, cols);
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

inline conns::Vec random_vec(std::size_t n, conns::Rng& rng, double scale = 1.0) {
  conns::Vec v(n);
  for (double& x : v) x = scale * rng.normal();
  return v;
}

/// Scalar linear decay x' = a x; closed forms for every integrator quantity.
inline conns::DynamicalSystem linear_decay(double a = -1.0) {
  conns::DynamicalSystem sys;
  sys.name = "linear_decay";
  sys.n = 1;
  sys.rhs = [a](const conns::StateVector& x) { return conns::StateVector{a * x[0]}; };
  sys.jacobian = [a](const conns::StateVector&) {
    conns::Mat j(1, 1);
    j(0, 0) = a;
    return j;
  };
  return sys;
}

/// Central finite-difference Jacobian of an arbitrary vector map.
template <class F>
conns::Mat fd_jacobian(const F& f, const conns::StateVector& x, double h = 1e-6) {
  const int n = static_cast<int>(x.size());
  const conns::StateVector f0 = f(x);
  const int m = static_cast<int>(f0.size());
  conns::Mat j(m, n);
  for (int c = 0; c < n; ++c) {
    conns::StateVector hi = x, lo = x;
    const double step = h * std::max(1.0, std::abs(x[static_cast<std::size_t>(c)]));
    hi[static_cast<std::size_t>(c)] += step;
    lo[static_cast<std::size_t>(c)] -= step;
    const conns::StateVector fhi = f(hi);
    const conns::StateVector flo = f(lo);
    for (int r = 0; r < m; ++r)
      j(r, c) = (fhi[static_cast<std::size_t>(r)] - flo[static_cast<std::size_t>(r)]) / (2.0 * step);
  }
  return j;
}

inline std::string source_dir() { return CONNS_SOURCE_DIR; }

/// Fresh scratch directory under the build tree.
inline std::string scratch_dir(const std::string& name) {
  const std::string dir = "test_scratch/" + name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

/// Default 5-machine swing-network parameters: symmetric coupling, positive
/// damping, injections balanced so that a known angle profile is an
/// equilibrium.
inline nlohmann::json kundur_default_params() {
  static const nlohmann::json params = nlohmann::json::parse(conns::read_text_file(
      source_dir() + "/configs/kundur_params.json"))["params"];
  return params;
}

inline conns::StateVector kundur_equilibrium() {
  const conns::StateVector delta{0.0, 0.06, -0.04, 0.08, -0.1};
  conns::StateVector x(10, 0.0);
  for (int i = 0; i < 5; ++i) x[static_cast<std::size_t>(i)] = delta[static_cast<std::size_t>(i)];
  return x;
}

}  // namespace testutil
