#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <utility>

#include <json.hpp>

#include "conns/errors.hpp"
#include "conns/linalg.hpp"
#include "conns/rng.hpp"

namespace conns {

using StateVector = Vec;

/// A time-invariant ODE x' = f(x) with an analytic Jacobian. Values are
/// immutable after construction and safe to share across threads.
struct DynamicalSystem {
  std::string name;
  int n = 0;
  nlohmann::json params;
  std::function<StateVector(const StateVector&)> rhs;
  std::function<Mat(const StateVector&)> jacobian;
};

inline StateVector eval_rhs(const DynamicalSystem& sys, const StateVector& x) {
  if (static_cast<int>(x.size()) != sys.n)
    throw ArgumentError("eval_rhs: state has length " + std::to_string(x.size()) +
                        ", system " + sys.name + " expects " + std::to_string(sys.n));
  return sys.rhs(x);
}

inline Mat eval_jacobian(const DynamicalSystem& sys, const StateVector& x) {
  if (static_cast<int>(x.size()) != sys.n)
    throw ArgumentError("eval_jacobian: state has length " + std::to_string(x.size()) +
                        ", system " + sys.name + " expects " + std::to_string(sys.n));
  return sys.jacobian(x);
}

namespace detail {

inline DynamicalSystem make_cubic_oscillator() {
  DynamicalSystem sys;
  sys.name = "cubic_oscillator";
  sys.n = 2;
  sys.params = nlohmann::json::object();
  sys.rhs = [](const StateVector& s) {
    const double x = s[0], y = s[1];
    return StateVector{-0.1 * x * x * x + 2.0 * y * y * y,
                       -2.0 * x * x * x - 0.1 * y * y * y};
  };
  sys.jacobian = [](const StateVector& s) {
    const double x = s[0], y = s[1];
    Mat j(2, 2);
    j(0, 0) = -0.3 * x * x;
    j(0, 1) = 6.0 * y * y;
    j(1, 0) = -6.0 * x * x;
    j(1, 1) = -0.3 * y * y;
    return j;
  };
  return sys;
}

/// State order (mu, x, y); mu is a frozen bifurcation parameter, so its
/// derivative row is identically zero.
inline DynamicalSystem make_hopf() {
  DynamicalSystem sys;
  sys.name = "hopf";
  sys.n = 3;
  sys.params = nlohmann::json::object();
  sys.rhs = [](const StateVector& s) {
    const double mu = s[0], x = s[1], y = s[2];
    const double r2 = x * x + y * y;
    return StateVector{0.0, mu * x + y - x * r2, mu * y - x - y * r2};
  };
  sys.jacobian = [](const StateVector& s) {
    const double mu = s[0], x = s[1], y = s[2];
    Mat j(3, 3);
    j(1, 0) = x;
    j(1, 1) = mu - 3.0 * x * x - y * y;
    j(1, 2) = 1.0 - 2.0 * x * y;
    j(2, 0) = y;
    j(2, 1) = -1.0 - 2.0 * x * y;
    j(2, 2) = mu - x * x - 3.0 * y * y;
    return j;
  };
  return sys;
}

/// Coupled swing equations over machines i in the generator set:
///   delta_i' = omega_i
///   omega_i' = p_i - d_i omega_i - sum_j B_ij sin(delta_i - delta_j)
/// State layout: [delta_0..delta_{N-1}, omega_0..omega_{N-1}].
inline DynamicalSystem make_kundur(const nlohmann::json& params) {
  for (const char* key : {"p", "d", "B"}) {
    if (!params.contains(key))
      throw ConfigError(std::string("kundur system: missing parameter \"") + key + "\"");
  }
  const Vec p = params.at("p").get<Vec>();
  const Vec d = params.at("d").get<Vec>();
  const auto b_rows = params.at("B").get<std::vector<Vec>>();
  const int nm = static_cast<int>(p.size());
  if (nm == 0) throw ConfigError("kundur system: empty generator set");
  if (static_cast<int>(d.size()) != nm || static_cast<int>(b_rows.size()) != nm)
    throw ConfigError("kundur system: p, d, B sizes disagree");
  Mat b(nm, nm);
  for (int i = 0; i < nm; ++i) {
    if (static_cast<int>(b_rows[static_cast<std::size_t>(i)].size()) != nm)
      throw ConfigError("kundur system: B must be a dense square matrix");
    for (int j = 0; j < nm; ++j) b(i, j) = b_rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  }

  DynamicalSystem sys;
  sys.name = "kundur";
  sys.n = 2 * nm;
  sys.params = params;
  sys.rhs = [p, d, b, nm](const StateVector& s) {
    StateVector out(static_cast<std::size_t>(2 * nm));
    for (int i = 0; i < nm; ++i) {
      out[static_cast<std::size_t>(i)] = s[static_cast<std::size_t>(nm + i)];
      double coupling = 0.0;
      for (int j = 0; j < nm; ++j)
        coupling += b(i, j) * std::sin(s[static_cast<std::size_t>(i)] - s[static_cast<std::size_t>(j)]);
      out[static_cast<std::size_t>(nm + i)] =
          p[static_cast<std::size_t>(i)] -
          d[static_cast<std::size_t>(i)] * s[static_cast<std::size_t>(nm + i)] - coupling;
    }
    return out;
  };
  sys.jacobian = [d, b, nm](const StateVector& s) {
    Mat j(2 * nm, 2 * nm);
    for (int i = 0; i < nm; ++i) {
      j(i, nm + i) = 1.0;
      double diag = 0.0;
      for (int k = 0; k < nm; ++k) {
        if (k == i) continue;
        const double c = b(i, k) * std::cos(s[static_cast<std::size_t>(i)] - s[static_cast<std::size_t>(k)]);
        j(nm + i, k) = c;
        diag -= c;
      }
      j(nm + i, i) = diag;
      j(nm + i, nm + i) = -d[static_cast<std::size_t>(i)];
    }
    return j;
  };
  return sys;
}

}  // namespace detail

/// Builds one of the shipped benchmark systems. The oscillator and Hopf
/// systems take no parameters; kundur needs {"p": [...], "d": [...], "B": [[...]]}.
inline DynamicalSystem make_system(const std::string& name,
                                   const nlohmann::json& params = nlohmann::json::object()) {
  if (name == "cubic_oscillator") return detail::make_cubic_oscillator();
  if (name == "hopf") return detail::make_hopf();
  if (name == "kundur") return detail::make_kundur(params);
  throw ConfigError("unknown system name \"" + name +
                    "\" (expected cubic_oscillator, hopf, or kundur)");
}

/// Parses a {name, params} system file and wires the system.
inline DynamicalSystem load_system(const nlohmann::json& doc) {
  if (!doc.contains("name")) throw ConfigError("system file: missing \"name\"");
  return make_system(doc.at("name").get<std::string>(),
                     doc.value("params", nlohmann::json::object()));
}

/// Gaussian perturbations around a base state. Stateful single-owner RNG:
/// the same seed always reproduces the same sample sequence.
class InitialConditionSampler {
 public:
  InitialConditionSampler(StateVector base, Vec perturbation_scale, std::uint64_t seed)
      : base_(std::move(base)),
        scale_(std::move(perturbation_scale)),
        seed_(seed),
        rng_(seed) {
    if (base_.size() != scale_.size())
      throw ArgumentError("sampler: base and perturbation_scale sizes differ");
    for (double s : scale_)
      if (s < 0.0) throw ArgumentError("sampler: perturbation_scale must be >= 0");
  }

  const StateVector& base() const { return base_; }
  const Vec& scale() const { return scale_; }
  std::uint64_t seed() const { return seed_; }

  StateVector sample() { return draw(rng_); }

  /// Sample from the independent per-trajectory stream (seed, trajectory_id).
  StateVector sample_for_trajectory(std::uint64_t trajectory_id) const {
    Rng rng = Rng::stream(seed_, trajectory_id);
    return draw(rng);
  }

 private:
  StateVector draw(Rng& rng) const {
    StateVector out = base_;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += scale_[i] * rng.normal();
    return out;
  }

  StateVector base_;
  Vec scale_;
  std::uint64_t seed_;
  Rng rng_;
};

inline StateVector sample_initial_condition(InitialConditionSampler& sampler) {
  return sampler.sample();
}

}  // namespace conns
