#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "conns/errors.hpp"
#include "conns/integrator.hpp"
#include "conns/io.hpp"
#include "conns/ode.hpp"
#include "conns/parallel.hpp"

namespace conns {

/// One recorded Newton update: at anchoring state x, the solver mapped
/// k2_in to k2_out. The pair (k2_in, x) -> k2_out is a training example.
struct StepSample {
  StateVector x;
  StateVector k2_in;
  StateVector k2_out;
  std::uint32_t trajectory_id = 0;
  std::uint32_t time_index = 0;

  bool operator==(const StepSample&) const = default;
};

struct Dataset {
  std::vector<StepSample> samples;
  std::string system_name;
  double dt = 0.0;
  double newton_tol = 0.0;
  std::uint32_t trajectory_count = 0;
  std::uint64_t seed = 0;

  int dim() const { return samples.empty() ? 0 : static_cast<int>(samples.front().x.size()); }

  bool operator==(const Dataset&) const = default;
};

/// Simulates n_traj trajectories from per-trajectory sampler streams and
/// harvests every Newton update of every time step, including the final
/// converged pair of each solve.
inline Dataset generate_dataset(const DynamicalSystem& sys, const InitialConditionSampler& sampler,
                                int n_traj, double dt, double t_end, const NewtonConfig& cfg) {
  if (n_traj < 1) throw ArgumentError("generate_dataset: n_traj must be >= 1");
  const int n_steps = static_cast<int>(std::llround(t_end / dt));
  if (n_steps < 1) throw ArgumentError("generate_dataset: t_end shorter than one step");

  std::vector<std::vector<StepSample>> per_traj(static_cast<std::size_t>(n_traj));
  parallel_for_chunks(n_traj, [&](int traj) {
    StateVector x = sampler.sample_for_trajectory(static_cast<std::uint64_t>(traj));
    StateVector warm_k2;
    auto& out = per_traj[static_cast<std::size_t>(traj)];
    for (int step = 0; step < n_steps; ++step) {
      StateVector init;
      if (cfg.k2_init_policy == K2InitPolicy::previous_step && !warm_k2.empty()) init = warm_k2;
      NewtonTrace trace = newton_solve(sys, x, dt, cfg, std::move(init));
      if (!trace.converged)
        throw SolverError("generate_dataset: Newton did not converge (trajectory " +
                          std::to_string(traj) + ", step " + std::to_string(step) + ")");
      for (std::size_t i = 0; i + 1 < trace.iterates.size(); ++i) {
        StepSample s;
        s.x = x;
        s.k2_in = trace.iterates[i];
        s.k2_out = trace.iterates[i + 1];
        s.trajectory_id = static_cast<std::uint32_t>(traj);
        s.time_index = static_cast<std::uint32_t>(step);
        out.push_back(std::move(s));
      }
      const StateVector k1 = eval_rhs(sys, x);
      axpy(0.5 * dt, k1, x);
      axpy(0.5 * dt, trace.iterates.back(), x);
      warm_k2 = trace.iterates.back();
    }
  });

  Dataset ds;
  ds.system_name = sys.name;
  ds.dt = dt;
  ds.newton_tol = cfg.tol;
  ds.trajectory_count = static_cast<std::uint32_t>(n_traj);
  ds.seed = sampler.seed();
  std::size_t total = 0;
  for (const auto& v : per_traj) total += v.size();
  ds.samples.reserve(total);
  for (auto& v : per_traj)
    for (auto& s : v) ds.samples.push_back(std::move(s));
  return ds;
}

/// Assigns whole trajectories to one side or the other; no sample of a
/// trajectory ever crosses the split.
inline std::pair<Dataset, Dataset> split_by_trajectory(const Dataset& ds, double test_fraction,
                                                       std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw ArgumentError("split_by_trajectory: test_fraction must lie in (0, 1)");
  const int n = static_cast<int>(ds.trajectory_count);
  const int n_test = static_cast<int>(std::llround(test_fraction * n));
  if (n_test == 0 || n_test == n)
    throw ArgumentError("split_by_trajectory: fraction produces an empty side");

  std::vector<std::uint32_t> ids(static_cast<std::size_t>(n));
  std::iota(ids.begin(), ids.end(), 0u);
  Rng rng(seed);
  for (int i = n - 1; i > 0; --i) {
    const auto j = static_cast<std::size_t>(rng.next_u64() % static_cast<std::uint64_t>(i + 1));
    std::swap(ids[static_cast<std::size_t>(i)], ids[j]);
  }
  std::vector<bool> is_test(static_cast<std::size_t>(n), false);
  for (int i = 0; i < n_test; ++i) is_test[ids[static_cast<std::size_t>(i)]] = true;

  Dataset train = ds, test = ds;
  train.samples.clear();
  test.samples.clear();
  for (const StepSample& s : ds.samples)
    (is_test[s.trajectory_id] ? test : train).samples.push_back(s);
  return {std::move(train), std::move(test)};
}

/// Extracts the subset of whole trajectories with the given ids.
inline Dataset select_trajectories(const Dataset& ds, const std::vector<std::uint32_t>& ids) {
  std::vector<bool> keep(ds.trajectory_count, false);
  for (std::uint32_t id : ids) {
    if (id >= ds.trajectory_count)
      throw ArgumentError("select_trajectories: id out of range");
    keep[id] = true;
  }
  Dataset out = ds;
  out.samples.clear();
  for (const StepSample& s : ds.samples)
    if (keep[s.trajectory_id]) out.samples.push_back(s);
  return out;
}

// ---- persistence: magic "CNNS", version u16, JSON metadata, f64 rows ----

namespace detail {
inline constexpr char kDatasetMagic[4] = {'C', 'N', 'N', 'S'};
inline constexpr std::uint16_t kDatasetVersion = 1;
}  // namespace detail

inline void save_dataset(const Dataset& ds, const std::string& path) {
  detail::BinWriter w(path);
  w.bytes(detail::kDatasetMagic, 4);
  w.pod(detail::kDatasetVersion);
  nlohmann::json meta{{"system", ds.system_name}, {"dt", ds.dt},
                      {"newton_tol", ds.newton_tol}, {"trajectory_count", ds.trajectory_count},
                      {"seed", ds.seed},           {"dim", ds.dim()},
                      {"samples", ds.samples.size()}};
  const std::string header = meta.dump();
  w.pod(static_cast<std::uint32_t>(header.size()));
  w.bytes(header.data(), header.size());
  for (const StepSample& s : ds.samples) {
    w.pod(s.trajectory_id);
    w.pod(s.time_index);
    w.f64s(s.x.data(), s.x.size());
    w.f64s(s.k2_in.data(), s.k2_in.size());
    w.f64s(s.k2_out.data(), s.k2_out.size());
  }
  w.close();
}

inline Dataset load_dataset(const std::string& path) {
  detail::BinReader r(path);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, detail::kDatasetMagic, 4) != 0)
    throw FormatError("dataset file: bad magic", 0);
  const auto version = r.pod<std::uint16_t>();
  if (version != detail::kDatasetVersion)
    throw FormatError("dataset file: unsupported version " + std::to_string(version), 4);
  const auto header_len = r.pod<std::uint32_t>();
  std::string header(header_len, '\0');
  r.bytes(header.data(), header_len);
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("dataset file: bad metadata: ") + e.what(), 10);
  }

  Dataset ds;
  ds.system_name = meta.at("system").get<std::string>();
  ds.dt = meta.at("dt").get<double>();
  ds.newton_tol = meta.at("newton_tol").get<double>();
  ds.trajectory_count = meta.at("trajectory_count").get<std::uint32_t>();
  ds.seed = meta.at("seed").get<std::uint64_t>();
  const auto dim = meta.at("dim").get<std::size_t>();
  const auto count = meta.at("samples").get<std::size_t>();
  ds.samples.resize(count);
  for (StepSample& s : ds.samples) {
    s.trajectory_id = r.pod<std::uint32_t>();
    s.time_index = r.pod<std::uint32_t>();
    s.x.resize(dim);
    s.k2_in.resize(dim);
    s.k2_out.resize(dim);
    r.f64s(s.x.data(), dim);
    r.f64s(s.k2_in.data(), dim);
    r.f64s(s.k2_out.data(), dim);
  }
  if (!r.at_eof()) throw FormatError("dataset file: trailing bytes", r.offset());
  return ds;
}

/// Lossy inspection export; the binary format is the durable one.
inline std::string dataset_to_csv(const Dataset& ds) {
  const int n = ds.dim();
  std::string out = "traj,t_idx";
  for (int i = 1; i <= n; ++i) out += ",x" + std::to_string(i);
  for (int i = 1; i <= n; ++i) out += ",k2_in" + std::to_string(i);
  for (int i = 1; i <= n; ++i) out += ",k2_out" + std::to_string(i);
  out += "\n";
  for (const StepSample& s : ds.samples) {
    out += std::to_string(s.trajectory_id) + "," + std::to_string(s.time_index);
    for (double v : s.x) out += "," + fmt_g17(v);
    for (double v : s.k2_in) out += "," + fmt_g17(v);
    for (double v : s.k2_out) out += "," + fmt_g17(v);
    out += "\n";
  }
  return out;
}

}  // namespace conns
