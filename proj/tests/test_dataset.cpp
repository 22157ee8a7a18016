#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "conns/dataset.hpp"
#include "test_helpers.hpp"

using namespace conns;

namespace {

Dataset small_cubic_dataset(int n_traj = 4, double dt = 0.02, double t_end = 0.5,
                            std::uint64_t seed = 21) {
  DynamicalSystem sys = make_system("cubic_oscillator");
  InitialConditionSampler sampler({0.0, 0.0}, {1.0, 1.0}, seed);
  return generate_dataset(sys, sampler, n_traj, dt, t_end, NewtonConfig{});
}

}  // namespace

TEST_CASE("sample counts equal the per-step newton iterations") {
  DynamicalSystem sys = make_system("cubic_oscillator");
  InitialConditionSampler sampler({0.0, 0.0}, {1.0, 1.0}, 3);
  const double dt = 0.02, t_end = 0.4;
  const Dataset ds = generate_dataset(sys, sampler, 2, dt, t_end, NewtonConfig{});

  // replay the trajectories and count updates
  std::size_t expected = 0;
  for (int traj = 0; traj < 2; ++traj) {
    StateVector x = sampler.sample_for_trajectory(static_cast<std::uint64_t>(traj));
    StateVector warm;
    for (int step = 0; step < 20; ++step) {
      NewtonTrace trace = newton_solve(sys, x, dt, NewtonConfig{}, warm);
      REQUIRE(trace.converged);
      expected += static_cast<std::size_t>(trace.iterations());
      const StateVector k1 = eval_rhs(sys, x);
      axpy(0.5 * dt, k1, x);
      axpy(0.5 * dt, trace.iterates.back(), x);
      warm = trace.iterates.back();
    }
  }
  CHECK(ds.samples.size() == expected);
}

TEST_CASE("dataset replays the solver graph exactly") {
  const Dataset ds = small_cubic_dataset();
  DynamicalSystem sys = make_system("cubic_oscillator");
  Rng rng(55);
  for (int check = 0; check < 100; ++check) {
    const StepSample& s =
        ds.samples[static_cast<std::size_t>(rng.next_u64() % ds.samples.size())];
    const StateVector replay = newton_update(sys, s.x, s.k2_in, ds.dt);
    for (std::size_t i = 0; i < replay.size(); ++i) {
      const double denom = std::max(std::abs(s.k2_out[i]), 1e-12);
      CHECK(std::abs(replay[i] - s.k2_out[i]) / denom < 1e-12);
    }
  }
}

TEST_CASE("regeneration with the same seed is identical") {
  const Dataset a = small_cubic_dataset();
  const Dataset b = small_cubic_dataset();
  CHECK(a == b);
  const std::string dir = testutil::scratch_dir("dataset_repro");
  save_dataset(a, dir + "/a.cnns");
  save_dataset(b, dir + "/b.cnns");
  CHECK(read_text_file(dir + "/a.cnns") == read_text_file(dir + "/b.cnns"));
}

TEST_CASE("split_by_trajectory partitions whole trajectories") {
  const Dataset ds = small_cubic_dataset(6);
  auto [train, test] = split_by_trajectory(ds, 0.33, 5);
  CHECK(train.samples.size() + test.samples.size() == ds.samples.size());
  std::set<std::uint32_t> train_ids, test_ids;
  for (const StepSample& s : train.samples) train_ids.insert(s.trajectory_id);
  for (const StepSample& s : test.samples) test_ids.insert(s.trajectory_id);
  CHECK(train_ids.size() == 4);
  CHECK(test_ids.size() == 2);
  for (std::uint32_t id : test_ids) CHECK(train_ids.count(id) == 0);

  SUBCASE("two trajectories at one half go one and one") {
    const Dataset two = small_cubic_dataset(2);
    auto [t1, t2] = split_by_trajectory(two, 0.5, 9);
    std::set<std::uint32_t> a, b;
    for (const StepSample& s : t1.samples) a.insert(s.trajectory_id);
    for (const StepSample& s : t2.samples) b.insert(s.trajectory_id);
    CHECK(a.size() == 1);
    CHECK(b.size() == 1);
  }
  SUBCASE("degenerate fractions are rejected") {
    CHECK_THROWS_AS(split_by_trajectory(ds, 0.01, 1), ArgumentError);
    CHECK_THROWS_AS(split_by_trajectory(ds, 0.999, 1), ArgumentError);
  }
}

TEST_CASE("dataset round-trips bit-exactly") {
  const std::string dir = testutil::scratch_dir("dataset_io");
  SUBCASE("empty dataset") {
    Dataset empty;
    empty.system_name = "cubic_oscillator";
    empty.dt = 0.01;
    empty.newton_tol = 1e-9;
    empty.trajectory_count = 0;
    save_dataset(empty, dir + "/empty.cnns");
    CHECK(load_dataset(dir + "/empty.cnns") == empty);
  }
  SUBCASE("generated dataset") {
    const Dataset ds = small_cubic_dataset();
    save_dataset(ds, dir + "/ds.cnns");
    const Dataset loaded = load_dataset(dir + "/ds.cnns");
    CHECK(loaded == ds);
  }
}

TEST_CASE("malformed dataset files are rejected with an offset") {
  const std::string dir = testutil::scratch_dir("dataset_bad");
  const Dataset ds = small_cubic_dataset(2, 0.02, 0.1);
  const std::string path = dir + "/ds.cnns";
  save_dataset(ds, path);

  SUBCASE("corrupted magic") {
    std::string bytes = read_text_file(path);
    bytes[0] = 'X';
    write_text_file(path, bytes);
    CHECK_THROWS_AS(load_dataset(path), FormatError);
  }
  SUBCASE("truncation") {
    std::string bytes = read_text_file(path);
    bytes.resize(bytes.size() - 7);
    write_text_file(path, bytes);
    try {
      load_dataset(path);
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(e.offset > 0);
    }
  }
  SUBCASE("trailing garbage") {
    std::string bytes = read_text_file(path);
    bytes += "junk";
    write_text_file(path, bytes);
    CHECK_THROWS_AS(load_dataset(path), FormatError);
  }
}

TEST_CASE("csv export shape") {
  const Dataset ds = small_cubic_dataset(1, 0.02, 0.1);
  const std::string csv = dataset_to_csv(ds);
  CHECK(csv.substr(0, csv.find('\n')) == "traj,t_idx,x1,x2,k2_in1,k2_in2,k2_out1,k2_out2");
  int lines = 0;
  for (char ch : csv)
    if (ch == '\n') ++lines;
  CHECK(static_cast<std::size_t>(lines) == ds.samples.size() + 1);
}

TEST_CASE("select_trajectories keeps only the requested ids") {
  const Dataset ds = small_cubic_dataset(5);
  const Dataset sub = select_trajectories(ds, {1, 3});
  for (const StepSample& s : sub.samples)
    CHECK((s.trajectory_id == 1 || s.trajectory_id == 3));
  CHECK_THROWS_AS(select_trajectories(ds, {9}), ArgumentError);
}
