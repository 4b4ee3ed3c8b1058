#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "kuq/dsmc.hpp"
#include "kuq/traffic_model.hpp"

using namespace kuq;

namespace {

StreamId sid(std::uint64_t index, std::uint64_t n = 0) {
  return StreamId{11, StreamPurpose::test, 0, index, n, 0};
}

StepConfig steps(double dt, double t_final, std::vector<double> snaps = {}) {
  StepConfig c;
  c.dt = dt;
  c.t_final = t_final;
  c.snapshot_times = std::move(snaps);
  return c;
}

}  // namespace

TEST_CASE("initial laws") {
  const auto c = init_ensemble(4, InitialLaw::constant(0.3), sid(0));
  CHECK(c.velocities == std::vector<double>(4, 0.3));

  const auto u = init_ensemble(100000, InitialLaw::uniform(), sid(1));
  CHECK(std::abs(ensemble_mean(u) - 0.5) <= 3.0 * (1.0 / std::sqrt(12.0)) / std::sqrt(1e5));
  CHECK(std::all_of(u.velocities.begin(), u.velocities.end(), [](double v) { return v >= 0.0 && v < 1.0; }));

  const auto again = init_ensemble(100000, InitialLaw::uniform(), sid(1));
  CHECK(again.velocities == u.velocities);

  CHECK_THROWS_AS(init_ensemble(0, InitialLaw::uniform(), sid(0)), std::invalid_argument);
}

TEST_CASE("initial law tags") {
  CHECK(InitialLaw::parse("uniform").kind == InitialLaw::Kind::uniform);
  const auto c = InitialLaw::parse("constant:0.25");
  CHECK(c.kind == InitialLaw::Kind::constant);
  CHECK(c.value == 0.25);
  CHECK_THROWS_AS(InitialLaw::parse("gaussian"), std::invalid_argument);
  CHECK_THROWS_AS(InitialLaw::parse("constant:"), std::invalid_argument);
  CHECK_THROWS_AS(InitialLaw::parse("constant:1.5"), std::invalid_argument);
  CHECK_THROWS_AS(InitialLaw::parse("constant:0.3x"), std::invalid_argument);
}

TEST_CASE("a zero time step leaves the ensemble unchanged") {
  ModelParams p;
  auto ens = init_ensemble(1000, InitialLaw::uniform(), sid(2));
  const auto before = ens.velocities;
  dsmc_step(ens, p, 2.0, steps(0.0, 1.0));
  CHECK(ens.velocities == before);
}

TEST_CASE("noise-free step with certain interaction is the deterministic rule") {
  ModelParams p;
  p.epsilon = 1.0;
  p.lambda_noise = 0.0;
  const double v0 = 0.3, z = 2.0;
  auto ens = init_ensemble(500, InitialLaw::constant(v0), sid(3));
  dsmc_step(ens, p, z, steps(2.0 * p.tau(), 1.0));
  const double pz = acceleration_probability(p.rho, z);
  for (double v : ens.velocities) CHECK(v == doctest::Approx(pz + pz * (1.0 - pz) * v0).epsilon(1e-14));
  CHECK(ens.time == 1.0);
}

TEST_CASE("time steps beyond 2 tau are rejected") {
  ModelParams p;
  p.epsilon = 0.1;
  auto ens = init_ensemble(10, InitialLaw::uniform(), sid(4));
  CHECK_THROWS_AS(dsmc_step(ens, p, 2.0, steps(0.2, 1.0)), std::invalid_argument);
  CHECK_THROWS_AS(steps(0.2, 1.0).validate(p), std::invalid_argument);
  CHECK_THROWS_AS(steps(0.05, 1.0, {0.5, 0.2}).validate(p), std::invalid_argument);
  CHECK_THROWS_AS(steps(0.05, 1.0, {2.0}).validate(p), std::invalid_argument);
}

TEST_CASE("step count rounds the quotient up") {
  ModelParams p;
  p.epsilon = 0.003;
  CHECK(steps(p.tau(), 40.0).step_count() == 26667);
  CHECK(steps(0.25, 1.0).step_count() == 4);
  CHECK(steps(0.1, 0.3).step_count() == 3);
  CHECK(steps(0.1, 0.0).step_count() == 0);
}

TEST_CASE("default step divides the quarter snapshot and respects tau") {
  for (double eps : {1.0, 0.1, 0.003}) {
    ModelParams p;
    p.epsilon = eps;
    const auto c = default_step_config(p, 40.0);
    CHECK(c.dt <= std::min(p.tau(), 0.01) * (1.0 + 1e-12));
    const double quarter = 10.0 / c.dt;
    CHECK(std::abs(quarter - std::round(quarter)) < 1e-6);
    CHECK(c.snapshot_times == std::vector<double>{10.0, 40.0});
  }
}

TEST_CASE("ensemble mean") {
  const std::vector<double> v{0.2, 0.4};
  CHECK(ensemble_mean(v) == doctest::Approx(0.3));
  CHECK(ensemble_mean(std::vector<double>(7, 0.61)) == doctest::Approx(0.61));
  CHECK_THROWS_AS(ensemble_mean(std::vector<double>{}), std::invalid_argument);
}

TEST_CASE("velocities stay in [0,1] under strong noise") {
  ModelParams p;
  p.epsilon = 1.0;
  p.lambda_noise = 25.0;
  auto ens = init_ensemble(5000, InitialLaw::uniform(), sid(5));
  const auto cfg = steps(0.5, 20.0);
  for (int k = 0; k < 40; ++k) {
    dsmc_step(ens, p, 1.0, cfg);
    REQUIRE(ens.size() == 5000);
    REQUIRE(std::all_of(ens.velocities.begin(), ens.velocities.end(), [](double v) { return v >= 0.0 && v <= 1.0; }));
  }
}

TEST_CASE("snapshots at zero and the final time") {
  ModelParams p;
  const auto ens = init_ensemble(100, InitialLaw::uniform(), sid(6));
  const auto snaps = run(ens, p, 2.0, steps(0.01, 0.5, {0.0}));
  REQUIRE(snaps.size() == 2);
  CHECK(snaps[0].time == 0.0);
  CHECK(snaps[0].ensemble.velocities == ens.velocities);
  CHECK(snaps[1].time == doctest::Approx(0.5));
}

TEST_CASE("ensemble mean follows the exact mean ODE") {
  const double u0 = 0.5;
  SUBCASE("small epsilon") {
    ModelParams p;
    p.epsilon = 0.003;
    auto snaps = run(init_ensemble(100000, InitialLaw::uniform(), sid(7)), p, 2.0,
                     steps(p.tau(), 1.0, {1.0}));
    CHECK(std::abs(ensemble_mean(snaps.back().ensemble) - 0.48270) <= 5e-3);
  }
  SUBCASE("unit epsilon") {
    ModelParams p;
    p.epsilon = 1.0;
    for (double z : {1.0, 3.0}) {
      auto snaps = run(init_ensemble(100000, InitialLaw::uniform(), sid(8)), p, z,
                       default_step_config(p, 5.0));
      for (const auto& s : snaps) {
        const double exact = mean_velocity_exact(s.time, z, u0, p);
        CHECK(std::abs(ensemble_mean(s.ensemble) - exact) <= 4.0 * 0.5 / std::sqrt(1e5));
      }
    }
  }
}

TEST_CASE("runs are reproducible across threads") {
  ModelParams p;
  p.epsilon = 0.05;
  const auto cfg = steps(0.01, 1.0, {0.5, 1.0});
  auto serial = run(init_ensemble(2000, InitialLaw::uniform(), sid(9)), p, 1.5, cfg);
  std::vector<Snapshot> a, b;
  std::thread t1([&] { a = run(init_ensemble(2000, InitialLaw::uniform(), sid(9)), p, 1.5, cfg); });
  std::thread t2([&] { b = run(init_ensemble(2000, InitialLaw::uniform(), sid(9)), p, 1.5, cfg); });
  t1.join();
  t2.join();
  REQUIRE(a.size() == serial.size());
  for (std::size_t s = 0; s < serial.size(); ++s) {
    CHECK(a[s].ensemble.velocities == serial[s].ensemble.velocities);
    CHECK(b[s].ensemble.velocities == serial[s].ensemble.velocities);
  }
}

TEST_CASE("particle order does not change the law of the result") {
  ModelParams p;
  p.epsilon = 0.1;
  const auto cfg = steps(0.05, 2.0);
  double forward = 0.0, backward = 0.0;
  const int seeds = 40;
  for (int s = 0; s < seeds; ++s) {
    auto e1 = init_ensemble(2000, InitialLaw::uniform(), sid(100));
    e1.rng = CounterRng(sid(200 + s));
    std::sort(e1.velocities.begin(), e1.velocities.end());
    auto e2 = e1;
    std::reverse(e2.velocities.begin(), e2.velocities.end());
    e2.rng = CounterRng(sid(300 + s));
    forward += ensemble_mean(run(e1, p, 2.0, cfg).back().ensemble);
    backward += ensemble_mean(run(e2, p, 2.0, cfg).back().ensemble);
  }
  // Per-run sd of the mean is below 0.5 / sqrt(2000).
  CHECK(std::abs(forward - backward) / seeds < 4.0 * std::sqrt(2.0 / seeds) * 0.5 / std::sqrt(2000.0));
}

TEST_CASE("binary snapshot round trip and layout") {
  const std::vector<double> v{0.0, 0.25, 1.0};
  std::stringstream buf;
  write_snapshot(buf, 2.5, v);
  const std::string bytes = buf.str();
  REQUIRE(bytes.size() == 4 + 4 + 8 + 3 * 8);
  CHECK(bytes.substr(0, 4) == "KUQ1");
  CHECK(static_cast<unsigned char>(bytes[4]) == 3);
  CHECK(bytes[5] == 0);
  double t = 0.0;
  std::memcpy(&t, bytes.data() + 8, 8);  // little-endian host
  CHECK(t == 2.5);
  const auto back = read_snapshot(buf);
  CHECK(back.time == 2.5);
  CHECK(back.velocities == v);

  std::stringstream bad("KUQ2xxxx");
  CHECK_THROWS(read_snapshot(bad));
  std::stringstream truncated(bytes.substr(0, 20));
  CHECK_THROWS(read_snapshot(truncated));
}
