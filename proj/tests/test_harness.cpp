#include <doctest.h>

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <stdexcept>

#include "kuq/harness.hpp"
#include "kuq/surrogates.hpp"

using namespace kuq;
namespace fs = std::filesystem;

namespace {

ExperimentConfig small_config() {
  ExperimentConfig c;
  c.model.epsilon = 0.05;
  c.t_final = 1.0;
  c.n_particles = 400;
  c.n_samples = 6;
  c.n_ref = 2000;
  c.gl_nodes = 3;
  c.replications = 2;
  c.hierarchy_samples = 50;
  c.threads = 1;
  c.cache_dir = "";
  return c;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("kuq_test_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("parallel_for fills every slot once") {
  for (unsigned threads : {1u, 3u, 64u}) {
    std::vector<int> slots(100, 0);
    std::atomic<int> calls{0};
    parallel_for(slots.size(), threads, [&](std::size_t i) {
      slots[i] += static_cast<int>(i);
      ++calls;
    });
    CHECK(calls == 100);
    for (std::size_t i = 0; i < slots.size(); ++i) CHECK(slots[i] == static_cast<int>(i));
  }
  CHECK_NOTHROW(parallel_for(0, 4, [](std::size_t) { throw std::runtime_error("never"); }));
  CHECK_THROWS_AS(parallel_for(10, 3, [](std::size_t i) { if (i == 7) throw std::runtime_error("boom"); }),
                  std::runtime_error);
}

TEST_CASE("thread count resolution") {
  CHECK(resolve_threads(5) == 5);
  setenv("KUQ_THREADS", "3", 1);
  CHECK(resolve_threads(0) == 3);
  setenv("KUQ_THREADS", "junk", 1);
  CHECK(resolve_threads(0) >= 1);
  unsetenv("KUQ_THREADS");
}

TEST_CASE("config json round trip and validation") {
  const auto j = nlohmann::json::parse(R"({"epsilon": 0.003, "n_samples": 20, "method": "bf-steady",
                                          "lambda_mode": 1.0, "centering": "sample_mean"})");
  const auto c = config_from_json(j);
  CHECK(c.model.epsilon == 0.003);
  CHECK(c.n_samples == 20);
  CHECK(c.methods == std::vector<Method>{Method::bf_steady});
  REQUIRE(c.fixed_lambda);
  CHECK(*c.fixed_lambda == 1.0);
  CHECK(c.centering == Centering::sample_mean);
  CHECK(config_to_json(config_from_json(config_to_json(c))) == config_to_json(c));

  CHECK(config_from_json(nlohmann::json::parse(R"({"method": ["mc", "mlmc3"]})")).methods.size() == 2);
  CHECK(config_from_json(nlohmann::json::object()).snapshots() == std::vector<double>{10.0, 40.0});

  auto rejects = [](const char* text) { CHECK_THROWS(config_from_json(nlohmann::json::parse(text))); };
  rejects(R"({"n_particle": 100})");
  rejects(R"({"method": "qmc"})");
  rejects(R"({"n_samples": 0})");
  rejects(R"({"gl_nodes": 0})");
  rejects(R"({"replications": 0})");
  rejects(R"({"t_final": 0})");
  rejects(R"({"lambda_mode": "best"})");
  rejects(R"({"centering": "median"})");
  rejects(R"({"rho": 1.5})");
  rejects(R"({"z_lo": 3, "z_hi": 1})");
  rejects(R"({"t_final": 4, "snapshot_times": [1, 2]})");
  rejects(R"({"method": "mlmc3", "n_particles": 1002})");
  rejects(R"({"epsilon": 0.01, "dt": 0.5})");
  rejects(R"([1, 2])");
  CHECK_NOTHROW(config_from_json(nlohmann::json::parse(R"({"t_final": 4, "snapshot_times": [1, 4]})")));
}

TEST_CASE("method tags") {
  for (Method m : {Method::mc, Method::bf_steady, Method::bf_bgk, Method::mlmc2, Method::mlmc3, Method::hierarchical}) {
    CHECK(parse_method(method_name(m)) == m);
  }
  CHECK_THROWS_AS(parse_method("MC"), std::invalid_argument);
}

TEST_CASE("z batches are prefix-stable and replication-specific") {
  const auto c = small_config();
  const auto a = draw_z_batch(c, 0, 50, 0);
  const auto b = draw_z_batch(c, 0, 20, 0);
  CHECK(std::equal(b.begin(), b.end(), a.begin()));
  for (double z : a) CHECK((z >= 1.0 && z < 3.0));
  CHECK(draw_z_batch(c, 0, 20, 1) != b);
  CHECK(draw_z_batch(c, 1, 20, 0) != b);
}

TEST_CASE("batch runs are independent of the worker count and cached") {
  auto c = small_config();
  const auto z = draw_z_batch(c, 0, 5, 0);
  RunCache c1, c2;
  const auto serial = simulate_batch(c, z, 0, 300, 0, c1);
  c.threads = 4;
  const auto threaded = simulate_batch(c, z, 0, 300, 0, c2);
  REQUIRE(serial.size() == 5);
  for (std::size_t k = 0; k < 5; ++k) {
    REQUIRE(serial[k].size() == 2);
    for (std::size_t s = 0; s < 2; ++s) CHECK(serial[k][s].values == threaded[k][s].values);
  }
  CHECK(c1.size() == 5);
  const auto again = simulate_batch(c, z, 0, 300, 0, c1);
  CHECK(c1.size() == 5);
  CHECK(again[2][1].values == serial[2][1].values);

  RunCache c3;
  const auto other_rep = simulate_batch(c, z, 0, 300, 1, c3);
  CHECK(other_rep[0][1].values != serial[0][1].values);
  ExperimentConfig changed = c;
  changed.model.epsilon = 0.1;
  CHECK(dynamics_fingerprint(changed) != dynamics_fingerprint(c));
}

TEST_CASE("reference quadrature nodes") {
  auto c = small_config();
  c.gl_nodes = 1;
  c.n_ref = 200;
  const auto one = reference_solution(c);
  REQUIRE(one.rule.nodes.size() == 1);
  CHECK(one.rule.nodes[0] == doctest::Approx(2.0));
  CHECK(one.rule.weights[0] == doctest::Approx(1.0));
  c.gl_nodes = 2;
  const auto two = reference_solution(c);
  CHECK(two.rule.nodes[0] == doctest::Approx(1.42265).epsilon(1e-5));
  CHECK(two.rule.nodes[1] == doctest::Approx(2.57735).epsilon(1e-5));
  CHECK(two.rule.weights[1] == doctest::Approx(0.5));
  CHECK(two.times == c.snapshots());
  CHECK(two.histograms.back().integral() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("reference mean velocity matches the quadrature of the exact mean") {
  ExperimentConfig c;
  c.model.epsilon = 0.003;
  c.t_final = 4.0;
  c.n_ref = 10000;
  c.gl_nodes = 10;
  c.cache_dir = "";
  const auto ref = reference_solution(c);
  double exact = 0.0;
  for (std::size_t i = 0; i < ref.rule.nodes.size(); ++i) {
    exact += ref.rule.weights[i] * mean_velocity_exact(c.t_final, ref.rule.nodes[i], 0.5, c.model);
  }
  CHECK(std::abs(ref.histograms.back().mean_velocity() - exact) <= 4.0 / std::sqrt(1e4) + 0.005);
}

TEST_CASE("reference disk cache round trip") {
  auto c = small_config();
  c.cache_dir = fresh_dir("refcache").string();
  const auto first = reference_solution(c);
  std::size_t files = 0;
  for (const auto& entry : fs::recursive_directory_iterator(c.cache_dir)) files += entry.is_regular_file();
  CHECK(files == c.gl_nodes);
  const auto cached = reference_solution(c);
  for (std::size_t s = 0; s < first.times.size(); ++s) CHECK(cached.histograms[s].values == first.histograms[s].values);

  c.n_bins = 50;
  const auto regridded = reference_solution(c);
  CHECK(regridded.histograms[0].size() == 50);

  for (const auto& entry : fs::recursive_directory_iterator(c.cache_dir)) {
    if (entry.is_regular_file()) std::ofstream(entry.path(), std::ios::trunc) << "garbage";
  }
  c.n_bins = 100;
  const auto rebuilt = reference_solution(c);
  CHECK(rebuilt.histograms[1].values == first.histograms[1].values);

  auto nocache = small_config();
  CHECK(reference_solution(nocache).histograms[1].values == first.histograms[1].values);
  fs::remove_all(c.cache_dir);
}

TEST_CASE("changing the replication leaves the reference untouched") {
  auto c = small_config();
  const auto ref = reference_solution(c);
  RunCache cache;
  const auto r0 = estimate_replication(c, 0, cache);
  const auto r1 = estimate_replication(c, 1, cache);
  CHECK(r0[0].mean.values != r1[0].mean.values);
  CHECK(reference_solution(c).histograms[0].values == ref.histograms[0].values);
}

TEST_CASE("gl node doubling barely moves smooth z-integrands") {
  ModelParams p;
  p.epsilon = 0.003;
  const UncertaintySpec spec;
  const VelocityGrid g(100);
  const DensityHistogram f0(g, std::vector<double>(100, 1.0));
  const auto e10 = surrogate_expectation(SurrogateKind::steady_state, 0.0, spec, p, f0, QuadratureExpectation{10});
  const auto e20 = surrogate_expectation(SurrogateKind::steady_state, 0.0, spec, p, f0, QuadratureExpectation{20});
  for (std::size_t i = 0; i < 100; ++i) CHECK(std::abs(e10.values[i] - e20.values[i]) < 1e-3);
  for (double t : {1.0, 10.0, 40.0}) {
    auto u = [&](double z) { return mean_velocity_exact(t, z, 0.5, p); };
    CHECK(std::abs(expectation_over(spec, QuadratureExpectation{10}, u) -
                   expectation_over(spec, QuadratureExpectation{20}, u)) < 1e-10);
  }
}

TEST_CASE("a single sample against its own run has zero error") {
  auto c = small_config();
  c.n_samples = 1;
  c.replications = 1;
  RunCache cache;
  const auto z = draw_z_batch(c, 0, 1, 0);
  const auto runs = simulate_batch(c, z, 0, c.n_particles, 0, cache);
  ReferenceSolution self;
  self.times = c.snapshots();
  self.histograms = runs[0];
  const auto result = run_uq_experiment(c, self, cache);
  REQUIRE(result.errors.records.size() == 2);
  for (const auto& r : result.errors.records) CHECK(r.rel_err == 0.0);
}

TEST_CASE("experiments are deterministic across worker counts") {
  auto c = small_config();
  c.methods = {Method::mc, Method::bf_steady, Method::bf_bgk, Method::hierarchical, Method::mlmc2, Method::mlmc3};
  const auto ref = reference_solution(c);
  RunCache a, b;
  const auto serial = run_uq_experiment(c, ref, a);
  c.threads = 3;
  const auto threaded = run_uq_experiment(c, ref, b);
  REQUIRE(serial.errors.records.size() == 2 * 2 * 6);
  for (std::size_t i = 0; i < serial.errors.records.size(); ++i) {
    CHECK(serial.errors.records[i].rel_err == threaded.errors.records[i].rel_err);
    CHECK(serial.errors.records[i].rel_err >= 0.0);
  }
  // Per (replication, method) the series runs forward in time.
  for (std::size_t i = 0; i + 6 < serial.errors.records.size(); ++i) {
    const auto& r = serial.errors.records[i];
    const auto& next = serial.errors.records[i + 6];
    if (r.replication == next.replication) {
      CHECK(next.method == r.method);
      CHECK(next.time > r.time);
    }
  }
}

TEST_CASE("estimator budgets follow the configured hierarchy") {
  auto c = small_config();
  c.methods = {Method::mlmc3, Method::hierarchical, Method::bf_bgk};
  RunCache cache;
  const auto reports = estimate_replication(c, 0, cache);
  REQUIRE(reports.size() == 6);
  const auto& mlmc = reports[0];
  CHECK(mlmc.method == "mlmc3");
  REQUIRE(mlmc.budgets.size() == 3);
  CHECK(mlmc.budgets[0].samples == 24);
  CHECK(mlmc.budgets[0].particles == 100);
  CHECK(mlmc.budgets[2].samples == 6);
  CHECK(mlmc.budgets[2].particles == 400);
  CHECK(reports[1].budgets.size() == 3);
  CHECK(reports[2].lambda.has_value());
  CHECK(reports[2].time == c.snapshots()[0]);
  CHECK(reports[5].time == c.t_final);
}

TEST_CASE("bgk and steady control variates coincide under optimal lambda") {
  auto c = small_config();
  c.methods = {Method::bf_steady, Method::bf_bgk};
  RunCache cache;
  const auto reports = estimate_replication(c, 0, cache);
  for (std::size_t s = 0; s < 2; ++s) {
    const auto& a = reports[2 * s].mean.values;
    const auto& b = reports[2 * s + 1].mean.values;
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(b[i] == doctest::Approx(a[i]).epsilon(1e-9).scale(1.0));
  }
}

TEST_CASE("convergence sweep") {
  auto c = small_config();
  c.methods = {Method::mc, Method::bf_steady};
  const auto ref = reference_solution(c);
  RunCache cache;
  const std::vector<std::size_t> bad{10, 10, 10}, two{4, 8}, good{2, 4, 8};
  CHECK_THROWS(convergence_sweep(c, bad, ref, cache));
  CHECK_THROWS(convergence_sweep(c, two, ref, cache));
  const auto rows = convergence_sweep(c, good, ref, cache);
  REQUIRE(rows.size() == 6);
  CHECK(rows[0].m == 2);
  CHECK(rows[5].m == 8);
  CHECK(rows[1].method == Method::bf_steady);
  CHECK(rows[0].errors.size() == c.replications);
  // Nested samples: M = 8 reuses the M = 4 runs of every replication.
  CHECK(cache.size() == 8 * c.replications);
}

TEST_CASE("slope and median helpers") {
  const std::vector<double> x{1, 2, 4, 8}, y{3, 3 / std::sqrt(2.0), 1.5, 3 / std::sqrt(8.0)};
  CHECK(loglog_slope(x, y) == doctest::Approx(-0.5).epsilon(1e-12));
  CHECK_THROWS(loglog_slope(std::vector<double>{1, 1}, std::vector<double>{1, 2}));
  CHECK_THROWS(loglog_slope(std::vector<double>{1, 2}, std::vector<double>{0, 2}));
  CHECK(median({3, 1, 2}) == 2.0);
  CHECK(median({4, 1, 3, 2}) == 2.5);
  CHECK_THROWS(median({}));
}

TEST_CASE("synthetic Monte Carlo sweep recovers the square-root rate") {
  std::mt19937_64 gen(5);
  std::normal_distribution<double> nd(0.0, 2.0);
  std::vector<double> ms, med;
  for (std::size_t m : {10u, 20u, 40u, 80u, 160u, 320u}) {
    std::vector<double> errs;
    for (int r = 0; r < 400; ++r) {
      SampleSet s;
      for (std::size_t k = 0; k < m; ++k) {
        s.z_values.push_back(0.0);
        s.histograms.emplace_back(VelocityGrid(1), std::vector<double>{1.0 + nd(gen)});
      }
      errs.push_back(std::abs(mc_estimate(s).mean.values[0] - 1.0));
    }
    ms.push_back(static_cast<double>(m));
    med.push_back(median(errs));
  }
  CHECK(loglog_slope(ms, med) == doctest::Approx(-0.5).epsilon(0.2));
}
