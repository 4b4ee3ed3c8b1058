#include "kuq/harness.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <thread>

#include "kuq/dsmc.hpp"
#include "kuq/rng.hpp"
#include "kuq/surrogates.hpp"

namespace kuq {

namespace {

// z batches. Fine-level samples live in batch 0; MLMC level h below the top
// uses batch h. The hierarchical surrogate-only level has its own batch.
constexpr std::uint32_t kHierarchyBatch = 10;

class Fnv1a {
 public:
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h_ ^= p[i];
      h_ *= 0x100000001b3ULL;
    }
  }
  void u64(std::uint64_t v) { bytes(&v, sizeof v); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u64(s.size());
    bytes(s.data(), s.size());
  }
  std::uint64_t value() const { return h_; }

 private:
  std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

// Fields shared by the run cache and the reference cache; the grid is not
// part of it because the reference cache stores raw particles.
void hash_dynamics(Fnv1a& h, const ExperimentConfig& cfg) {
  const StepConfig step = cfg.step_config();
  h.f64(cfg.model.rho);
  h.f64(cfg.model.epsilon);
  h.f64(cfg.model.lambda_noise);
  h.f64(cfg.uncertainty.lo);
  h.f64(cfg.uncertainty.hi);
  h.f64(step.dt);
  h.f64(step.t_final);
  h.u64(static_cast<std::uint64_t>(step.max_eta_retries));
  h.u64(step.snapshot_times.size());
  for (double t : step.snapshot_times) h.f64(t);
  h.str(cfg.initial_law);
  h.u64(cfg.master_seed);
}

std::uint64_t run_key(std::uint64_t fingerprint, const StreamId& stream) {
  return CounterRng::mix(fingerprint ^ CounterRng::mix(stream_key(stream)));
}

// Particles at every snapshot of one run from `stream`.
std::vector<std::vector<double>> simulate_particles(const ExperimentConfig& cfg, double z, std::size_t n,
                                                    const StreamId& stream) {
  const StepConfig step = cfg.step_config();
  ParticleEnsemble ens = init_ensemble(n, InitialLaw::parse(cfg.initial_law), stream);
  std::vector<std::vector<double>> out;
  run_observed(ens, cfg.model, z, step,
               [&out](double, const ParticleEnsemble& e) { out.push_back(e.velocities); });
  if (out.size() != step.snapshot_times.size()) {
    throw std::logic_error("snapshot count does not match the configured snapshot times");
  }
  return out;
}

SampleSet sample_set(std::span<const double> z, const std::vector<RunSnapshots>& runs, std::size_t s,
                     std::size_t particles) {
  SampleSet set;
  set.z_values.assign(z.begin(), z.end());
  set.particles = particles;
  set.histograms.reserve(runs.size());
  for (const auto& run : runs) set.histograms.push_back(run[s]);
  return set;
}

std::string hex16(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

void parallel_for(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& fn) {
  const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(std::max(1u, threads), count));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count || failed.load()) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        failed = true;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

std::optional<RunSnapshots> RunCache::find(std::uint64_t key) const {
  std::lock_guard lock(mutex_);
  if (auto it = runs_.find(key); it != runs_.end()) return it->second;
  return std::nullopt;
}

void RunCache::insert(std::uint64_t key, RunSnapshots runs) {
  std::lock_guard lock(mutex_);
  runs_.insert_or_assign(key, std::move(runs));
}

std::size_t RunCache::size() const {
  std::lock_guard lock(mutex_);
  return runs_.size();
}

std::uint64_t dynamics_fingerprint(const ExperimentConfig& cfg) {
  Fnv1a h;
  hash_dynamics(h, cfg);
  h.u64(cfg.n_bins);
  return h.value();
}

DensityHistogram initial_histogram(const ExperimentConfig& cfg) {
  const VelocityGrid grid = cfg.grid();
  const InitialLaw law = InitialLaw::parse(cfg.initial_law);
  DensityHistogram f0(grid);
  if (law.kind == InitialLaw::Kind::uniform) {
    std::fill(f0.values.begin(), f0.values.end(), 1.0);
  } else {
    f0.values[grid.bin_of(law.value)] = 1.0 / grid.dv();
  }
  return f0;
}

std::vector<double> draw_z_batch(const ExperimentConfig& cfg, std::uint32_t batch, std::size_t count,
                                 std::uint32_t replication) {
  std::vector<double> z(count);
  for (std::size_t k = 0; k < count; ++k) {
    CounterRng rng(StreamId{cfg.master_seed, StreamPurpose::z_draw, batch, k, 0, replication});
    z[k] = cfg.uncertainty.from_unit(rng.uniform());
  }
  return z;
}

std::vector<RunSnapshots> simulate_batch(const ExperimentConfig& cfg, std::span<const double> z_values,
                                         std::uint32_t batch, std::size_t n_particles,
                                         std::uint32_t replication, RunCache& cache) {
  const std::uint64_t fingerprint = dynamics_fingerprint(cfg);
  const VelocityGrid grid = cfg.grid();
  std::vector<RunSnapshots> out(z_values.size());
  parallel_for(z_values.size(), resolve_threads(cfg.threads), [&](std::size_t k) {
    const StreamId stream{cfg.master_seed, StreamPurpose::particles, batch, k, n_particles, replication};
    const std::uint64_t key = run_key(fingerprint, stream);
    if (auto hit = cache.find(key)) {
      out[k] = std::move(*hit);
      return;
    }
    RunSnapshots hists;
    for (const auto& particles : simulate_particles(cfg, z_values[k], n_particles, stream)) {
      hists.push_back(reconstruct_histogram(particles, grid));
    }
    cache.insert(key, hists);
    out[k] = std::move(hists);
  });
  return out;
}

ReferenceSolution reference_solution(const ExperimentConfig& cfg) {
  cfg.validate();
  ReferenceSolution ref;
  ref.times = cfg.snapshots();
  ref.rule = gauss_legendre_uniform(cfg.gl_nodes, cfg.uncertainty.lo, cfg.uncertainty.hi);
  const VelocityGrid grid = cfg.grid();

  std::filesystem::path dir;
  if (!cfg.cache_dir.empty()) {
    Fnv1a h;
    hash_dynamics(h, cfg);
    h.u64(cfg.n_ref);
    h.u64(cfg.gl_nodes);
    dir = std::filesystem::path(cfg.cache_dir) / ("ref-" + hex16(h.value()));
    std::filesystem::create_directories(dir);
  }

  std::vector<RunSnapshots> per_node(cfg.gl_nodes);
  parallel_for(cfg.gl_nodes, resolve_threads(cfg.threads), [&](std::size_t i) {
    std::vector<std::vector<double>> particles;
    const auto file = dir.empty() ? dir : dir / ("node" + std::to_string(i) + ".kuq");
    if (!file.empty() && std::filesystem::exists(file)) {
      try {
        std::ifstream in(file, std::ios::binary);
        for (std::size_t s = 0; s < ref.times.size(); ++s) {
          SnapshotData snap = read_snapshot(in);
          if (snap.velocities.size() != cfg.n_ref) throw std::runtime_error("stale reference dump");
          particles.push_back(std::move(snap.velocities));
        }
      } catch (const std::exception&) {
        particles.clear();
      }
    }
    if (particles.empty()) {
      const StreamId stream{cfg.master_seed, StreamPurpose::reference, 0, i, cfg.n_ref, 0};
      particles = simulate_particles(cfg, ref.rule.nodes[i], cfg.n_ref, stream);
      if (!file.empty()) {
        const auto tmp = file.string() + ".tmp";
        {
          std::ofstream out(tmp, std::ios::binary);
          for (std::size_t s = 0; s < particles.size(); ++s) write_snapshot(out, ref.times[s], particles[s]);
        }
        std::filesystem::rename(tmp, file);
      }
    }
    for (const auto& p : particles) per_node[i].push_back(reconstruct_histogram(p, grid));
  });

  for (std::size_t s = 0; s < ref.times.size(); ++s) {
    DensityHistogram mean(grid);
    for (std::size_t i = 0; i < cfg.gl_nodes; ++i) {
      for (std::size_t b = 0; b < grid.n_bins(); ++b) mean.values[b] += ref.rule.weights[i] * per_node[i][s].values[b];
    }
    ref.histograms.push_back(std::move(mean));
  }
  return ref;
}

std::vector<EstimatorReport> estimate_replication(const ExperimentConfig& cfg, std::uint32_t replication,
                                                  RunCache& cache) {
  cfg.validate();
  const std::size_t m = cfg.n_samples;
  const std::size_t n = cfg.n_particles;
  const std::vector<double> times = cfg.snapshots();
  const DensityHistogram f0 = initial_histogram(cfg);
  const ExpectationMethod expectation = cfg.surrogate_method(replication);
  const LambdaMode mode = cfg.lambda_mode();

  auto uses = [&cfg](Method method) {
    return std::find(cfg.methods.begin(), cfg.methods.end(), method) != cfg.methods.end();
  };
  const bool mlmc3 = uses(Method::mlmc3);
  const bool mlmc2 = uses(Method::mlmc2);

  // Fine-level batch shared by every method.
  const std::vector<double> z0 = draw_z_batch(cfg, 0, m, replication);
  const auto fine = simulate_batch(cfg, z0, 0, n, replication, cache);

  std::vector<RunSnapshots> top_coarse, mid_fine, mid_coarse, bottom;
  std::vector<double> z1, z2;
  if (mlmc2 || mlmc3) {
    top_coarse = simulate_batch(cfg, z0, 0, n / 2, replication, cache);
    z1 = draw_z_batch(cfg, 1, 2 * m, replication);
    mid_fine = simulate_batch(cfg, z1, 1, n / 2, replication, cache);
  }
  if (mlmc3) {
    mid_coarse = simulate_batch(cfg, z1, 1, n / 4, replication, cache);
    z2 = draw_z_batch(cfg, 2, 4 * m, replication);
    bottom = simulate_batch(cfg, z2, 2, n / 4, replication, cache);
  }
  std::vector<double> zh;
  if (uses(Method::hierarchical)) zh = draw_z_batch(cfg, kHierarchyBatch, cfg.hierarchy_samples, replication);

  std::vector<EstimatorReport> reports;
  for (std::size_t s = 0; s < times.size(); ++s) {
    const double t = times[s];
    const SampleSet high = sample_set(z0, fine, s, n);
    auto surrogate = [&](SurrogateKind kind, std::span<const double> z) {
      return evaluate_surrogate(kind, t, z, cfg.uncertainty, cfg.model, f0, expectation);
    };

    for (Method method : cfg.methods) {
      EstimatorReport report;
      switch (method) {
        case Method::mc:
          report = mc_estimate(high);
          break;
        case Method::bf_steady:
          report = control_variate_estimate(high, surrogate(SurrogateKind::steady_state, z0), mode);
          break;
        case Method::bf_bgk:
          report = control_variate_estimate(high, surrogate(SurrogateKind::bgk, z0), mode);
          break;
        case Method::hierarchical: {
          const SurrogateEvaluation steady_h = surrogate(SurrogateKind::steady_state, zh);
          const SurrogateEvaluation bgk_h = surrogate(SurrogateKind::bgk, zh);
          const SurrogateEvaluation bgk_0 = surrogate(SurrogateKind::bgk, z0);
          HierarchyInput input;
          input.base_mean = steady_h.expectation;
          input.levels.push_back({zh, steady_h.per_sample, bgk_h.per_sample, 0});
          input.levels.push_back({z0, bgk_0.per_sample, high.histograms, n});
          const LambdaMode modes[] = {mode, mode};
          report = hierarchical_estimate(input, modes);
          break;
        }
        case Method::mlmc2: {
          const MlmcLevel levels[] = {
              {sample_set(z1, mid_fine, s, n / 2), std::nullopt},
              {high, sample_set(z0, top_coarse, s, n / 2)},
          };
          report = mlmc_estimate(LevelSchedule::halving(2, m, n), levels);
          break;
        }
        case Method::mlmc3: {
          const MlmcLevel levels[] = {
              {sample_set(z2, bottom, s, n / 4), std::nullopt},
              {sample_set(z1, mid_fine, s, n / 2), sample_set(z1, mid_coarse, s, n / 4)},
              {high, sample_set(z0, top_coarse, s, n / 2)},
          };
          report = mlmc_estimate(LevelSchedule::halving(3, m, n), levels);
          break;
        }
      }
      report.method = std::string(method_name(method));
      report.time = t;
      reports.push_back(std::move(report));
    }
  }
  return reports;
}

ExperimentResult run_uq_experiment(const ExperimentConfig& cfg, const ReferenceSolution& reference,
                                   RunCache& cache) {
  cfg.validate();
  if (reference.times != cfg.snapshots()) throw std::invalid_argument("reference snapshots differ from config");
  ExperimentResult result;
  for (std::uint32_t r = 0; r < cfg.replications; ++r) {
    for (auto& report : estimate_replication(cfg, r, cache)) {
      const auto s = static_cast<std::size_t>(
          std::find(reference.times.begin(), reference.times.end(), report.time) - reference.times.begin());
      result.errors.records.push_back(
          {report.time, parse_method(report.method), r, relative_error(report.mean, reference.histograms[s])});
      result.reports.push_back({r, std::move(report)});
    }
  }
  return result;
}

std::vector<SweepRow> convergence_sweep(const ExperimentConfig& cfg, std::span<const std::size_t> m_list,
                                        const ReferenceSolution& reference, RunCache& cache) {
  if (m_list.size() < 3) throw std::invalid_argument("a convergence sweep needs at least three M values");
  if (!std::is_sorted(m_list.begin(), m_list.end()) ||
      std::adjacent_find(m_list.begin(), m_list.end()) != m_list.end()) {
    throw std::invalid_argument("M values must be strictly increasing");
  }
  const std::size_t final_index = reference.times.size() - 1;

  std::vector<SweepRow> rows;
  for (std::size_t m : m_list) {
    ExperimentConfig at_m = cfg;
    at_m.n_samples = m;
    const std::size_t first = rows.size();
    for (Method method : cfg.methods) rows.push_back({m, method, 0.0, {}});
    for (std::uint32_t r = 0; r < cfg.replications; ++r) {
      for (const auto& report : estimate_replication(at_m, r, cache)) {
        if (report.time != reference.times[final_index]) continue;
        const Method method = parse_method(report.method);
        for (std::size_t i = first; i < rows.size(); ++i) {
          if (rows[i].method == method) {
            rows[i].errors.push_back(relative_error(report.mean, reference.histograms[final_index]));
          }
        }
      }
    }
    for (std::size_t i = first; i < rows.size(); ++i) rows[i].median_error = median(rows[i].errors);
  }
  return rows;
}

double loglog_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("slope needs >= 2 paired points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0)) throw std::invalid_argument("log-log slope needs positive data");
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(x.size());
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  if (sxx == 0.0) throw std::invalid_argument("slope needs distinct x values");
  return sxy / sxx;
}

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median of an empty sample");
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  const double upper = values[mid];
  if (values.size() % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

}  // namespace kuq
