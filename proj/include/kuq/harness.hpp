#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <vector>

#include "kuq/config.hpp"
#include "kuq/estimators.hpp"
#include "kuq/quadrature.hpp"
#include "kuq/velocity_grid.hpp"

namespace kuq {

/// Runs fn(0..count-1) on up to `threads` workers. Each index runs exactly
/// once; callers write into index-owned slots, so results do not depend on
/// the worker count. The first exception thrown is rethrown after all workers stop.
void parallel_for(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& fn);

/// Histograms of one DSMC run at every configured snapshot.
using RunSnapshots = std::vector<DensityHistogram>;

/// Thread-safe memo of DSMC runs keyed by (dynamics fingerprint, particle stream).
class RunCache {
 public:
  std::optional<RunSnapshots> find(std::uint64_t key) const;
  void insert(std::uint64_t key, RunSnapshots runs);
  std::size_t size() const;

 private:
  mutable std::mutex mutex_;
  std::map<std::uint64_t, RunSnapshots> runs_;
};

/// Hash of every config field that changes DSMC output for a fixed stream.
std::uint64_t dynamics_fingerprint(const ExperimentConfig& cfg);

/// Initial law discretized on the grid; the f0 of the BGK surrogate.
DensityHistogram initial_histogram(const ExperimentConfig& cfg);

/// z draws k = 0..count-1 of a batch. Draw k depends only on (seed, batch, k,
/// replication), so shorter batches are prefixes of longer ones.
std::vector<double> draw_z_batch(const ExperimentConfig& cfg, std::uint32_t batch, std::size_t count,
                                 std::uint32_t replication);

/// One DSMC run per z at `n_particles`; result[k][s] is sample k at snapshot s.
/// Particle streams are keyed by (batch, k, n_particles, replication).
std::vector<RunSnapshots> simulate_batch(const ExperimentConfig& cfg, std::span<const double> z_values,
                                         std::uint32_t batch, std::size_t n_particles,
                                         std::uint32_t replication, RunCache& cache);

/// Gauss-Legendre collocation reference E[f](t) at every snapshot.
struct ReferenceSolution {
  std::vector<double> times;
  std::vector<DensityHistogram> histograms;
  QuadratureRule rule;
};

/// Computes the reference or loads the per-node particle dumps from
/// cfg.cache_dir. An empty cache_dir disables the disk cache.
ReferenceSolution reference_solution(const ExperimentConfig& cfg);

/// Estimators of replication r for every configured method at every snapshot,
/// ordered by snapshot then by method.
std::vector<EstimatorReport> estimate_replication(const ExperimentConfig& cfg, std::uint32_t replication,
                                                  RunCache& cache);

struct ErrorRecord {
  double time = 0.0;
  Method method = Method::mc;
  std::uint32_t replication = 0;
  double rel_err = 0.0;
};

struct ErrorSeries {
  std::vector<ErrorRecord> records;
};

struct ReplicationReport {
  std::uint32_t replication = 0;
  EstimatorReport report;
};

struct ExperimentResult {
  ErrorSeries errors;
  std::vector<ReplicationReport> reports;
};

ExperimentResult run_uq_experiment(const ExperimentConfig& cfg, const ReferenceSolution& reference,
                                   RunCache& cache);

struct SweepRow {
  std::size_t m = 0;
  Method method = Method::mc;
  double median_error = 0.0;
  std::vector<double> errors;  ///< one per replication
};

/// Error at t_final against M for every configured method. Replication r
/// reuses its first M draws when M grows.
std::vector<SweepRow> convergence_sweep(const ExperimentConfig& cfg, std::span<const std::size_t> m_list,
                                        const ReferenceSolution& reference, RunCache& cache);

/// Least-squares slope of log y against log x.
double loglog_slope(std::span<const double> x, std::span<const double> y);
double median(std::vector<double> values);

}  // namespace kuq
