#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "kuq/dsmc.hpp"
#include "kuq/estimators.hpp"
#include "kuq/surrogates.hpp"
#include "kuq/traffic_model.hpp"
#include "kuq/velocity_grid.hpp"

namespace kuq {

enum class Method { mc, bf_steady, bf_bgk, mlmc2, mlmc3, hierarchical };

std::string_view method_name(Method m) noexcept;
Method parse_method(std::string_view tag);

/// Everything one uncertainty-quantification experiment needs.
/// Serialized as flat JSON with the field names below.
struct ExperimentConfig {
  ModelParams model;
  UncertaintySpec uncertainty;

  std::size_t n_particles = 10000;  // N
  std::size_t n_samples = 30;       // M
  std::size_t n_bins = 100;         // N_v
  std::size_t n_ref = 100000;       // N_r
  std::size_t gl_nodes = 10;
  std::size_t replications = 10;

  double t_final = 40.0;
  double dt = 0.0;                    // 0 selects the largest divisor of t_final <= min(tau, 0.01)
  std::vector<double> snapshot_times; // empty selects {t_final / 4, t_final}
  std::string initial_law = "uniform";

  std::vector<Method> methods{Method::mc};
  std::optional<double> fixed_lambda;  // empty: optimal per-bin lambda
  Centering centering = Centering::exact_mean;

  std::size_t surrogate_nodes = 50;    // quadrature nodes for E[surrogate]
  std::size_t surrogate_samples = 0;   // > 0: estimate E[surrogate] from this many z draws instead
  std::size_t hierarchy_samples = 10000;

  std::uint64_t master_seed = 20240601;
  unsigned threads = 0;  // 0: KUQ_THREADS, then hardware concurrency
  std::string cache_dir = "kuq_cache";

  /// Throws std::invalid_argument on any violated invariant.
  void validate() const;

  StepConfig step_config() const;
  std::vector<double> snapshots() const;
  VelocityGrid grid() const { return VelocityGrid(n_bins); }
  LambdaMode lambda_mode() const;
  ExpectationMethod surrogate_method(std::uint32_t replication) const;
};

ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& cfg);
ExperimentConfig load_config(const std::string& path);

/// requested > 0 wins, then the KUQ_THREADS environment variable, then the hardware.
unsigned resolve_threads(unsigned requested);

}  // namespace kuq
