#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "kuq/surrogates.hpp"
#include "kuq/velocity_grid.hpp"

namespace kuq {

/// M high-fidelity histograms at a common time, one per z draw.
struct SampleSet {
  std::vector<double> z_values;
  std::vector<DensityHistogram> histograms;
  std::size_t particles = 0;  ///< N per sample

  std::size_t size() const noexcept { return histograms.size(); }
  /// Checks alignment, a common grid and size() >= min_size.
  void validate(std::size_t min_size = 1) const;
};

/// How the low-fidelity samples are centered in Var_M and Cov_M.
enum class Centering { exact_mean, sample_mean };

struct LevelBudget {
  std::size_t level = 0;
  std::size_t samples = 0;    ///< M_h
  std::size_t particles = 0;  ///< N_h
};

struct EstimatorReport {
  std::string method;
  double time = 0.0;
  DensityHistogram mean;
  std::optional<std::vector<double>> lambda;  ///< per-bin control-variate coefficient
  /// Per-bin estimated variance of `mean` (NaN where fewer than two samples).
  std::vector<double> variance;
  std::vector<LevelBudget> budgets;
  std::optional<Centering> centering;
};

nlohmann::json to_json(const EstimatorReport& report);

double sample_mean(std::span<const double> x);
/// 1/(M-1) normalized; centered at `exact_mean` when given.
double sample_variance(std::span<const double> x, std::optional<double> exact_mean = std::nullopt);
/// x is centered at its sample mean, y at `y_exact_mean` when given.
double sample_covariance(std::span<const double> x, std::span<const double> y,
                         std::optional<double> y_exact_mean = std::nullopt);

/// Cov(high, low) / Var(low); zero when Var(low) is negligible against the data scale.
double optimal_lambda(std::span<const double> high, std::span<const double> low,
                      std::optional<double> low_exact_mean = std::nullopt);

EstimatorReport mc_estimate(const SampleSet& samples);

struct FixedLambda {
  double value = 1.0;
};
struct OptimalLambda {
  Centering centering = Centering::exact_mean;
};
/// Coefficients computed elsewhere, e.g. on held-out samples.
struct GivenLambda {
  std::vector<double> per_bin;
};
using LambdaMode = std::variant<FixedLambda, OptimalLambda, GivenLambda>;

/// Per-bin optimal coefficients of `low` as control variate for `high`.
std::vector<double> optimal_lambdas(const SampleSet& high, const SurrogateEvaluation& low,
                                    Centering centering = Centering::exact_mean);

/// E_M[high] - lambda (E_M[low] - E[low]) per bin.
EstimatorReport control_variate_estimate(const SampleSet& high, const SurrogateEvaluation& low,
                                         const LambdaMode& mode);

/// One batch of the recursive multi-fidelity chain: model h and model h+1
/// evaluated on the same z draws.
struct HierarchyLevel {
  std::vector<double> z_values;
  std::vector<DensityHistogram> lower;
  std::vector<DensityHistogram> upper;
  std::size_t particles = 0;
};

struct HierarchyInput {
  DensityHistogram base_mean;     ///< estimate of E[f_1]
  std::size_t base_samples = 0;   ///< M_0; 0 when base_mean is exact
  std::vector<HierarchyLevel> levels;  ///< h = 1..L, the last upper model is the full one
};

/// Recursive control-variate estimator over a chain of surrogates of
/// increasing fidelity. Level h uses est_{h-1}, the estimate of E[f_h] from
/// the level below, as the expectation of its control variate.
/// `modes` holds one entry per level.
EstimatorReport hierarchical_estimate(const HierarchyInput& input, std::span<const LambdaMode> modes);

enum class RefinementRule { free, halving };

/// Per level (coarsest first) the z-sample count M_h and particle count N_h.
struct LevelSchedule {
  std::vector<LevelBudget> levels;
  RefinementRule rule = RefinementRule::halving;

  /// L levels ending at (m_finest, n_finest), doubling M and halving N per coarsening step.
  static LevelSchedule halving(std::size_t n_levels, std::size_t m_finest, std::size_t n_finest);
};

/// Level 0 carries only `fine`; every other level pairs fine and coarse
/// runs on the same z batch.
struct MlmcLevel {
  SampleSet fine;
  std::optional<SampleSet> coarse;
};

/// Telescoping sum E[f_0] + sum_h E[f_h - f_{h-1}].
EstimatorReport mlmc_estimate(const LevelSchedule& schedule, std::span<const MlmcLevel> levels);

}  // namespace kuq
