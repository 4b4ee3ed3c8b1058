#include "kuq/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace kuq {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Values of bin i across a batch of histograms, in sample order.
void gather_bin(const std::vector<DensityHistogram>& batch, std::size_t bin, std::vector<double>& out) {
  out.resize(batch.size());
  for (std::size_t k = 0; k < batch.size(); ++k) out[k] = batch[k].values[bin];
}

void require_common_grid(const std::vector<DensityHistogram>& batch, const VelocityGrid& grid) {
  for (const auto& h : batch) {
    if (!(h.grid == grid) || h.values.size() != grid.n_bins()) {
      throw std::invalid_argument("sample histograms are not on a common grid");
    }
  }
}

double variance_of_mean(std::span<const double> x) {
  return x.size() < 2 ? kNaN : sample_variance(x) / static_cast<double>(x.size());
}

std::vector<double> resolve_lambdas(const LambdaMode& mode, const SampleSet& high,
                                    const SurrogateEvaluation& low) {
  const std::size_t bins = low.expectation.size();
  if (const auto* fixed = std::get_if<FixedLambda>(&mode)) return std::vector<double>(bins, fixed->value);
  if (const auto* given = std::get_if<GivenLambda>(&mode)) {
    if (given->per_bin.size() != bins) throw std::invalid_argument("given lambda has wrong length");
    return given->per_bin;
  }
  return optimal_lambdas(high, low, std::get<OptimalLambda>(mode).centering);
}

void validate_alignment(const SampleSet& high, const SurrogateEvaluation& low) {
  high.validate();
  if (low.per_sample.size() != high.size() || low.z_values.size() != high.size()) {
    throw std::invalid_argument("surrogate evaluation is not aligned with the sample set");
  }
  if (!std::equal(low.z_values.begin(), low.z_values.end(), high.z_values.begin())) {
    throw std::invalid_argument("surrogate evaluated at different z than the samples");
  }
  if (low.expectation.values.empty()) throw std::invalid_argument("surrogate expectation is missing");
  const VelocityGrid& grid = high.histograms.front().grid;
  require_common_grid(low.per_sample, grid);
  if (!(low.expectation.grid == grid) || low.expectation.size() != grid.n_bins()) {
    throw std::invalid_argument("surrogate expectation is on a different grid");
  }
}

const char* centering_name(Centering c) {
  return c == Centering::exact_mean ? "exact_mean" : "sample_mean";
}

}  // namespace

void SampleSet::validate(std::size_t min_size) const {
  if (histograms.size() < min_size) {
    throw std::invalid_argument("sample set needs at least " + std::to_string(min_size) + " samples");
  }
  if (z_values.size() != histograms.size()) throw std::invalid_argument("z values and histograms differ in count");
  if (!histograms.empty()) require_common_grid(histograms, histograms.front().grid);
}

double sample_mean(std::span<const double> x) {
  if (x.empty()) throw std::invalid_argument("mean of an empty sample");
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

double sample_variance(std::span<const double> x, std::optional<double> exact_mean) {
  if (x.size() < 2) throw std::invalid_argument("variance needs at least two samples");
  const double m = static_cast<double>(x.size());
  if (exact_mean) {
    double s = 0.0;
    for (double v : x) s += (v - *exact_mean) * (v - *exact_mean);
    return s / (m - 1.0);
  }
  // Shifted by x[0]: exactly zero for constant data.
  double s1 = 0.0, s2 = 0.0;
  for (double v : x) {
    s1 += v - x[0];
    s2 += (v - x[0]) * (v - x[0]);
  }
  return (s2 - s1 * s1 / m) / (m - 1.0);
}

double sample_covariance(std::span<const double> x, std::span<const double> y,
                         std::optional<double> y_exact_mean) {
  if (x.size() != y.size()) throw std::invalid_argument("covariance of samples of different length");
  if (x.size() < 2) throw std::invalid_argument("covariance needs at least two samples");
  const double cx = sample_mean(x);
  const double cy = y_exact_mean ? *y_exact_mean : sample_mean(y);
  double s = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) s += (x[k] - cx) * (y[k] - cy);
  return s / static_cast<double>(x.size() - 1);
}

double optimal_lambda(std::span<const double> high, std::span<const double> low,
                      std::optional<double> low_exact_mean) {
  double scale = low_exact_mean ? std::abs(*low_exact_mean) : 0.0;
  for (double v : low) scale = std::max(scale, std::abs(v));
  const double var = sample_variance(low, low_exact_mean);
  if (!(var > 1e-14 * scale * scale)) return 0.0;
  return sample_covariance(high, low, low_exact_mean) / var;
}

EstimatorReport mc_estimate(const SampleSet& samples) {
  samples.validate(1);
  const VelocityGrid& grid = samples.histograms.front().grid;
  EstimatorReport report;
  report.method = "mc";
  report.mean = DensityHistogram(grid);
  report.variance.resize(grid.n_bins());
  std::vector<double> col;
  for (std::size_t i = 0; i < grid.n_bins(); ++i) {
    gather_bin(samples.histograms, i, col);
    report.mean.values[i] = sample_mean(col);
    report.variance[i] = variance_of_mean(col);
  }
  report.budgets = {{0, samples.size(), samples.particles}};
  return report;
}

std::vector<double> optimal_lambdas(const SampleSet& high, const SurrogateEvaluation& low,
                                    Centering centering) {
  validate_alignment(high, low);
  if (high.size() < 2) throw std::invalid_argument("optimal lambda needs at least two samples");
  std::vector<double> out(low.expectation.size());
  std::vector<double> hc, lc;
  for (std::size_t i = 0; i < out.size(); ++i) {
    gather_bin(high.histograms, i, hc);
    gather_bin(low.per_sample, i, lc);
    const std::optional<double> exact =
        centering == Centering::exact_mean ? std::optional<double>(low.expectation.values[i]) : std::nullopt;
    out[i] = optimal_lambda(hc, lc, exact);
  }
  return out;
}

EstimatorReport control_variate_estimate(const SampleSet& high, const SurrogateEvaluation& low,
                                         const LambdaMode& mode) {
  validate_alignment(high, low);
  const std::vector<double> lambda = resolve_lambdas(mode, high, low);
  const VelocityGrid& grid = high.histograms.front().grid;
  const std::size_t m = high.size();

  EstimatorReport report;
  report.method = "control_variate";
  report.mean = DensityHistogram(grid);
  report.variance.resize(grid.n_bins());
  std::vector<double> hc, lc, combined(m);
  for (std::size_t i = 0; i < grid.n_bins(); ++i) {
    gather_bin(high.histograms, i, hc);
    gather_bin(low.per_sample, i, lc);
    const double e_low = low.expectation.values[i];
    // Grouped so that lambda = 0 gives the plain mean and low == high with
    // lambda = 1 gives e_low, both bit for bit.
    report.mean.values[i] = (sample_mean(hc) - lambda[i] * sample_mean(lc)) + lambda[i] * e_low;
    for (std::size_t k = 0; k < m; ++k) combined[k] = (hc[k] - lambda[i] * lc[k]) + lambda[i] * e_low;
    report.variance[i] = variance_of_mean(combined);
  }
  report.lambda = lambda;
  report.budgets = {{0, m, high.particles}};
  if (const auto* opt = std::get_if<OptimalLambda>(&mode)) report.centering = opt->centering;
  return report;
}

EstimatorReport hierarchical_estimate(const HierarchyInput& input, std::span<const LambdaMode> modes) {
  if (input.levels.empty()) throw std::invalid_argument("hierarchy needs at least one level");
  if (modes.size() != input.levels.size()) throw std::invalid_argument("one lambda mode per level required");
  const VelocityGrid& grid = input.base_mean.grid;
  if (input.base_mean.size() != grid.n_bins()) throw std::invalid_argument("base mean has wrong size");

  std::size_t prev_m = input.base_samples == 0 ? std::numeric_limits<std::size_t>::max() : input.base_samples;
  for (const HierarchyLevel& lvl : input.levels) {
    const std::size_t m = lvl.z_values.size();
    if (lvl.lower.size() != m || lvl.upper.size() != m) {
      throw std::invalid_argument("hierarchy batch: lower and upper models must share the z batch");
    }
    if (m < 2 || m > prev_m) throw std::invalid_argument("hierarchy schedule needs M_0 >= M_1 >= ... >= M_L >= 2");
    require_common_grid(lvl.lower, grid);
    require_common_grid(lvl.upper, grid);
    prev_m = m;
  }

  EstimatorReport report;
  report.method = "hierarchical";
  DensityHistogram estimate = input.base_mean;
  report.budgets.push_back({0, input.base_samples, 0});

  std::vector<double> uc, lc;
  for (std::size_t h = 0; h < input.levels.size(); ++h) {
    const HierarchyLevel& lvl = input.levels[h];
    const std::size_t m = lvl.z_values.size();
    std::vector<double> lambda(grid.n_bins());
    if (const auto* fixed = std::get_if<FixedLambda>(&modes[h])) {
      std::fill(lambda.begin(), lambda.end(), fixed->value);
    } else if (const auto* given = std::get_if<GivenLambda>(&modes[h])) {
      if (given->per_bin.size() != lambda.size()) throw std::invalid_argument("given lambda has wrong length");
      lambda = given->per_bin;
    }
    const auto* opt = std::get_if<OptimalLambda>(&modes[h]);

    DensityHistogram next(grid);
    std::vector<double> variance(grid.n_bins());
    std::vector<double> combined(m);
    for (std::size_t i = 0; i < grid.n_bins(); ++i) {
      gather_bin(lvl.upper, i, uc);
      gather_bin(lvl.lower, i, lc);
      const double below = estimate.values[i];
      if (opt) {
        lambda[i] = optimal_lambda(uc, lc, opt->centering == Centering::exact_mean
                                               ? std::optional<double>(below)
                                               : std::nullopt);
      }
      next.values[i] = (sample_mean(uc) - lambda[i] * sample_mean(lc)) + lambda[i] * below;
      for (std::size_t k = 0; k < m; ++k) combined[k] = (uc[k] - lambda[i] * lc[k]) + lambda[i] * below;
      variance[i] = variance_of_mean(combined);
    }
    estimate = std::move(next);
    report.lambda = std::move(lambda);
    report.variance = std::move(variance);
    report.budgets.push_back({h + 1, m, lvl.particles});
    if (opt) report.centering = opt->centering;
  }
  report.mean = std::move(estimate);
  return report;
}

LevelSchedule LevelSchedule::halving(std::size_t n_levels, std::size_t m_finest, std::size_t n_finest) {
  if (n_levels == 0) throw std::invalid_argument("schedule needs at least one level");
  LevelSchedule s;
  s.rule = RefinementRule::halving;
  for (std::size_t l = 0; l < n_levels; ++l) {
    const std::size_t steps = n_levels - 1 - l;  // coarsening steps below the finest level
    const std::size_t n = n_finest >> steps;
    if (n == 0 || (n << steps) != n_finest) throw std::invalid_argument("particle count not divisible for halving");
    s.levels.push_back({l, m_finest << steps, n});
  }
  return s;
}

EstimatorReport mlmc_estimate(const LevelSchedule& schedule, std::span<const MlmcLevel> levels) {
  if (levels.empty() || levels.size() != schedule.levels.size()) {
    throw std::invalid_argument("MLMC levels do not match the schedule");
  }
  for (std::size_t l = 0; l < levels.size(); ++l) {
    const LevelBudget& b = schedule.levels[l];
    const MlmcLevel& lvl = levels[l];
    lvl.fine.validate(1);
    if (lvl.fine.size() != b.samples || lvl.fine.particles != b.particles) {
      throw std::invalid_argument("MLMC level " + std::to_string(l) + " violates its budget");
    }
    if (l == 0) {
      if (lvl.coarse) throw std::invalid_argument("MLMC level 0 has no coarse partner");
      continue;
    }
    if (!lvl.coarse) throw std::invalid_argument("MLMC level " + std::to_string(l) + " lacks its coarse runs");
    const SampleSet& c = *lvl.coarse;
    c.validate(1);
    if (c.size() != lvl.fine.size() || !std::equal(c.z_values.begin(), c.z_values.end(), lvl.fine.z_values.begin())) {
      throw std::invalid_argument("MLMC fine and coarse runs must share the z batch");
    }
    if (c.particles != schedule.levels[l - 1].particles) {
      throw std::invalid_argument("MLMC coarse resolution must equal the previous level's");
    }
    if (!(c.histograms.front().grid == levels[0].fine.histograms.front().grid) ||
        !(lvl.fine.histograms.front().grid == levels[0].fine.histograms.front().grid)) {
      throw std::invalid_argument("MLMC levels are on different grids");
    }
    if (schedule.rule == RefinementRule::halving) {
      const LevelBudget& prev = schedule.levels[l - 1];
      if (prev.samples != 2 * b.samples || 2 * prev.particles != b.particles) {
        throw std::invalid_argument("MLMC schedule violates the doubling/halving rule");
      }
    }
  }

  const VelocityGrid& grid = levels[0].fine.histograms.front().grid;
  EstimatorReport report;
  report.method = "mlmc";
  report.mean = DensityHistogram(grid);
  report.variance.assign(grid.n_bins(), 0.0);
  std::vector<double> fc, cc;
  for (std::size_t i = 0; i < grid.n_bins(); ++i) {
    gather_bin(levels[0].fine.histograms, i, fc);
    double est = sample_mean(fc);
    double var = variance_of_mean(fc);
    for (std::size_t l = 1; l < levels.size(); ++l) {
      gather_bin(levels[l].fine.histograms, i, fc);
      gather_bin(levels[l].coarse->histograms, i, cc);
      est += sample_mean(fc) - sample_mean(cc);
      for (std::size_t k = 0; k < fc.size(); ++k) fc[k] -= cc[k];
      var += variance_of_mean(fc);
    }
    report.mean.values[i] = est;
    report.variance[i] = var;
  }
  for (const LevelBudget& b : schedule.levels) report.budgets.push_back(b);
  return report;
}

nlohmann::json to_json(const EstimatorReport& report) {
  nlohmann::json j;
  j["method"] = report.method;
  j["time"] = report.time;
  j["mean"] = report.mean.values;
  j["lambda"] = report.lambda ? nlohmann::json(*report.lambda) : nlohmann::json(nullptr);
  j["variance"] = report.variance;
  nlohmann::json budgets = nlohmann::json::array();
  for (const LevelBudget& b : report.budgets) {
    budgets.push_back({{"level", b.level}, {"M", b.samples}, {"N", b.particles}});
  }
  j["budgets"] = std::move(budgets);
  j["centering"] = report.centering ? nlohmann::json(centering_name(*report.centering)) : nlohmann::json(nullptr);
  return j;
}

}  // namespace kuq
