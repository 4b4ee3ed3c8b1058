#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string_view>
#include <type_traits>
#include <variant>
#include <vector>

#include "kuq/quadrature.hpp"
#include "kuq/rng.hpp"
#include "kuq/traffic_model.hpp"
#include "kuq/velocity_grid.hpp"

namespace kuq {

/// Parameters of the Fokker-Planck equilibrium, a Beta law with mean u_inf.
struct SteadyStateParams {
  double u_inf = 0.5;
  double alpha = 1.0;  ///< lambda_noise * a(rho)^2

  double shape_a() const noexcept { return 2.0 * u_inf / alpha; }
  double shape_b() const noexcept { return 2.0 * (1.0 - u_inf) / alpha; }
};

/// Throws std::domain_error when alpha vanishes (rho in {0,1} or no noise).
SteadyStateParams steady_state_params(double z, const ModelParams& params);

/// Beta(a, b) density with a log-domain normalizer.
class BetaDensity {
 public:
  explicit BetaDensity(const SteadyStateParams& sp);

  double operator()(double v) const noexcept;
  double a() const noexcept { return a_; }
  double b() const noexcept { return b_; }
  double mean() const noexcept { return a_ / (a_ + b_); }

 private:
  double a_;
  double b_;
  double log_norm_;
};

BetaDensity steady_state_density(double z, const ModelParams& params);

/// Steady state evaluated at cell centers and renormalized.
DensityHistogram discretized_steady_state(double z, const ModelParams& params,
                                          const VelocityGrid& grid);

/// BGK relaxation e^{-nu t} f0 + (1 - e^{-nu t}) f_inf.
DensityHistogram bgk_density(double t, const DensityHistogram& f0, const DensityHistogram& f_inf,
                             double nu);
DensityHistogram bgk_density(double t, double z, const DensityHistogram& f0,
                             const ModelParams& params);

enum class SurrogateKind { steady_state, bgk };
SurrogateKind parse_surrogate_kind(std::string_view tag);

/// Gauss-Legendre quadrature in z.
struct QuadratureExpectation {
  std::size_t nodes = 50;
};
/// Plain Monte Carlo over `count` fresh z draws from `stream`.
struct SamplingExpectation {
  std::size_t count = 10000;
  StreamId stream{0, StreamPurpose::surrogate};
};
using ExpectationMethod = std::variant<QuadratureExpectation, SamplingExpectation>;

namespace detail {
inline void accumulate(double& acc, double w, double x) { acc += w * x; }
inline void accumulate(std::vector<double>& acc, double w, const std::vector<double>& x) {
  if (acc.empty()) acc.assign(x.size(), 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) acc[i] += w * x[i];
}
}  // namespace detail

/// E_z[f(z)] for f returning double or std::vector<double>, by the chosen method.
template <class F>
auto expectation_over(const UncertaintySpec& spec, const ExpectationMethod& method, F&& f) {
  using R = std::decay_t<decltype(f(spec.lo))>;
  spec.validate();
  R acc{};
  if (const auto* q = std::get_if<QuadratureExpectation>(&method)) {
    const QuadratureRule rule = gauss_legendre_uniform(q->nodes, spec.lo, spec.hi);
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
      detail::accumulate(acc, rule.weights[i], f(rule.nodes[i]));
    }
  } else {
    const auto& s = std::get<SamplingExpectation>(method);
    if (s.count == 0) throw std::invalid_argument("sampling expectation needs count >= 1");
    CounterRng rng(s.stream);
    const double w = 1.0 / static_cast<double>(s.count);
    for (std::size_t k = 0; k < s.count; ++k) detail::accumulate(acc, w, f(spec.from_unit(rng.uniform())));
  }
  return acc;
}

/// Surrogate density at time t (the steady state ignores t and f0).
DensityHistogram surrogate_density(SurrogateKind kind, double t, double z, const DensityHistogram& f0,
                                   const ModelParams& params);

/// Per-bin expectation over z of the surrogate at time t, renormalized.
DensityHistogram surrogate_expectation(SurrogateKind kind, double t, const UncertaintySpec& spec,
                                       const ModelParams& params, const DensityHistogram& f0,
                                       const ExpectationMethod& method);

/// Surrogate values aligned with a sample batch plus the surrogate expectation.
struct SurrogateEvaluation {
  std::vector<double> z_values;
  std::vector<DensityHistogram> per_sample;
  DensityHistogram expectation;
};

SurrogateEvaluation evaluate_surrogate(SurrogateKind kind, double t, std::span<const double> z_values,
                                       const UncertaintySpec& spec, const ModelParams& params,
                                       const DensityHistogram& f0, const ExpectationMethod& method);

}  // namespace kuq
