#include "kuq/surrogates.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace kuq {

SteadyStateParams steady_state_params(double z, const ModelParams& params) {
  const double p = acceleration_probability(params.rho, z);
  const double a = diffusion_amplitude(params.rho);
  SteadyStateParams sp;
  sp.u_inf = equilibrium_mean_velocity(p);
  sp.alpha = params.lambda_noise * a * a;
  if (!(sp.alpha > 0.0)) {
    throw std::domain_error("steady state degenerates: alpha = lambda_noise a(rho)^2 is zero");
  }
  if (!(sp.u_inf > 0.0 && sp.u_inf < 1.0)) {
    throw std::domain_error("steady state needs 0 < U_inf < 1");
  }
  return sp;
}

BetaDensity::BetaDensity(const SteadyStateParams& sp) : a_(sp.shape_a()), b_(sp.shape_b()) {
  if (!(a_ > 0.0 && b_ > 0.0)) throw std::domain_error("Beta exponents must be positive");
  log_norm_ = std::lgamma(a_ + b_) - std::lgamma(a_) - std::lgamma(b_);
}

double BetaDensity::operator()(double v) const noexcept {
  if (v <= 0.0 || v >= 1.0) {
    const double e = v <= 0.0 ? a_ : b_;
    if (e > 1.0) return 0.0;
    if (e == 1.0) return std::exp(log_norm_);
    return HUGE_VAL;
  }
  return std::exp(log_norm_ + (a_ - 1.0) * std::log(v) + (b_ - 1.0) * std::log1p(-v));
}

BetaDensity steady_state_density(double z, const ModelParams& params) {
  return BetaDensity(steady_state_params(z, params));
}

DensityHistogram discretized_steady_state(double z, const ModelParams& params,
                                          const VelocityGrid& grid) {
  const BetaDensity f = steady_state_density(z, params);
  return evaluate_on_grid([&f](double v) { return f(v); }, grid);
}

DensityHistogram bgk_density(double t, const DensityHistogram& f0, const DensityHistogram& f_inf,
                             double nu) {
  if (!(t >= 0.0)) throw std::domain_error("BGK time must be non-negative");
  require_same_grid(f0, f_inf);
  const double w = std::exp(-nu * t);
  DensityHistogram out(f0.grid);
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    out.values[i] = w * f0.values[i] + (1.0 - w) * f_inf.values[i];
  }
  return out;
}

DensityHistogram bgk_density(double t, double z, const DensityHistogram& f0,
                             const ModelParams& params) {
  return bgk_density(t, f0, discretized_steady_state(z, params, f0.grid), params.nu);
}

SurrogateKind parse_surrogate_kind(std::string_view tag) {
  if (tag == "steady" || tag == "steady_state") return SurrogateKind::steady_state;
  if (tag == "bgk") return SurrogateKind::bgk;
  throw std::invalid_argument("unknown surrogate '" + std::string(tag) + "'");
}

DensityHistogram surrogate_density(SurrogateKind kind, double t, double z, const DensityHistogram& f0,
                                   const ModelParams& params) {
  switch (kind) {
    case SurrogateKind::steady_state:
      return discretized_steady_state(z, params, f0.grid);
    case SurrogateKind::bgk:
      return bgk_density(t, z, f0, params);
  }
  throw std::invalid_argument("unknown surrogate kind");
}

DensityHistogram surrogate_expectation(SurrogateKind kind, double t, const UncertaintySpec& spec,
                                       const ModelParams& params, const DensityHistogram& f0,
                                       const ExpectationMethod& method) {
  std::vector<double> mean = expectation_over(spec, method, [&](double z) {
    return surrogate_density(kind, t, z, f0, params).values;
  });
  return renormalized(DensityHistogram(f0.grid, std::move(mean)));
}

SurrogateEvaluation evaluate_surrogate(SurrogateKind kind, double t, std::span<const double> z_values,
                                       const UncertaintySpec& spec, const ModelParams& params,
                                       const DensityHistogram& f0, const ExpectationMethod& method) {
  SurrogateEvaluation eval;
  eval.z_values.assign(z_values.begin(), z_values.end());
  eval.per_sample.reserve(z_values.size());
  for (double z : z_values) eval.per_sample.push_back(surrogate_density(kind, t, z, f0, params));
  eval.expectation = surrogate_expectation(kind, t, spec, params, f0, method);
  return eval;
}

}  // namespace kuq
