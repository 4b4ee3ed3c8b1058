#include "kuq/traffic_model.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace kuq {

namespace {

void require_unit(double x, const char* name) {
  if (!(x >= 0.0 && x <= 1.0)) {
    throw std::domain_error(std::string(name) + " must lie in [0,1], got " + std::to_string(x));
  }
}

}  // namespace

void ModelParams::validate() const {
  if (!(rho >= 0.0 && rho <= 1.0)) throw std::invalid_argument("rho must lie in [0,1]");
  if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be positive");
  if (!(lambda_noise >= 0.0)) throw std::invalid_argument("lambda_noise must be non-negative");
  if (!(nu > 0.0)) throw std::invalid_argument("nu must be positive");
  if (!(c_admiss > 0.0)) throw std::invalid_argument("c_admiss must be positive");
}

void UncertaintySpec::validate() const {
  if (!(lo < hi)) throw std::invalid_argument("uncertainty support needs lo < hi");
  if (!(lo > 0.0)) throw std::invalid_argument("uncertainty support must satisfy lo > 0");
}

double UncertaintySpec::pdf(double z) const noexcept {
  return (z >= lo && z <= hi) ? 1.0 / (hi - lo) : 0.0;
}

double acceleration_probability(double rho, double z) {
  require_unit(rho, "rho");
  if (!(z > 0.0)) throw std::domain_error("z must be positive");
  return std::pow(1.0 - rho, z);
}

double equilibrium_mean_velocity(double p) {
  require_unit(p, "P");
  const double q = 1.0 - p;
  return p / (p + q * q);
}

double diffusion_amplitude(double rho) {
  require_unit(rho, "rho");
  return rho * (1.0 - rho);
}

double diffusion_coefficient(double rho, double v) {
  require_unit(v, "v");
  return diffusion_amplitude(rho) * std::sqrt(v * (1.0 - v));
}

double interaction(double v, double v_star, double p) {
  require_unit(v, "v");
  require_unit(v_star, "v_star");
  require_unit(p, "P");
  return p * (1.0 - v) + (1.0 - p) * (p * v_star - v);
}

CandidateVelocity post_interaction_velocity(double v, double v_star, double z, double eta,
                                            const ModelParams& params) {
  if (!(params.epsilon > 0.0 && params.epsilon <= 1.0)) {
    throw std::domain_error("post_interaction_velocity requires 0 < epsilon <= 1");
  }
  const double p = acceleration_probability(params.rho, z);
  const double drift = interaction(v, v_star, p);
  const double noise = std::sqrt(params.epsilon * params.lambda_noise) *
                       diffusion_coefficient(params.rho, v) * eta;
  const double out = v + params.epsilon * drift + noise;
  return {out, out >= 0.0 && out <= 1.0};
}

AdmissibilityReport admissibility_check(const ModelParams& params, double eta_bound) {
  AdmissibilityReport report;
  report.eta_bound = eta_bound;
  report.eta_limit = params.c_admiss * (1.0 - params.gamma());
  report.eta_condition_holds = std::abs(eta_bound) <= report.eta_limit;

  // For v <= 1/2: c a sqrt(v(1-v)) <= v  <=>  v >= c^2 a^2 / (1 + c^2 a^2).
  // The mirror image holds on the upper half; v in {0,1} satisfies it with equality.
  const double ca = params.c_admiss * params.rho * (1.0 - params.rho);
  const double k = ca * ca;
  report.boundary_width = k / (1.0 + k);
  if (report.boundary_width > 0.0) {
    const double w = report.boundary_width;
    if (w >= 0.5) {
      report.violating_intervals.emplace_back(0.0, 1.0);
    } else {
      report.violating_intervals.emplace_back(0.0, w);
      report.violating_intervals.emplace_back(1.0 - w, 1.0);
    }
  }
  return report;
}

double mean_velocity_exact(double t, double z, double u0, const ModelParams& params) {
  if (!(t >= 0.0)) throw std::domain_error("t must be non-negative");
  const double p = acceleration_probability(params.rho, z);
  const double u_inf = equilibrium_mean_velocity(p);
  const double rate = 1.0 - p + p * p;
  return u_inf + (u0 - u_inf) * std::exp(-rate * t);
}

}  // namespace kuq
