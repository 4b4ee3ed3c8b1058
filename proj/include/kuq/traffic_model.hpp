#pragma once

#include <utility>
#include <vector>

namespace kuq {

/// Physical and scaling constants of the space-homogeneous traffic model.
///
/// The interaction strength, the noise variance and the relaxation time all
/// follow from the single scaling parameter epsilon:
///   gamma = epsilon, sigma^2 = lambda_noise * epsilon, tau = epsilon / 2.
struct ModelParams {
  double rho = 0.4;           ///< traffic density in [0,1]
  double epsilon = 1.0;       ///< scaling parameter, > 0
  double lambda_noise = 1.0;  ///< noise proportionality (0 switches noise off)
  double nu = 0.5;            ///< BGK relaxation rate
  double c_admiss = 1.0;      ///< admissibility constant

  double gamma() const noexcept { return epsilon; }
  double sigma2() const noexcept { return lambda_noise * epsilon; }
  double tau() const noexcept { return epsilon / 2.0; }

  /// Throws std::invalid_argument when a field is out of its domain.
  void validate() const;
};

enum class UncertaintyFamily { uniform };

/// Law of the uncertain interaction exponent z.
struct UncertaintySpec {
  UncertaintyFamily family = UncertaintyFamily::uniform;
  double lo = 1.0;
  double hi = 3.0;

  void validate() const;
  double pdf(double z) const noexcept;
  /// Maps u in [0,1) to a draw of z (inverse CDF).
  double from_unit(double u) const noexcept { return lo + (hi - lo) * u; }
};

/// P(rho; z) = (1 - rho)^z. Throws std::domain_error for rho outside [0,1]
/// or z <= 0.
double acceleration_probability(double rho, double z);

/// U_inf = P / (P + (1 - P)^2), the fixed point of U = P (1 + (1 - P) U).
double equilibrium_mean_velocity(double p);

/// a(rho) = rho (1 - rho).
double diffusion_amplitude(double rho);

/// D(rho, v) = a(rho) sqrt(v (1 - v)).
double diffusion_coefficient(double rho, double v);

/// I(v, v*) = P (1 - v) + (1 - P) (P v* - v).
double interaction(double v, double v_star, double p);

struct CandidateVelocity {
  double value;
  bool in_range;  ///< false when value left [0,1]; never clamped here
};

/// v' = v + eps I(v, v*) + sqrt(eps lambda) D(v) eta. Requires epsilon <= 1.
CandidateVelocity post_interaction_velocity(double v, double v_star, double z, double eta,
                                            const ModelParams& params);

struct AdmissibilityReport {
  double eta_bound = 0.0;
  double eta_limit = 0.0;  ///< c (1 - gamma)
  bool eta_condition_holds = false;
  /// cD(v) <= min(v, 1-v) fails exactly on (0, w) and (1 - w, 1).
  double boundary_width = 0.0;
  std::vector<std::pair<double, double>> violating_intervals;

  bool diffusion_condition_holds() const noexcept { return violating_intervals.empty(); }
};

/// Diagnostic only: reports which sufficient admissibility conditions fail.
AdmissibilityReport admissibility_check(const ModelParams& params, double eta_bound);

/// Closed-form mean velocity of the Boltzmann dynamics,
/// dU/dt = P - (1 - P + P^2) U, started from U(0) = u0.
double mean_velocity_exact(double t, double z, double u0, const ModelParams& params);

}  // namespace kuq
