#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

#include "kuq/rng.hpp"
#include "kuq/traffic_model.hpp"

namespace kuq {

/// Law of the initial velocities.
struct InitialLaw {
  enum class Kind { uniform, constant };
  Kind kind = Kind::uniform;
  double value = 0.0;  ///< used by Kind::constant

  static InitialLaw uniform() { return {Kind::uniform, 0.0}; }
  static InitialLaw constant(double v) { return {Kind::constant, v}; }
  /// Accepts "uniform" or "constant:<v>"; throws std::invalid_argument otherwise.
  static InitialLaw parse(std::string_view tag);
};

/// N vehicle velocities in [0,1] together with the random stream that evolves them.
struct ParticleEnsemble {
  std::vector<double> velocities;
  double time = 0.0;
  StreamId stream;
  CounterRng rng;

  std::size_t size() const noexcept { return velocities.size(); }
};

struct StepConfig {
  double dt = 0.0;
  double t_final = 0.0;
  std::vector<double> snapshot_times;
  int max_eta_retries = 50;

  /// Checks dt <= 2 tau and that snapshot times are sorted inside [0, t_final].
  void validate(const ModelParams& params) const;
  /// ceil(t_final / dt), ignoring round-off in the quotient.
  std::size_t step_count() const;
};

/// Largest dt <= min(tau, 0.01) dividing t_final / 4, snapshots at t_final / 4 and t_final.
StepConfig default_step_config(const ModelParams& params, double t_final);

ParticleEnsemble init_ensemble(std::size_t n, const InitialLaw& law, const StreamId& stream);

/// One time step of the stochastic particle scheme.
///
/// Each particle interacts independently with probability dt / (2 tau). Its
/// leader is drawn uniformly among the other particles from the pre-step
/// velocities, so the update does not depend on particle order. A candidate
/// outside [0,1] gets a fresh noise draw up to max_eta_retries times and is
/// clamped after that. Leaders are left unchanged.
void dsmc_step(ParticleEnsemble& ens, const ModelParams& params, double z, const StepConfig& cfg);

struct Snapshot {
  double time = 0.0;
  ParticleEnsemble ensemble;
};

/// Advances to t_final and calls `observe` at every distinct snapshot step and
/// at the final step. Snapshot times snap to the nearest step boundary.
void run_observed(ParticleEnsemble& ens, const ModelParams& params, double z, const StepConfig& cfg,
                  const std::function<void(double time, const ParticleEnsemble&)>& observe);

std::vector<Snapshot> run(ParticleEnsemble ens, const ModelParams& params, double z,
                          const StepConfig& cfg);

double ensemble_mean(std::span<const double> velocities);
inline double ensemble_mean(const ParticleEnsemble& ens) { return ensemble_mean(ens.velocities); }

// Binary snapshot dump: "KUQ1", u32 N, u64 bits of the time, then N float64,
// all little-endian.
void write_snapshot(std::ostream& out, double time, std::span<const double> velocities);

struct SnapshotData {
  double time = 0.0;
  std::vector<double> velocities;
};
SnapshotData read_snapshot(std::istream& in);

}  // namespace kuq
