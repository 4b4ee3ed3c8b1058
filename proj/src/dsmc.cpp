#include "kuq/dsmc.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

namespace kuq {

namespace {

constexpr double kSqrt3 = 1.7320508075688772;

// Interaction rule with the z-dependent constants hoisted out of the particle loop.
struct ScaledRule {
  double p;
  double eps;
  double noise;  // sqrt(eps * lambda) * a(rho)

  ScaledRule(const ModelParams& params, double z)
      : p(acceleration_probability(params.rho, z)),
        eps(params.epsilon),
        noise(std::sqrt(params.epsilon * params.lambda_noise) * diffusion_amplitude(params.rho)) {}

  double apply(double v, double v_star, double eta) const noexcept {
    const double drift = p * (1.0 - v) + (1.0 - p) * (p * v_star - v);
    return v + eps * drift + noise * std::sqrt(v * (1.0 - v)) * eta;
  }
};

// eta ~ U[-sqrt3, sqrt3] from 32 random bits.
inline double eta_from_bits(std::uint64_t bits32) noexcept {
  const double u = (static_cast<double>(bits32) + 0.5) * 0x1.0p-32;
  return kSqrt3 * (2.0 * u - 1.0);
}

void put_u32(std::ostream& out, std::uint32_t x) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((x >> (8 * i)) & 0xffu);
  out.write(b, 4);
}

void put_u64(std::ostream& out, std::uint64_t x) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((x >> (8 * i)) & 0xffu);
  out.write(b, 8);
}

std::uint64_t get_le(std::istream& in, int bytes) {
  unsigned char b[8] = {};
  in.read(reinterpret_cast<char*>(b), bytes);
  if (!in) throw std::runtime_error("truncated snapshot stream");
  std::uint64_t x = 0;
  for (int i = bytes - 1; i >= 0; --i) x = (x << 8) | b[i];
  return x;
}

}  // namespace

InitialLaw InitialLaw::parse(std::string_view tag) {
  if (tag == "uniform") return uniform();
  constexpr std::string_view prefix = "constant:";
  if (tag.substr(0, prefix.size()) == prefix) {
    const std::string rest(tag.substr(prefix.size()));
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(rest, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == rest.size() && used > 0 && v >= 0.0 && v <= 1.0) return constant(v);
  }
  throw std::invalid_argument("unknown initial law '" + std::string(tag) + "'");
}

void StepConfig::validate(const ModelParams& params) const {
  const double two_tau = 2.0 * params.tau();
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
  if (dt > two_tau * (1.0 + 1e-12)) {
    throw std::invalid_argument("dt must not exceed 2 tau (interaction probability > 1)");
  }
  if (!(t_final >= 0.0)) throw std::invalid_argument("t_final must be non-negative");
  if (!std::is_sorted(snapshot_times.begin(), snapshot_times.end())) {
    throw std::invalid_argument("snapshot times must be sorted");
  }
  for (double t : snapshot_times) {
    if (t < 0.0 || t > t_final) throw std::invalid_argument("snapshot time outside [0, t_final]");
  }
  if (max_eta_retries < 0) throw std::invalid_argument("max_eta_retries must be >= 0");
}

std::size_t StepConfig::step_count() const {
  if (t_final <= 0.0) return 0;
  return static_cast<std::size_t>(std::ceil(t_final / dt - 1e-9));
}

StepConfig default_step_config(const ModelParams& params, double t_final) {
  StepConfig cfg;
  const double dt_max = std::min(params.tau(), 0.01);
  // Largest step not above dt_max that divides t_final / 4.
  cfg.dt = t_final > 0.0 ? t_final / (4.0 * std::ceil(t_final / (4.0 * dt_max) - 1e-9)) : dt_max;
  cfg.t_final = t_final;
  cfg.snapshot_times = {t_final / 4.0, t_final};
  return cfg;
}

ParticleEnsemble init_ensemble(std::size_t n, const InitialLaw& law, const StreamId& stream) {
  if (n == 0) throw std::invalid_argument("ensemble needs at least one particle");
  ParticleEnsemble ens;
  ens.stream = stream;
  ens.rng = CounterRng(stream);
  ens.velocities.resize(n);
  switch (law.kind) {
    case InitialLaw::Kind::uniform:
      for (double& v : ens.velocities) v = ens.rng.uniform();
      break;
    case InitialLaw::Kind::constant:
      if (!(law.value >= 0.0 && law.value <= 1.0)) {
        throw std::invalid_argument("constant initial velocity must lie in [0,1]");
      }
      std::fill(ens.velocities.begin(), ens.velocities.end(), law.value);
      break;
  }
  return ens;
}

void dsmc_step(ParticleEnsemble& ens, const ModelParams& params, double z, const StepConfig& cfg) {
  const double two_tau = 2.0 * params.tau();
  if (!(cfg.dt >= 0.0) || cfg.dt > two_tau * (1.0 + 1e-12)) {
    throw std::invalid_argument("dt must lie in [0, 2 tau]");
  }
  const double p_interact = std::min(1.0, cfg.dt / two_tau);
  const std::size_t n = ens.velocities.size();
  if (n >= 2 && p_interact > 0.0) {
    const ScaledRule rule(params, z);
    CounterRng& rng = ens.rng;

    thread_local std::vector<double> frozen;
    thread_local std::vector<std::uint32_t> active;
    frozen.assign(ens.velocities.begin(), ens.velocities.end());
    active.resize(n + 1);

    // Branch-free Bernoulli selection, two particles per 64-bit draw.
    std::size_t n_active = 0;
    if (p_interact >= 1.0) {
      for (std::size_t i = 0; i < n; ++i) active[i] = static_cast<std::uint32_t>(i);
      n_active = n;
    } else {
      const auto threshold = static_cast<std::uint64_t>(std::ldexp(p_interact, 32));
      for (std::size_t i = 0; i < n; i += 2) {
        const std::uint64_t r = rng();
        active[n_active] = static_cast<std::uint32_t>(i);
        n_active += (r & 0xffffffffu) < threshold;
        active[n_active] = static_cast<std::uint32_t>(i + 1);
        n_active += (i + 1 < n) & ((r >> 32) < threshold);
      }
    }

    const std::uint64_t partners = n - 1;
    for (std::size_t a = 0; a < n_active; ++a) {
      const std::uint32_t i = active[a];
      const std::uint64_t r = rng();
      std::uint64_t j = ((r >> 32) * partners) >> 32;
      j += (j >= i);
      const double v = frozen[i];
      double out = rule.apply(v, frozen[j], eta_from_bits(r & 0xffffffffu));
      for (int tries = 0; (out < 0.0 || out > 1.0) && tries < cfg.max_eta_retries; ++tries) {
        out = rule.apply(v, frozen[j], eta_from_bits(rng() & 0xffffffffu));
      }
      ens.velocities[i] = std::clamp(out, 0.0, 1.0);
    }
  }
  ens.time += cfg.dt;
}

void run_observed(ParticleEnsemble& ens, const ModelParams& params, double z, const StepConfig& cfg,
                  const std::function<void(double, const ParticleEnsemble&)>& observe) {
  params.validate();
  cfg.validate(params);
  const std::size_t n_steps = cfg.step_count();
  const double t0 = ens.time;

  std::vector<std::size_t> marks;
  marks.reserve(cfg.snapshot_times.size() + 1);
  for (double t : cfg.snapshot_times) {
    marks.push_back(std::min(n_steps, static_cast<std::size_t>(std::llround(t / cfg.dt))));
  }
  marks.push_back(n_steps);
  std::sort(marks.begin(), marks.end());
  marks.erase(std::unique(marks.begin(), marks.end()), marks.end());

  auto next = marks.begin();
  for (std::size_t k = 0;; ++k) {
    if (next != marks.end() && *next == k) {
      observe(ens.time, ens);
      ++next;
    }
    if (k == n_steps) break;
    dsmc_step(ens, params, z, cfg);
    ens.time = t0 + static_cast<double>(k + 1) * cfg.dt;
  }
}

std::vector<Snapshot> run(ParticleEnsemble ens, const ModelParams& params, double z,
                          const StepConfig& cfg) {
  std::vector<Snapshot> out;
  run_observed(ens, params, z, cfg, [&out](double t, const ParticleEnsemble& e) {
    out.push_back({t, e});
  });
  return out;
}

double ensemble_mean(std::span<const double> velocities) {
  if (velocities.empty()) throw std::invalid_argument("ensemble_mean of an empty ensemble");
  double sum = 0.0;
  for (double v : velocities) sum += v;
  return sum / static_cast<double>(velocities.size());
}

void write_snapshot(std::ostream& out, double time, std::span<const double> velocities) {
  if (velocities.size() > 0xffffffffu) throw std::length_error("snapshot too large for u32 count");
  out.write("KUQ1", 4);
  put_u32(out, static_cast<std::uint32_t>(velocities.size()));
  put_u64(out, std::bit_cast<std::uint64_t>(time));
  for (double v : velocities) put_u64(out, std::bit_cast<std::uint64_t>(v));
  if (!out) throw std::runtime_error("failed to write snapshot");
}

SnapshotData read_snapshot(std::istream& in) {
  char magic[4] = {};
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "KUQ1", 4) != 0) throw std::runtime_error("bad snapshot magic");
  const auto n = static_cast<std::size_t>(get_le(in, 4));
  SnapshotData data;
  data.time = std::bit_cast<double>(get_le(in, 8));
  data.velocities.resize(n);
  for (double& v : data.velocities) v = std::bit_cast<double>(get_le(in, 8));
  return data;
}

}  // namespace kuq
