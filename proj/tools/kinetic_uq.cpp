// kinetic-uq: command-line driver for the traffic-model uncertainty
// quantification experiments.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "kuq/config.hpp"
#include "kuq/dsmc.hpp"
#include "kuq/harness.hpp"
#include "kuq/output.hpp"
#include "kuq/traffic_model.hpp"

namespace fs = std::filesystem;

namespace {

struct Overrides {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> methods;
  std::optional<double> eps;
  std::optional<unsigned> threads;
  std::optional<std::size_t> n_ref;
  std::optional<std::size_t> samples;
  std::optional<std::size_t> particles;
  std::optional<std::size_t> replications;
  std::string out = "kuq_out";
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config_path, "JSON experiment config");
  cmd->add_option("--seed", o.seed, "master seed");
  cmd->add_option("--method", o.methods, "estimator tag(s): mc bf-steady bf-bgk mlmc2 mlmc3 hierarchical")
      ->delimiter(',');
  cmd->add_option("--eps", o.eps, "scaling parameter epsilon");
  cmd->add_option("--threads", o.threads, "worker threads (default: KUQ_THREADS or all cores)");
  cmd->add_option("--nref", o.n_ref, "particles per reference run");
  cmd->add_option("--samples", o.samples, "z samples M");
  cmd->add_option("--particles", o.particles, "particles per run N");
  cmd->add_option("--replications", o.replications, "independent replications");
  cmd->add_option("--out", o.out, "output directory");
}

kuq::ExperimentConfig build_config(const Overrides& o) {
  kuq::ExperimentConfig cfg = o.config_path.empty() ? kuq::ExperimentConfig{} : kuq::load_config(o.config_path);
  if (o.seed) cfg.master_seed = *o.seed;
  if (!o.methods.empty()) {
    cfg.methods.clear();
    for (const auto& m : o.methods) cfg.methods.push_back(kuq::parse_method(m));
  }
  if (o.eps) {
    cfg.model.epsilon = *o.eps;
    cfg.dt = 0.0;
  }
  if (o.threads) cfg.threads = *o.threads;
  if (o.n_ref) cfg.n_ref = *o.n_ref;
  if (o.samples) cfg.n_samples = *o.samples;
  if (o.particles) cfg.n_particles = *o.particles;
  if (o.replications) cfg.replications = *o.replications;
  cfg.validate();
  return cfg;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

void write_histogram_file(const fs::path& path, const kuq::DensityHistogram& h) {
  auto out = open_out(path);
  kuq::EstimatorReport r;
  r.mean = h;
  kuq::write_snapshot_csv(out, r);
}

int cmd_simulate(const Overrides& o, double z) {
  const kuq::ExperimentConfig cfg = build_config(o);
  fs::create_directories(o.out);
  const kuq::StreamId stream{cfg.master_seed, kuq::StreamPurpose::particles, 0, 0, cfg.n_particles, 0};
  kuq::ParticleEnsemble ens = kuq::init_ensemble(cfg.n_particles, kuq::InitialLaw::parse(cfg.initial_law), stream);
  const double u0 = kuq::ensemble_mean(ens);
  const kuq::VelocityGrid grid = cfg.grid();
  kuq::run_observed(ens, cfg.model, z, cfg.step_config(), [&](double t, const kuq::ParticleEnsemble& e) {
    const std::string tag = kuq::time_tag(t);
    write_histogram_file(fs::path(o.out) / ("snapshot_" + tag + ".csv"), kuq::reconstruct_histogram(e.velocities, grid));
    auto bin = open_out(fs::path(o.out) / ("particles_" + tag + ".kuq"));
    kuq::write_snapshot(bin, t, e.velocities);
    std::printf("t=%g mean=%.6f exact=%.6f\n", t, kuq::ensemble_mean(e),
                kuq::mean_velocity_exact(t, z, u0, cfg.model));
  });
  return 0;
}

int cmd_reference(const Overrides& o) {
  const kuq::ExperimentConfig cfg = build_config(o);
  fs::create_directories(o.out);
  const kuq::ReferenceSolution ref = kuq::reference_solution(cfg);
  for (std::size_t s = 0; s < ref.times.size(); ++s) {
    write_histogram_file(fs::path(o.out) / ("reference_" + kuq::time_tag(ref.times[s]) + ".csv"), ref.histograms[s]);
    std::printf("t=%g mean=%.6f\n", ref.times[s], ref.histograms[s].mean_velocity());
  }
  return 0;
}

void print_medians(const kuq::ExperimentConfig& cfg, const kuq::ExperimentResult& result) {
  for (double t : cfg.snapshots()) {
    for (kuq::Method m : cfg.methods) {
      std::vector<double> errs;
      for (const auto& r : result.errors.records) {
        if (r.time == t && r.method == m) errs.push_back(r.rel_err);
      }
      std::printf("t=%g %-12s median rel_err=%.6e\n", t, std::string(kuq::method_name(m)).c_str(),
                  kuq::median(errs));
    }
  }
}

int cmd_estimate(const Overrides& o) {
  const kuq::ExperimentConfig cfg = build_config(o);
  const kuq::ReferenceSolution ref = kuq::reference_solution(cfg);
  kuq::RunCache cache;
  const kuq::ExperimentResult result = kuq::run_uq_experiment(cfg, ref, cache);
  kuq::write_experiment(o.out, cfg, result);
  print_medians(cfg, result);
  return 0;
}

void run_sweep(const kuq::ExperimentConfig& cfg, const std::vector<std::size_t>& m_list, const fs::path& out_dir) {
  const kuq::ReferenceSolution ref = kuq::reference_solution(cfg);
  kuq::RunCache cache;
  const auto rows = kuq::convergence_sweep(cfg, m_list, ref, cache);
  fs::create_directories(out_dir);
  auto out = open_out(out_dir / "sweep.csv");
  kuq::write_sweep_csv(out, rows);
  for (kuq::Method m : cfg.methods) {
    std::vector<double> x, y;
    for (const auto& r : rows) {
      if (r.method != m) continue;
      x.push_back(static_cast<double>(r.m));
      y.push_back(r.median_error);
    }
    std::printf("%-12s slope=%.4f\n", std::string(kuq::method_name(m)).c_str(), kuq::loglog_slope(x, y));
  }
}

int cmd_sweep(const Overrides& o, const std::vector<std::size_t>& m_list) {
  run_sweep(build_config(o), m_list, o.out);
  return 0;
}

// Data behind the comparison, multilevel and rate figures, at both scalings.
int cmd_figures(const Overrides& o) {
  const kuq::ExperimentConfig base = build_config(o);
  const fs::path root = o.out;
  for (double eps : {1.0, 0.003}) {
    const std::string tag = "eps_" + kuq::time_tag(eps);
    kuq::ExperimentConfig cfg = base;
    cfg.model.epsilon = eps;
    cfg.dt = 0.0;

    cfg.methods = {kuq::Method::mc, kuq::Method::bf_steady, kuq::Method::bf_bgk};
    cfg.n_samples = 20;
    const kuq::ReferenceSolution ref = kuq::reference_solution(cfg);
    kuq::RunCache cache;
    std::printf("[comparison %s]\n", tag.c_str());
    auto comparison = kuq::run_uq_experiment(cfg, ref, cache);
    kuq::write_experiment(root / "comparison" / tag, cfg, comparison);
    print_medians(cfg, comparison);

    cfg.methods = {kuq::Method::mc, kuq::Method::mlmc2, kuq::Method::mlmc3};
    cfg.n_samples = 30;
    std::printf("[multilevel %s]\n", tag.c_str());
    auto multilevel = kuq::run_uq_experiment(cfg, ref, cache);
    kuq::write_experiment(root / "multilevel" / tag, cfg, multilevel);
    print_medians(cfg, multilevel);
  }
  kuq::ExperimentConfig rate = base;
  rate.model.epsilon = 0.003;
  rate.dt = 0.0;
  rate.methods = {kuq::Method::mc, kuq::Method::bf_steady, kuq::Method::bf_bgk};
  std::printf("[rate]\n");
  run_sweep(rate, {10, 20, 40, 80, 160}, root / "rate");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Uncertainty quantification for a kinetic traffic model"};
  app.require_subcommand(1);
  Overrides o;

  double z = 2.0;
  auto* simulate = app.add_subcommand("simulate", "one DSMC run at fixed z");
  add_common(simulate, o);
  simulate->add_option("--z", z, "uncertain parameter value");

  auto* reference = app.add_subcommand("reference", "Gauss-Legendre collocation reference");
  add_common(reference, o);

  auto* estimate = app.add_subcommand("estimate", "replicated estimator errors against the reference");
  add_common(estimate, o);

  std::vector<std::size_t> m_list{10, 20, 40, 80, 160};
  auto* sweep = app.add_subcommand("sweep", "error against the number of z samples");
  add_common(sweep, o);
  sweep->add_option("--m-list", m_list, "ascending sample counts")->delimiter(',');

  auto* figures = app.add_subcommand("figures", "data files for every figure");
  add_common(figures, o);

  CLI11_PARSE(app, argc, argv);
  try {
    if (simulate->parsed()) return cmd_simulate(o, z);
    if (reference->parsed()) return cmd_reference(o);
    if (estimate->parsed()) return cmd_estimate(o);
    if (sweep->parsed()) return cmd_sweep(o, m_list);
    if (figures->parsed()) return cmd_figures(o);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "kinetic-uq: %s\n", e.what());
    return 1;
  }
  return 0;
}
