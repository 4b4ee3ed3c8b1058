#include "kuq/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <stdexcept>
#include <thread>

namespace kuq {

namespace {

constexpr std::pair<Method, std::string_view> kMethodNames[] = {
    {Method::mc, "mc"},       {Method::bf_steady, "bf-steady"}, {Method::bf_bgk, "bf-bgk"},
    {Method::mlmc2, "mlmc2"}, {Method::mlmc3, "mlmc3"},         {Method::hierarchical, "hierarchical"},
};

template <class T>
void read_if(const nlohmann::json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end()) out = it->get<T>();
}

}  // namespace

std::string_view method_name(Method m) noexcept {
  for (const auto& [method, name] : kMethodNames) {
    if (method == m) return name;
  }
  return "?";
}

Method parse_method(std::string_view tag) {
  for (const auto& [method, name] : kMethodNames) {
    if (name == tag) return method;
  }
  throw std::invalid_argument("unknown method '" + std::string(tag) + "'");
}

void ExperimentConfig::validate() const {
  model.validate();
  uncertainty.validate();
  if (n_particles < 1 || n_samples < 1 || n_bins < 1 || n_ref < 1 || gl_nodes < 1 || replications < 1 ||
      surrogate_nodes < 1 || hierarchy_samples < 1) {
    throw std::invalid_argument("all budgets must be >= 1");
  }
  if (!(t_final > 0.0)) throw std::invalid_argument("t_final must be positive");
  if (methods.empty()) throw std::invalid_argument("no estimator method selected");
  for (Method m : methods) {
    if ((m == Method::mlmc2 && n_particles % 2 != 0) || (m == Method::mlmc3 && n_particles % 4 != 0)) {
      throw std::invalid_argument("MLMC needs N divisible by 2^(L-1)");
    }
    if ((m == Method::bf_steady || m == Method::bf_bgk || m == Method::hierarchical) && !fixed_lambda &&
        n_samples < 2) {
      throw std::invalid_argument("optimal lambda needs M >= 2");
    }
  }
  (void)InitialLaw::parse(initial_law);
  const StepConfig step = step_config();
  step.validate(model);
  // Each snapshot owns a distinct step and the last one is the final step.
  const std::size_t n_steps = step.step_count();
  std::size_t previous = 0;
  for (std::size_t s = 0; s < step.snapshot_times.size(); ++s) {
    const auto mark = static_cast<std::size_t>(std::llround(step.snapshot_times[s] / step.dt));
    if (s > 0 && mark <= previous) throw std::invalid_argument("snapshot times closer than dt");
    previous = mark;
  }
  if (previous != n_steps) throw std::invalid_argument("the last snapshot time must be t_final");
}

StepConfig ExperimentConfig::step_config() const {
  StepConfig cfg = default_step_config(model, t_final);
  if (dt > 0.0) cfg.dt = dt;
  cfg.snapshot_times = snapshots();
  return cfg;
}

std::vector<double> ExperimentConfig::snapshots() const {
  if (snapshot_times.empty()) return {t_final / 4.0, t_final};
  return snapshot_times;
}

LambdaMode ExperimentConfig::lambda_mode() const {
  if (fixed_lambda) return FixedLambda{*fixed_lambda};
  return OptimalLambda{centering};
}

ExpectationMethod ExperimentConfig::surrogate_method(std::uint32_t replication) const {
  if (surrogate_samples > 0) {
    return SamplingExpectation{surrogate_samples,
                               StreamId{master_seed, StreamPurpose::surrogate, 0, 0, 0, replication}};
  }
  return QuadratureExpectation{surrogate_nodes};
}

ExperimentConfig config_from_json(const nlohmann::json& j) {
  static const std::vector<std::string> known = {
      "rho", "epsilon", "lambda_noise", "nu", "c_admiss", "z_lo", "z_hi", "n_particles", "n_samples",
      "n_bins", "n_ref", "gl_nodes", "replications", "t_final", "dt", "snapshot_times", "initial_law",
      "method", "lambda_mode", "centering", "surrogate_nodes", "surrogate_samples", "hierarchy_samples",
      "master_seed", "threads", "cache_dir"};
  if (!j.is_object()) throw std::invalid_argument("config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw std::invalid_argument("unknown config key '" + key + "'");
    }
  }

  ExperimentConfig cfg;
  read_if(j, "rho", cfg.model.rho);
  read_if(j, "epsilon", cfg.model.epsilon);
  read_if(j, "lambda_noise", cfg.model.lambda_noise);
  read_if(j, "nu", cfg.model.nu);
  read_if(j, "c_admiss", cfg.model.c_admiss);
  read_if(j, "z_lo", cfg.uncertainty.lo);
  read_if(j, "z_hi", cfg.uncertainty.hi);
  read_if(j, "n_particles", cfg.n_particles);
  read_if(j, "n_samples", cfg.n_samples);
  read_if(j, "n_bins", cfg.n_bins);
  read_if(j, "n_ref", cfg.n_ref);
  read_if(j, "gl_nodes", cfg.gl_nodes);
  read_if(j, "replications", cfg.replications);
  read_if(j, "t_final", cfg.t_final);
  read_if(j, "dt", cfg.dt);
  read_if(j, "snapshot_times", cfg.snapshot_times);
  read_if(j, "initial_law", cfg.initial_law);
  read_if(j, "surrogate_nodes", cfg.surrogate_nodes);
  read_if(j, "surrogate_samples", cfg.surrogate_samples);
  read_if(j, "hierarchy_samples", cfg.hierarchy_samples);
  read_if(j, "master_seed", cfg.master_seed);
  read_if(j, "threads", cfg.threads);
  read_if(j, "cache_dir", cfg.cache_dir);

  if (auto it = j.find("method"); it != j.end()) {
    cfg.methods.clear();
    if (it->is_array()) {
      for (const auto& m : *it) cfg.methods.push_back(parse_method(m.get<std::string>()));
    } else {
      cfg.methods.push_back(parse_method(it->get<std::string>()));
    }
  }
  if (auto it = j.find("lambda_mode"); it != j.end()) {
    if (it->is_number()) {
      cfg.fixed_lambda = it->get<double>();
    } else if (it->get<std::string>() != "optimal") {
      throw std::invalid_argument("lambda_mode must be \"optimal\" or a number");
    }
  }
  if (auto it = j.find("centering"); it != j.end()) {
    const auto c = it->get<std::string>();
    if (c == "exact_mean") {
      cfg.centering = Centering::exact_mean;
    } else if (c == "sample_mean") {
      cfg.centering = Centering::sample_mean;
    } else {
      throw std::invalid_argument("centering must be exact_mean or sample_mean");
    }
  }
  cfg.validate();
  return cfg;
}

nlohmann::json config_to_json(const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["rho"] = cfg.model.rho;
  j["epsilon"] = cfg.model.epsilon;
  j["lambda_noise"] = cfg.model.lambda_noise;
  j["nu"] = cfg.model.nu;
  j["c_admiss"] = cfg.model.c_admiss;
  j["z_lo"] = cfg.uncertainty.lo;
  j["z_hi"] = cfg.uncertainty.hi;
  j["n_particles"] = cfg.n_particles;
  j["n_samples"] = cfg.n_samples;
  j["n_bins"] = cfg.n_bins;
  j["n_ref"] = cfg.n_ref;
  j["gl_nodes"] = cfg.gl_nodes;
  j["replications"] = cfg.replications;
  j["t_final"] = cfg.t_final;
  j["dt"] = cfg.dt;
  j["snapshot_times"] = cfg.snapshot_times;
  j["initial_law"] = cfg.initial_law;
  nlohmann::json methods = nlohmann::json::array();
  for (Method m : cfg.methods) methods.push_back(std::string(method_name(m)));
  j["method"] = methods;
  j["lambda_mode"] = cfg.fixed_lambda ? nlohmann::json(*cfg.fixed_lambda) : nlohmann::json("optimal");
  j["centering"] = cfg.centering == Centering::exact_mean ? "exact_mean" : "sample_mean";
  j["surrogate_nodes"] = cfg.surrogate_nodes;
  j["surrogate_samples"] = cfg.surrogate_samples;
  j["hierarchy_samples"] = cfg.hierarchy_samples;
  j["master_seed"] = cfg.master_seed;
  j["threads"] = cfg.threads;
  j["cache_dir"] = cfg.cache_dir;
  return j;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path);
  return config_from_json(nlohmann::json::parse(in));
}

unsigned resolve_threads(unsigned requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("KUQ_THREADS")) {
    const long n = std::strtol(env, nullptr, 10);
    if (n > 0) return static_cast<unsigned>(n);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

}  // namespace kuq
