#include "kuq/output.hpp"

#include <cstdio>
#include <fstream>
#include <ostream>
#include <stdexcept>

namespace kuq {

namespace {

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12e", x);
  return buf;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

}  // namespace

void write_error_series_csv(std::ostream& out, const ErrorSeries& series) {
  out << "t,method,replication,rel_err\n";
  for (const auto& r : series.records) {
    out << fmt(r.time) << ',' << method_name(r.method) << ',' << r.replication << ',' << fmt(r.rel_err) << '\n';
  }
}

void write_snapshot_csv(std::ostream& out, const EstimatorReport& report) {
  const auto& h = report.mean;
  const bool with_lambda = report.lambda.has_value();
  if (with_lambda && report.lambda->size() != h.size()) throw std::invalid_argument("lambda length mismatch");
  out << (with_lambda ? "v,f_mean,lambda\n" : "v,f_mean\n");
  for (std::size_t i = 0; i < h.size(); ++i) {
    out << fmt(h.grid.center(i)) << ',' << fmt(h.values[i]);
    if (with_lambda) out << ',' << fmt((*report.lambda)[i]);
    out << '\n';
  }
}

std::string time_tag(double t) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%g", t);
  return buf;
}

nlohmann::json experiment_json(const ExperimentConfig& cfg, const ExperimentResult& result) {
  nlohmann::json j;
  j["config"] = config_to_json(cfg);
  nlohmann::json reports = nlohmann::json::array();
  for (const auto& r : result.reports) {
    nlohmann::json entry = to_json(r.report);
    entry["replication"] = r.replication;
    reports.push_back(std::move(entry));
  }
  j["reports"] = std::move(reports);
  return j;
}

void write_experiment(const std::filesystem::path& dir, const ExperimentConfig& cfg,
                      const ExperimentResult& result) {
  std::filesystem::create_directories(dir);
  {
    auto out = open_out(dir / "error_series.csv");
    write_error_series_csv(out, result.errors);
  }
  {
    auto out = open_out(dir / "report.json");
    out << experiment_json(cfg, result).dump(2) << '\n';
  }
  const bool nested = cfg.methods.size() > 1;
  for (const auto& r : result.reports) {
    if (r.replication != 0) continue;
    std::filesystem::path target = nested ? dir / r.report.method : dir;
    std::filesystem::create_directories(target);
    auto out = open_out(target / ("snapshot_" + time_tag(r.report.time) + ".csv"));
    write_snapshot_csv(out, r.report);
  }
}

void write_sweep_csv(std::ostream& out, std::span<const SweepRow> rows) {
  out << "m,method,median_rel_err\n";
  for (const auto& r : rows) out << r.m << ',' << method_name(r.method) << ',' << fmt(r.median_error) << '\n';
}

}  // namespace kuq
