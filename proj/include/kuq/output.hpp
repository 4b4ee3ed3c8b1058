#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>

#include <json.hpp>

#include "kuq/estimators.hpp"
#include "kuq/harness.hpp"

namespace kuq {

// All floating-point CSV fields use "%.12e", so identical results give
// identical bytes.

/// "t,method,replication,rel_err"; header only for an empty series.
void write_error_series_csv(std::ostream& out, const ErrorSeries& series);

/// "v,f_mean" plus a "lambda" column when the report carries coefficients.
void write_snapshot_csv(std::ostream& out, const EstimatorReport& report);

/// Shortest decimal form of t used in file names ("10", "2.5").
std::string time_tag(double t);

nlohmann::json experiment_json(const ExperimentConfig& cfg, const ExperimentResult& result);

/// error_series.csv, report.json and snapshot_<t>.csv of replication 0.
/// With several methods each method's snapshots go to a subdirectory named
/// after the method.
void write_experiment(const std::filesystem::path& dir, const ExperimentConfig& cfg,
                      const ExperimentResult& result);

/// "m,method,median_rel_err" rows.
void write_sweep_csv(std::ostream& out, std::span<const SweepRow> rows);

}  // namespace kuq
