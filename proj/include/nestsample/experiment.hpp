#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "nestsample/models.hpp"
#include "nestsample/nested_is.hpp"

namespace nestsample {

inline constexpr const char* kArtifactVersion = "nestsample 1.0.0";

/// Raised for malformed or inconsistent configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Flat "key = value" document; '#' starts a comment, lists are
/// comma-separated. Later keys override earlier ones.
class Config {
 public:
  static Config parse(std::istream& in, const std::string& source = "<config>");
  static Config load(const std::string& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  const std::map<std::string, std::string>& values() const { return values_; }

  std::string get(const std::string& key) const;
  std::string get(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::size_t get_size(const std::string& key, std::size_t fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  std::vector<std::string> get_list(const std::string& key, const std::vector<std::string>& fallback) const;
  std::vector<double> get_doubles(const std::string& key, const std::vector<double>& fallback) const;
  std::vector<std::size_t> get_sizes(const std::string& key, const std::vector<std::size_t>& fallback) const;

  /// 16 hex digits of FNV-1a over the sorted "key=value" lines.
  std::string hash() const;

 private:
  std::map<std::string, std::string> values_;
};

struct GridPoint {
  std::size_t live_points = 100;
  std::size_t mcmc_steps = 1;
};

struct ExperimentConfig {
  std::string experiment;                // decentred | mixture | probit | clt | vdscale
  std::vector<std::string> estimators;
  std::vector<int> dims;
  std::vector<GridPoint> grid;           // (N, M) pairs
  std::size_t replications = 1;
  std::uint64_t seed = 1;
  std::string output_dir;                // empty: keep results in memory only
  std::size_t threads = 1;
  Config raw;                            // model parameters and everything else

  /// Reads and validates; throws ConfigError.
  static ExperimentConfig from(const Config& config);
  /// Estimators each experiment understands.
  static std::vector<std::string> known_estimators(const std::string& experiment);
};

struct ResultRow {
  std::string experiment;
  std::string estimator;
  std::string config_point;
  std::size_t replication = 0;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
  double log_z = 0;
  double log_z_ref = 0;
  std::size_t iterations = 0;
  std::size_t likelihood_evaluations = 0;
  double wall_seconds = 0;
  bool ok = true;
  std::string message;
  std::string config_hash;

  double log_error() const { return log_z - log_z_ref; }
};

struct SummaryRow {
  std::string experiment;
  std::string estimator;
  std::string config_point;
  std::size_t rows = 0;
  std::size_t failures = 0;
  double median_log_error = 0;
  double iqr_log_error = 0;
  double sd_log_error = 0;
  double mean_iterations = 0;
  double mean_likelihood_evaluations = 0;
  std::string statistic;        // optional extra figure, e.g. variance_ratio
  double statistic_value = 0;
  std::string config_hash;
};

struct ResultLog {
  std::vector<ResultRow> rows;
  std::vector<SummaryRow> summary;
  std::size_t failures() const;

  const SummaryRow* find(const std::string& estimator, const std::string& config_point) const;
  std::vector<double> log_errors(const std::string& estimator, const std::string& config_point) const;
};

/// Column order of the per-replication CSV.
const std::vector<std::string>& result_columns();
const std::vector<std::string>& summary_columns();
void write_result_header(std::ostream& out);
void write_result_row(std::ostream& out, const ResultRow& row);
void write_summary(std::ostream& out, const std::vector<SummaryRow>& rows);
/// Parses a per-replication CSV written by write_result_row.
std::vector<ResultRow> read_results(std::istream& in);

/// Median, IQR and spread of the log errors of successful rows, grouped by
/// (estimator, config point) in first-appearance order.
std::vector<SummaryRow> summarize(const std::vector<ResultRow>& rows);

/// Runs the sweep. With an output directory, rows are appended to
/// <experiment>_results.csv as each configuration point completes, and
/// <experiment>_summary.csv and <experiment>_results.meta are written at the
/// end. Sub-run failures become rows with ok = false.
ResultLog run_experiment(const ExperimentConfig& cfg);

// Probit model enumeration -----------------------------------------------------

struct EnumerationOptions {
  std::size_t live_points = 128;
  EllipsoidScenario scenario = EllipsoidScenario::mode_and_curvature;
  double curvature_multiplier = 1.0;
  double prior_sd = 10.0;
  std::uint64_t seed = 1;
  std::size_t threads = 1;
};

struct EnumerationRow {
  std::vector<std::size_t> columns;
  double log_z = kNegInf;
  double posterior_probability = 0;
  std::size_t likelihood_evaluations = 0;
  bool failed = false;
  std::string message;
};

/// All subsets of columns 1..d-1, each with column 0 (the intercept) added.
std::vector<std::vector<std::size_t>> all_intercept_subsets(std::size_t columns);

/// Evidence of every subset by nested ellipsoids, posterior probabilities
/// under equal model priors normalized over the subsets that succeeded.
/// Throws std::invalid_argument when a subset omits column 0.
std::vector<EnumerationRow> probit_model_enumeration(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                                     const std::vector<std::vector<std::size_t>>& subsets,
                                                     const EnumerationOptions& options);

void write_enumeration_csv(std::ostream& out, const std::vector<EnumerationRow>& rows,
                           const std::vector<std::string>& column_names);

/// Data for the probit experiment and enumeration: the CSV at key "data" if
/// present, otherwise the synthetic generator (keys n, theta_true, data_seed).
ProbitData probit_data_from_config(const Config& config);

}  // namespace nestsample
