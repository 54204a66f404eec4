#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "nestsample/constrained_samplers.hpp"
#include "nestsample/core.hpp"

namespace nestsample {

enum class XScheme { deterministic, random };

/// Active rules are combined with "first to fire wins".
struct StopRule {
  std::optional<double> truncation;        // epsilon: stop at j = ceil(-N log epsilon)
  std::optional<double> relative;          // stop once (x_{i-1}-x_i) phi_i < ratio * Z_i
  std::optional<std::size_t> max_iterations;

  static StopRule fixed_truncation(double eps) { return {eps, std::nullopt, std::nullopt}; }
  static StopRule relative_contribution(double ratio = 1e-8) {
    return {std::nullopt, ratio, std::nullopt};
  }
  static StopRule iterations(std::size_t j) { return {std::nullopt, std::nullopt, j}; }
};

struct NSConfig {
  std::size_t live_points = 100;
  XScheme scheme = XScheme::deterministic;
  std::size_t streams = 1;  // K, random scheme only
  StopRule stop = StopRule::relative_contribution();
  std::size_t mcmc_steps = 1;

  /// Throws std::invalid_argument on N < 1, K < 1, epsilon or ratio outside
  /// (0, 1), or no active stop rule.
  void validate() const;
};

/// ceil(-N log epsilon).
std::size_t truncation_iterations(std::size_t live_points, double eps);

struct NSRecord {
  std::size_t iteration = 0;  // 1-based
  Point point;
  double log_phi = kNegInf;
};

struct NSRun {
  std::vector<NSRecord> records;
  std::vector<Point> live_final;
  std::vector<double> live_final_log_lik;
  std::size_t live_points = 0;
  XScheme scheme = XScheme::deterministic;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
  std::size_t likelihood_evaluations = 0;
  std::size_t proposed_moves = 0;
  std::size_t accepted_moves = 0;
  bool valid = true;
  std::string failure;

  std::size_t iterations() const { return records.size(); }
};

/// Worst-point replacement loop. Ties in the argmin go to the lowest live
/// index. A sampler failure stops the run with valid = false and the records
/// gathered so far.
NSRun run_nested(const Model& model, const ConstrainedSampler& sampler, const NSConfig& cfg,
                 RandomSource& rng);

/// log(x_{i-1} - x_i) for x_i = exp(-i/N).
double log_deterministic_width(std::size_t i, std::size_t live_points);

/// log sum_i (x_{i-1} - x_i) phi_i with x_i = exp(-i/N).
LogValue evidence_deterministic(const NSRun& run);

/// Average of log Z_k over K independent beta(N,1) abscissa streams that reuse
/// the recorded phi_i.
LogValue evidence_random(const NSRun& run, std::size_t streams, RandomSource& rng);

struct WeightedPoint {
  Point point;
  double weight = 0;
};

/// Normalized importance weights (x_{i-1} - x_i) phi_i / Z_hat.
std::vector<WeightedPoint> posterior_weights(const NSRun& run);

Eigen::VectorXd posterior_expectation(const NSRun& run,
                                      const std::function<Eigen::VectorXd(const Point&)>& f);

/// Header line "N=..,j=..,scheme=..,seed=..,stream=..", then one
/// "i,logphi,theta..." line per iteration at 17 significant digits.
void write_run(std::ostream& out, const NSRun& run);
NSRun read_run(std::istream& in);

std::string to_string(XScheme scheme);

}  // namespace nestsample
