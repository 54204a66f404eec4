#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "nestsample/constrained_samplers.hpp"
#include "nestsample/core.hpp"
#include "nestsample/models.hpp"
#include "nestsample/nested_sampler.hpp"

namespace nestsample {

/// phi(x) = 2^{d/2} exp(-F_d^{-1}(x) / 2) for the centred Gaussian toy, F_d the
/// chi2(d) CDF.
SurvivalCurve phi_gaussian_toy(int dim);

/// Step-function phi from a run: phi(x) = phi_i for x in [x_i, x_{i-1}).
SurvivalCurve empirical_survival(const NSRun& run);

struct VarianceReport {
  double epsilon = 0;
  double variance = 0;       // V
  double evidence = 0;       // Z = int_0^1 phi
  double variance_over_z2 = 0;
  double quadrature_error = 0;
};

struct QuadratureOptions {
  int order = 64;            // Gauss-Legendre points per panel and axis
  double panel_width = 1.0;  // in log s, on the bulk of [epsilon, 1/2]
  int tail_levels = 48;      // geometric panels toward s = 1
  double tolerance = 1e-6;   // relative; larger disagreement throws
};

/// V = -int int_{[eps,1]^2} s phi'(s) t phi'(t) log(s v t) ds dt, computed as
/// twice the s < t triangle with panels split on the diagonal. The error
/// estimate compares against a half-order rule; exceeding the tolerance
/// throws std::runtime_error.
VarianceReport asymptotic_variance(const SurvivalCurve& curve, double eps,
                                   const QuadratureOptions& options = {});

/// Same integral over the whole square, both triangles evaluated separately.
double asymptotic_variance_full_square(const SurvivalCurve& curve, double eps,
                                       const QuadratureOptions& options = {});

/// int_a^b phi(x) dx by panelled Gauss-Legendre in log x.
double integrate_phi(const SurvivalCurve& curve, double a, double b,
                     const QuadratureOptions& options = {});

/// log(eps * phi(0+)); throws std::domain_error when phi is unbounded.
LogValue truncation_bound(const SurvivalCurve& curve, double eps);

struct CltReport {
  std::size_t live_points = 0;
  std::size_t replications = 0;
  double mean = 0;              // of e_r = sqrt(N) (log Z_r - log Z)
  double variance = 0;          // sample variance of e_r
  double raw_variance = 0;      // sample variance of log Z_r - log Z
  double predicted = 0;         // V / Z^2
  double ratio = 0;             // variance / predicted
  bool mean_ok = false;
  bool variance_ok = false;
  bool pass = false;
  std::vector<double> errors;   // log Z_r - log Z
};

struct CltOptions {
  std::size_t live_points = 100;
  std::size_t replications = 500;
  double epsilon = 0;      // truncation point; also fixes j
  double band = 0.15;      // accepted relative deviation of the variance ratio
  std::uint64_t seed = 1;
  std::size_t threads = 1;
};

/// Runs independent seeded replications and compares the spread of
/// sqrt(N) (log Z_hat - log Z) with V / Z^2. Needs model.log_evidence and
/// model.survival.
CltReport clt_check(const Model& model, const ConstrainedSampler& sampler, const CltOptions& options);

struct ScalingRow {
  int dim = 0;
  double epsilon = 0;
  double variance = 0;
  double variance_over_dim = 0;
  double bound = 0;  // log(sqrt(2) / tau)
  bool within_bound = false;
};

/// V_d for the centred toy with epsilon_d = tau 2^{-d/2}.
std::vector<ScalingRow> vd_scaling(std::span<const int> dims, double tau,
                                   const QuadratureOptions& options = {});

/// CSV with columns d,epsilon,V,V_over_d,bound.
void write_scaling_csv(std::ostream& out, std::span<const ScalingRow> rows);
void write_variance_csv(std::ostream& out, int dim, const VarianceReport& report);

/// Cell-midpoint Riemann sum of the mixture likelihood against the uniform
/// prior on the rectangle, accumulated in log domain.
LogValue grid_riemann_mixture(std::span<const double> data, double p, std::size_t n_mu,
                              std::size_t n_log_var, const MixtureBounds& bounds);

/// Sample mean/variance helpers shared by the checks and the harness.
double sample_mean(std::span<const double> xs);
double sample_variance(std::span<const double> xs);
/// Type-7 (linear interpolation) quantile.
double quantile(std::vector<double> xs, double prob);
double interquartile_range(std::span<const double> xs);
double median(std::span<const double> xs);

/// Runs body(r) for r in [0, count) on up to `threads` workers.
void parallel_for(std::size_t count, std::size_t threads, const std::function<void(std::size_t)>& body);

}  // namespace nestsample
