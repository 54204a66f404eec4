#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <optional>

#include "nestsample/constrained_samplers.hpp"
#include "nestsample/core.hpp"
#include "nestsample/models.hpp"
#include "nestsample/nested_sampler.hpp"

namespace nestsample {

/// Instrumental prior/likelihood pair with weight w such that
/// pi_tilde * L_tilde * w = pi * L pointwise.
struct InstrumentalPair {
  std::function<double(const Point&)> log_prior;   // log pi_tilde
  std::function<Point(RandomSource&)> sample_prior;
  std::function<double(const Point&)> log_lik;     // log L_tilde
  std::function<double(const Point&)> log_weight;  // log w
};

/// Builds the pair with w = pi L / (pi_tilde L_tilde) derived from `target`.
InstrumentalPair make_instrumental_pair(const Model& target,
                                        std::function<double(const Point&)> log_prior,
                                        std::function<Point(RandomSource&)> sample_prior,
                                        std::function<double(const Point&)> log_lik);

/// Checks support containment (pi > 0 implies pi_tilde > 0 on draws from pi)
/// and the weight identity to 1e-10 in log domain on draws from both priors.
/// Throws std::invalid_argument naming the failed property.
void check_pair(const Model& target, const InstrumentalPair& pair, std::size_t draws,
                RandomSource& rng);

/// The instrumental pair seen as a model, for handing to run_nested.
Model instrumental_model(const InstrumentalPair& pair, int dim);

/// Nested sampling on (pi_tilde, L_tilde), returning
/// log sum (x_{i-1} - x_i) phi_i w(theta_i). The run itself is stored in
/// `run_out` when given.
LogValue run_nested_is(const Model& target, const InstrumentalPair& pair,
                       const ConstrainedSampler& sampler, const NSConfig& cfg, RandomSource& rng,
                       NSRun* run_out = nullptr);

/// Gaussian N(center, scale) with its lower Cholesky factor.
class EllipsoidSpec {
 public:
  /// Throws std::domain_error when `scale` is not symmetric positive definite.
  EllipsoidSpec(Eigen::VectorXd center, Eigen::MatrixXd scale);

  int dim() const { return static_cast<int>(center_.size()); }
  const Eigen::VectorXd& center() const { return center_; }
  const Eigen::MatrixXd& scale() const { return scale_; }
  const Eigen::MatrixXd& cholesky() const { return chol_; }

  /// (theta - center)' scale^{-1} (theta - center)
  double mahalanobis2(const Point& theta) const;
  double log_density(const Point& theta) const;
  Point sample(RandomSource& rng) const;

 private:
  Eigen::VectorXd center_;
  Eigen::MatrixXd scale_;
  Eigen::MatrixXd chol_;
  double log_det_ = 0;
};

/// Decimal text: the center on one line, then d rows of the scale matrix;
/// values separated by commas or whitespace.
EllipsoidSpec read_ellipsoid(std::istream& in);
void write_ellipsoid(std::ostream& out, const EllipsoidSpec& spec);

/// Uniform draw on the surface of the ellipsoid enclosing Gaussian mass x:
/// center + sqrt(q) C v / ||v||, q the chi2(d) quantile at x.
Point ellipsoid_shell_sample(const EllipsoidSpec& spec, double x, RandomSource& rng);
/// Same with the mass given as log x, accurate for x close to 1.
Point ellipsoid_shell_sample_log(const EllipsoidSpec& spec, double log_x, RandomSource& rng);

struct EllipsoidOptions {
  std::size_t live_points = 100;
  /// Fixed j; when absent, stop once x_i times the largest integrand seen so
  /// far falls below `relative` times the running estimate (never before i = N).
  std::optional<std::size_t> iterations;
  double relative = 1e-8;
  std::size_t max_iterations = 50'000'000;
  std::ostream* shell_log = nullptr;  // "i,log_x,log_integrand,mahalanobis2"
};

struct EllipsoidEvidence {
  LogValue evidence;
  std::size_t iterations = 0;
  std::size_t likelihood_evaluations = 0;
};

/// Nested ellipsoids: shell i is drawn at mass exp(-i/N) and weighted by
/// (x_{i-1} - x_i) pi L / pi_tilde. One likelihood evaluation per shell.
EllipsoidEvidence nested_ellipsoid_evidence(const Model& model, const EllipsoidSpec& spec,
                                            const EllipsoidOptions& options, RandomSource& rng);

/// Pair with pi_tilde = N(center, scale) and L_tilde = lambda(mahalanobis2),
/// lambda decreasing and given on the log scale.
InstrumentalPair ellipsoid_instrumental_pair(const Model& target, const EllipsoidSpec& spec,
                                             std::function<double(double)> log_lambda);

enum class EllipsoidScenario { mode_and_curvature, mode_only };

/// mode_and_curvature: (mode, 2 Sigma_m); mode_only: (mode, 100 I), where
/// Sigma_m = curvature_multiplier * fit.cov.
EllipsoidSpec scenario_spec(const ProbitFit& fit, EllipsoidScenario scenario,
                            double curvature_multiplier = 1.0);

}  // namespace nestsample
