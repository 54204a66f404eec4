#pragma once

#include <string>
#include <utility>
#include <vector>

#include "nestsample/core.hpp"

namespace nestsample {

// Centred Gaussian toy --------------------------------------------------------
// Prior N(0, 1/4pi) per coordinate, y = 0, likelihood sd (4pi)^{-1/2}:
// L(theta) = 2^{d/2} exp(-2 pi ||theta||^2) and Z = 1 in every dimension.

double centred_toy_log_lik(const Point& theta);
Model centred_gaussian_toy(int dim);

// Decentred Gaussian -----------------------------------------------------------
// Prior N(0, 1) per coordinate, y_k | theta_k ~ N(theta_k, 1).

Model decentred_gaussian(const Eigen::VectorXd& data);
inline Model decentred_gaussian(int dim, double y = 3.0) {
  return decentred_gaussian(Eigen::VectorXd::Constant(dim, y));
}
/// log prod_k N(y_k; 0, 2).
double decentred_log_evidence(const Eigen::VectorXd& data);

// Two-component mixture with known weight -------------------------------------
// y_i ~ p N(0,1) + (1-p) N(mu, sigma), parameterized by (mu, log sigma^2) with a
// uniform prior on a rectangle.

struct MixtureBounds {
  double mu_lo = -2.0;
  double mu_hi = 6.0;
  double log_var_lo = 0.001;
  double log_var_hi = 16.0;
  double log_area() const { return std::log((mu_hi - mu_lo) * (log_var_hi - log_var_lo)); }
  bool contains(const Point& theta) const {
    return theta(0) > mu_lo && theta(0) < mu_hi && theta(1) > log_var_lo && theta(1) < log_var_hi;
  }
};

/// params = (mu, log sigma^2); sigma is a standard deviation.
double mixture_loglik(const Point& params, double p, std::span<const double> data);
Model mixture_model(std::vector<double> data, double p = 0.5, MixtureBounds bounds = {});
/// n draws from N(2, 1.5^2).
std::vector<double> synthetic_mixture_data(std::size_t n, RandomSource& rng);
std::vector<double> load_mixture_csv(const std::string& path);

// Probit regression -------------------------------------------------------------

struct ProbitData {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;  // entries in {0, 1}
  std::vector<std::string> columns;
};

double probit_loglik(const Point& theta, const Eigen::MatrixXd& X, const Eigen::VectorXd& y);
Eigen::VectorXd probit_loglik_gradient(const Point& theta, const Eigen::MatrixXd& X,
                                       const Eigen::VectorXd& y);
Eigen::MatrixXd probit_loglik_hessian(const Point& theta, const Eigen::MatrixXd& X,
                                      const Eigen::VectorXd& y);

struct ProbitFit {
  Eigen::VectorXd mode;
  Eigen::MatrixXd cov;  // inverse of minus the log-posterior Hessian at the mode
  int iterations = 0;
};

/// Newton ascent on the log posterior under a N(0, prior_sd^2 I) prior.
/// Throws std::runtime_error after 100 iterations without convergence.
ProbitFit probit_mode_hessian(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                              double prior_sd = 10.0);

Model probit_model(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double prior_sd = 10.0);

/// Intercept column of ones followed by standard-Gaussian covariates;
/// theta_true includes the intercept coefficient.
ProbitData synthetic_probit(std::size_t n, const Eigen::VectorXd& theta_true, RandomSource& rng);

struct ProbitCsvOptions {
  bool intercept = true;
  std::vector<std::pair<std::string, std::string>> cross_effects;
};

/// First column is the binary response, the rest covariates. Errors name the
/// offending line (the header is line 1).
ProbitData load_probit_csv(const std::string& path, const ProbitCsvOptions& options = {});
/// Writes y and the covariates; an all-ones first column is dropped so that a
/// reload with intercept = true reproduces the design.
void save_probit_csv(const std::string& path, const ProbitData& data);

}  // namespace nestsample
