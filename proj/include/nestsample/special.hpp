#pragma once

#include <vector>

/// Special functions used by the samplers and diagnostics. Self-contained so
/// that quantile inversion is identical on every platform.
namespace nestsample::special {

double normal_cdf(double x);
double normal_log_pdf(double x);
/// log Phi(x), accurate far into the lower tail.
double log_normal_cdf(double x);
/// phi(x) / Phi(x).
double inverse_mills_ratio(double x);
/// Phi^{-1}(p) for p in (0, 1); one Halley refinement on Acklam's
/// rational approximation.
double normal_quantile(double p);

/// Regularized lower/upper incomplete gamma functions P(a, x), Q(a, x).
double gamma_p(double a, double x);
double gamma_q(double a, double x);

double chi2_cdf(double x, double dof);
double chi2_sf(double x, double dof);
double chi2_log_pdf(double x, double dof);
/// Quantile of chi-square(dof), relative tolerance 1e-12. Solves in whichever
/// tail holds the smaller probability.
double chi2_quantile(double p, double dof);
/// Same, parameterized by the upper-tail probability q = 1 - p.
double chi2_quantile_upper(double q, double dof);

struct GaussLegendreRule {
  std::vector<double> nodes;    // on [-1, 1]
  std::vector<double> weights;
};
GaussLegendreRule gauss_legendre(int n);

}  // namespace nestsample::special
