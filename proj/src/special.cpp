#include "nestsample/special.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace nestsample::special {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kEps = 1e-16;
constexpr double kTiny = 1e-300;
const double kLogSqrt2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

// Prefactor x^a e^{-x} / Gamma(a), in log form.
double log_gamma_prefactor(double a, double x) { return a * std::log(x) - x - std::lgamma(a); }

double gamma_p_series(double a, double x) {
  double ap = a;
  double term = 1.0 / a;
  double sum = term;
  for (int n = 0; n < 100000; ++n) {
    ap += 1.0;
    term *= x / ap;
    sum += term;
    if (std::abs(term) < std::abs(sum) * kEps) {
      return sum * std::exp(log_gamma_prefactor(a, x));
    }
  }
  throw std::runtime_error("gamma_p: series failed to converge");
}

// Modified Lentz evaluation of the continued fraction for Q(a, x).
double gamma_q_fraction(double a, double x) {
  double b = x + 1.0 - a;
  double c = 1.0 / kTiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 100000; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < kTiny) d = kTiny;
    c = b + an / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) return std::exp(log_gamma_prefactor(a, x)) * h;
  }
  throw std::runtime_error("gamma_q: continued fraction failed to converge");
}

// Solves P(a, y) = target (lower tail) or Q(a, y) = target (upper tail) for y,
// Newton on the log residual with a bisection safeguard.
double invert_gamma(double a, double target, bool lower_tail, double guess) {
  double lo = 0.0;
  double hi = kInf;
  double y = guess > 0 && std::isfinite(guess) ? guess : a;
  const double log_target = std::log(target);
  const double lgam = std::lgamma(a);
  for (int it = 0; it < 500; ++it) {
    const double val = lower_tail ? gamma_p(a, y) : gamma_q(a, y);
    const double r = std::log(val) - log_target;
    const bool too_far = lower_tail ? r > 0 : r < 0;
    if (too_far) {
      hi = y;
    } else {
      lo = y;
    }
    if (std::abs(r) < 1e-15) return y;
    double next = std::numeric_limits<double>::quiet_NaN();
    if (val > 0 && std::isfinite(r)) {
      const double dens = std::exp((a - 1.0) * std::log(y) - y - lgam);
      const double slope = (lower_tail ? dens : -dens) / val;
      if (slope != 0 && std::isfinite(slope)) next = y - r / slope;
    }
    if (!(next > lo && next < hi)) next = std::isfinite(hi) ? 0.5 * (lo + hi) : 2.0 * y + 1.0;
    if (std::abs(next - y) <= 1e-13 * y) return next;
    y = next;
  }
  throw std::runtime_error("chi2_quantile: inversion failed to converge");
}

double chi2_initial_guess(double p, double dof) {
  // Wilson-Hilferty, falling back to the small-x power law.
  const double z = normal_quantile(p);
  const double h = 2.0 / (9.0 * dof);
  const double wh = dof * std::pow(1.0 - h + z * std::sqrt(h), 3);
  const double a = 0.5 * dof;
  const double small = 2.0 * std::exp((std::log(p) + std::lgamma(a + 1.0)) / a);
  if (wh > 0 && p > 0.05) return wh;
  return std::min(small, wh > 0 ? wh : small);
}

}  // namespace

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_log_pdf(double x) { return -0.5 * x * x - kLogSqrt2Pi; }

double log_normal_cdf(double x) {
  if (x >= 0) return std::log1p(-0.5 * std::erfc(x / std::numbers::sqrt2));
  if (x > -37.0) return std::log(0.5 * std::erfc(-x / std::numbers::sqrt2));
  // Asymptotic expansion of Mills' ratio.
  const double z2 = 1.0 / (x * x);
  const double series = 1.0 - z2 * (1.0 - 3.0 * z2 * (1.0 - 5.0 * z2 * (1.0 - 7.0 * z2)));
  return normal_log_pdf(x) - std::log(-x) + std::log(series);
}

double inverse_mills_ratio(double x) { return std::exp(normal_log_pdf(x) - log_normal_cdf(x)); }

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    if (p == 0.0) return -kInf;
    if (p == 1.0) return kInf;
    throw std::domain_error("normal_quantile: p outside [0, 1]");
  }
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;

  double x;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // Halley step; the residual is taken in the tail that keeps relative accuracy.
  const double e = x < 0 ? normal_cdf(x) - p : (1.0 - p) - normal_cdf(-x);
  const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
  return x - u / (1.0 + 0.5 * x * u);
}

double gamma_p(double a, double x) {
  if (!(a > 0)) throw std::domain_error("gamma_p: a must be positive");
  if (x <= 0) return 0.0;
  if (x == kInf) return 1.0;
  if (x < a + 1.0) return gamma_p_series(a, x);
  return 1.0 - gamma_q_fraction(a, x);
}

double gamma_q(double a, double x) {
  if (!(a > 0)) throw std::domain_error("gamma_q: a must be positive");
  if (x <= 0) return 1.0;
  if (x == kInf) return 0.0;
  if (x < a + 1.0) return 1.0 - gamma_p_series(a, x);
  return gamma_q_fraction(a, x);
}

double chi2_cdf(double x, double dof) { return gamma_p(0.5 * dof, 0.5 * x); }

double chi2_sf(double x, double dof) { return gamma_q(0.5 * dof, 0.5 * x); }

double chi2_log_pdf(double x, double dof) {
  if (x < 0) return -kInf;
  const double a = 0.5 * dof;
  if (x == 0) {
    if (a < 1) return kInf;
    return a == 1 ? -std::log(2.0) : -kInf;
  }
  return (a - 1.0) * std::log(x) - 0.5 * x - a * std::log(2.0) - std::lgamma(a);
}

double chi2_quantile(double p, double dof) {
  if (!(dof > 0)) throw std::domain_error("chi2_quantile: dof must be positive");
  if (!(p >= 0.0 && p <= 1.0)) throw std::domain_error("chi2_quantile: p outside [0, 1]");
  if (p == 0.0) return 0.0;
  if (p == 1.0) return kInf;
  if (p > 0.5) return chi2_quantile_upper(1.0 - p, dof);
  const double guess = 0.5 * chi2_initial_guess(p, dof);
  return 2.0 * invert_gamma(0.5 * dof, p, true, guess);
}

double chi2_quantile_upper(double q, double dof) {
  if (!(dof > 0)) throw std::domain_error("chi2_quantile: dof must be positive");
  if (!(q >= 0.0 && q <= 1.0)) throw std::domain_error("chi2_quantile: q outside [0, 1]");
  if (q == 0.0) return kInf;
  if (q == 1.0) return 0.0;
  if (q > 0.5) return chi2_quantile(1.0 - q, dof);
  const double z = normal_quantile(1.0 - q);
  const double h = 2.0 / (9.0 * dof);
  double guess = dof * std::pow(1.0 - h + z * std::sqrt(h), 3);
  if (!(guess > 0)) guess = dof;
  return 2.0 * invert_gamma(0.5 * dof, q, false, 0.5 * guess);
}

GaussLegendreRule gauss_legendre(int n) {
  if (n < 1) throw std::invalid_argument("gauss_legendre: n must be positive");
  GaussLegendreRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0;
      double p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = pk;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    rule.nodes[i] = -x;
    rule.nodes[n - 1 - i] = x;
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.weights[i] = w;
    rule.weights[n - 1 - i] = w;
  }
  return rule;
}

}  // namespace nestsample::special
