#include "nestsample/diagnostics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <iomanip>
#include <mutex>
#include <numbers>
#include <ostream>
#include <thread>

#include "nestsample/special.hpp"

namespace nestsample {

// ---------------------------------------------------------------------------
// Survival curves
// ---------------------------------------------------------------------------

SurvivalCurve phi_gaussian_toy(int dim) {
  if (dim < 1) throw std::invalid_argument("phi_gaussian_toy: dim must be positive");
  const double d = dim;
  const double log_sup = 0.5 * d * std::numbers::ln2;
  SurvivalCurve c;
  c.phi = [d, log_sup](double x) {
    if (x <= 0) return std::exp(log_sup);
    if (x >= 1) return 0.0;
    return std::exp(log_sup - 0.5 * special::chi2_quantile(x, d));
  };
  c.dphi = [d, log_sup](double x) {
    if (x >= 1) return 0.0;
    const double q = x <= 0 ? 0.0 : special::chi2_quantile(x, d);
    const double log_density = special::chi2_log_pdf(q, d);
    if (log_density == std::numeric_limits<double>::infinity()) return 0.0;
    return -std::exp(log_sup - 0.5 * q - std::numbers::ln2 - log_density);
  };
  c.phi_inverse = [d, log_sup](double level) {
    if (level <= 0) return 1.0;
    const double b = 2.0 * (log_sup - std::log(level));
    if (b <= 0) return 0.0;
    return special::chi2_cdf(b, d);
  };
  c.phi_sup = std::exp(log_sup);
  c.provenance = Provenance::analytic;
  return c;
}

SurvivalCurve empirical_survival(const NSRun& run) {
  if (run.records.empty()) throw std::invalid_argument("empirical_survival: empty run");
  std::vector<double> log_phi;
  log_phi.reserve(run.records.size());
  for (const auto& r : run.records) log_phi.push_back(r.log_phi);
  std::sort(log_phi.begin(), log_phi.end());
  const double n = static_cast<double>(run.live_points);
  SurvivalCurve c;
  c.phi = [log_phi, n](double x) {
    if (x >= 1) return std::exp(log_phi.front());
    const double pos = x <= 0 ? std::numeric_limits<double>::infinity() : -n * std::log(x);
    const std::size_t i = pos >= static_cast<double>(log_phi.size())
                              ? log_phi.size()
                              : static_cast<std::size_t>(std::floor(pos)) + 1;
    return std::exp(log_phi[std::min(i, log_phi.size()) - 1]);
  };
  c.dphi = [](double) { return 0.0; };
  c.provenance = Provenance::empirical;
  return c;
}

// ---------------------------------------------------------------------------
// Quadrature for V
// ---------------------------------------------------------------------------

namespace {

std::vector<double> log_panel_edges(double eps, const QuadratureOptions& o) {
  const double lo = std::log(eps);
  const double mid = -std::numbers::ln2;
  std::vector<double> edges{lo};
  if (lo < mid) {
    const int n = std::max(1, static_cast<int>(std::ceil((mid - lo) / o.panel_width)));
    for (int k = 1; k < n; ++k) edges.push_back(lo + k * (mid - lo) / n);
  }
  for (int k = 1; k <= o.tail_levels; ++k) {
    const double u = std::log1p(-std::ldexp(1.0, -k));
    if (u > edges.back()) edges.push_back(u);
  }
  if (edges.back() < 0) edges.push_back(0.0);
  return edges;
}

// h(u) du = s phi'(s) ds with s = e^u.
double weight_density(const SurvivalCurve& c, double u) {
  const double s = std::exp(u);
  return s * s * c.dphi(s);
}

struct PanelNodes {
  std::vector<double> u, w, h;
};

PanelNodes panel_nodes(const SurvivalCurve& c, double a, double b,
                       const special::GaussLegendreRule& rule) {
  PanelNodes p;
  const double half = 0.5 * (b - a);
  const double mid = 0.5 * (a + b);
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
    p.u.push_back(mid + half * rule.nodes[i]);
    p.w.push_back(half * rule.weights[i]);
    p.h.push_back(weight_density(c, p.u.back()));
  }
  return p;
}

// int_a^b h(u) * f(u) du with f(u) = 1 or u.
double panel_integral(const SurvivalCurve& c, double a, double b,
                      const special::GaussLegendreRule& rule, bool times_u) {
  if (b <= a) return 0.0;
  const double half = 0.5 * (b - a);
  const double mid = 0.5 * (a + b);
  double acc = 0;
  for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
    const double u = mid + half * rule.nodes[k];
    acc += half * rule.weights[k] * weight_density(c, u) * (times_u ? u : 1.0);
  }
  return acc;
}

// -int int_{s<t} h(s) h(t) t ds dt, with t the log of the larger abscissa.
double lower_triangle(const SurvivalCurve& c, const std::vector<double>& edges,
                      const special::GaussLegendreRule& rule) {
  double cumulative = 0;
  double total = 0;
  for (std::size_t p = 0; p + 1 < edges.size(); ++p) {
    const double a = edges[p];
    const PanelNodes nodes = panel_nodes(c, a, edges[p + 1], rule);
    double panel_sum = 0;
    for (std::size_t i = 0; i < nodes.u.size(); ++i) {
      const double inner = panel_integral(c, a, nodes.u[i], rule, false);
      total += nodes.w[i] * nodes.h[i] * nodes.u[i] * (cumulative + inner);
      panel_sum += nodes.w[i] * nodes.h[i];
    }
    cumulative += panel_sum;
  }
  return -total;
}

}  // namespace

VarianceReport asymptotic_variance(const SurvivalCurve& curve, double eps,
                                   const QuadratureOptions& options) {
  if (!(eps > 0 && eps < 1)) throw std::invalid_argument("asymptotic_variance: eps must lie in (0, 1)");
  if (!curve.dphi) throw std::invalid_argument("asymptotic_variance: curve lacks phi'");
  const auto edges = log_panel_edges(eps, options);
  const auto rule = special::gauss_legendre(options.order);
  const auto coarse = special::gauss_legendre(std::max(2, options.order / 2));

  VarianceReport r;
  r.epsilon = eps;
  r.variance = 2.0 * lower_triangle(curve, edges, rule);
  const double coarse_v = 2.0 * lower_triangle(curve, edges, coarse);
  r.quadrature_error = std::abs(r.variance - coarse_v);
  if (!std::isfinite(r.variance) ||
      r.quadrature_error > options.tolerance * std::max(std::abs(r.variance), 1e-300) + 1e-14) {
    throw std::runtime_error("asymptotic_variance: quadrature did not converge (V=" +
                             std::to_string(r.variance) + ", half-order V=" +
                             std::to_string(coarse_v) + ")");
  }
  r.evidence = integrate_phi(curve, 0.0, 1.0, options);
  r.variance_over_z2 = r.variance / (r.evidence * r.evidence);
  return r;
}

double asymptotic_variance_full_square(const SurvivalCurve& curve, double eps,
                                       const QuadratureOptions& options) {
  if (!(eps > 0 && eps < 1)) throw std::invalid_argument("asymptotic_variance: eps must lie in (0, 1)");
  const auto edges = log_panel_edges(eps, options);
  const auto rule = special::gauss_legendre(options.order);
  std::vector<PanelNodes> panels;
  for (std::size_t p = 0; p + 1 < edges.size(); ++p) {
    panels.push_back(panel_nodes(curve, edges[p], edges[p + 1], rule));
  }
  double total = 0;
  for (std::size_t p = 0; p < panels.size(); ++p) {
    for (std::size_t q = 0; q < panels.size(); ++q) {
      if (p == q) continue;
      const auto& s = panels[p];
      const auto& t = panels[q];
      for (std::size_t i = 0; i < s.u.size(); ++i) {
        for (std::size_t k = 0; k < t.u.size(); ++k) {
          total += s.w[i] * s.h[i] * t.w[k] * t.h[k] * std::max(s.u[i], t.u[k]);
        }
      }
    }
    // Diagonal block split along s = t: below the diagonal the larger
    // coordinate is the outer node, above it the inner one.
    const double a = edges[p];
    const double b = edges[p + 1];
    const auto& n = panels[p];
    for (std::size_t i = 0; i < n.u.size(); ++i) {
      const double below = panel_integral(curve, a, n.u[i], rule, false) * n.u[i];
      const double above = panel_integral(curve, n.u[i], b, rule, true);
      total += n.w[i] * n.h[i] * (below + above);
    }
  }
  return -total;
}

double integrate_phi(const SurvivalCurve& curve, double a, double b,
                     const QuadratureOptions& options) {
  if (!(a >= 0 && b <= 1 && a < b)) throw std::invalid_argument("integrate_phi: need 0 <= a < b <= 1");
  const double lo = std::max(a, 1e-40);
  const double head = lo > a && curve.phi_sup ? (lo - a) * *curve.phi_sup : 0.0;
  const auto rule = special::gauss_legendre(options.order);
  std::vector<double> edges;
  const double ul = std::log(lo);
  const double ub = std::log(b);
  const int n = std::max(1, static_cast<int>(std::ceil((ub - ul) / options.panel_width)));
  double acc = head;
  for (int k = 0; k < n; ++k) {
    const double pa = ul + k * (ub - ul) / n;
    const double pb = ul + (k + 1) * (ub - ul) / n;
    const double half = 0.5 * (pb - pa);
    const double mid = 0.5 * (pa + pb);
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
      const double u = mid + half * rule.nodes[i];
      const double x = std::exp(u);
      acc += half * rule.weights[i] * x * curve.phi(x);
    }
  }
  return acc;
}

LogValue truncation_bound(const SurvivalCurve& curve, double eps) {
  if (!curve.phi_sup || !std::isfinite(*curve.phi_sup)) {
    throw std::domain_error("truncation_bound: phi(0+) is not finite");
  }
  if (eps < 0) throw std::invalid_argument("truncation_bound: eps must be nonnegative");
  if (eps == 0) return LogValue::zero();
  return LogValue(std::log(eps) + std::log(*curve.phi_sup));
}

// ---------------------------------------------------------------------------
// Replication checks
// ---------------------------------------------------------------------------

CltReport clt_check(const Model& model, const ConstrainedSampler& sampler, const CltOptions& o) {
  if (!model.log_evidence) throw std::invalid_argument("clt_check: model has no analytic evidence");
  if (!model.survival) throw std::invalid_argument("clt_check: model has no survival curve");
  if (!(o.epsilon > 0 && o.epsilon < 1)) throw std::invalid_argument("clt_check: epsilon must lie in (0, 1)");
  if (o.replications < 2) throw std::invalid_argument("clt_check: need at least two replications");

  NSConfig cfg;
  cfg.live_points = o.live_points;
  cfg.stop = StopRule::fixed_truncation(o.epsilon);

  CltReport rep;
  rep.live_points = o.live_points;
  rep.replications = o.replications;
  rep.errors.assign(o.replications, 0.0);
  parallel_for(o.replications, o.threads, [&](std::size_t r) {
    RandomSource rng(o.seed, r);
    const NSRun run = run_nested(model, sampler, cfg, rng);
    if (!run.valid) throw std::runtime_error("clt_check: replication failed: " + run.failure);
    rep.errors[r] = evidence_deterministic(run).log() - *model.log_evidence;
  });

  const double root_n = std::sqrt(static_cast<double>(o.live_points));
  std::vector<double> scaled(rep.errors.size());
  std::transform(rep.errors.begin(), rep.errors.end(), scaled.begin(),
                 [root_n](double e) { return root_n * e; });
  rep.mean = sample_mean(scaled);
  rep.variance = sample_variance(scaled);
  rep.raw_variance = sample_variance(rep.errors);
  rep.predicted = asymptotic_variance(*model.survival, o.epsilon).variance_over_z2;
  rep.ratio = rep.variance / rep.predicted;
  rep.mean_ok = std::abs(rep.mean) <= 3.0 * std::sqrt(rep.predicted / static_cast<double>(o.replications));
  rep.variance_ok = rep.ratio >= 1.0 - o.band && rep.ratio <= 1.0 + o.band;
  rep.pass = rep.mean_ok && rep.variance_ok;
  return rep;
}

std::vector<ScalingRow> vd_scaling(std::span<const int> dims, double tau,
                                   const QuadratureOptions& options) {
  if (!(tau > 0 && tau < 1)) throw std::invalid_argument("vd_scaling: tau must lie in (0, 1)");
  const double bound = std::log(std::numbers::sqrt2 / tau);
  std::vector<ScalingRow> rows;
  for (int d : dims) {
    if (d < 1) throw std::invalid_argument("vd_scaling: dimensions must be positive");
    ScalingRow row;
    row.dim = d;
    row.epsilon = tau * std::exp2(-0.5 * d);
    row.variance = asymptotic_variance(phi_gaussian_toy(d), row.epsilon, options).variance;
    row.variance_over_dim = row.variance / d;
    row.bound = bound;
    row.within_bound = row.variance_over_dim <= bound;
    rows.push_back(row);
  }
  return rows;
}

void write_scaling_csv(std::ostream& out, std::span<const ScalingRow> rows) {
  out << "d,epsilon,V,V_over_d,bound\n" << std::setprecision(17);
  for (const auto& r : rows) {
    out << r.dim << ',' << r.epsilon << ',' << r.variance << ',' << r.variance_over_dim << ','
        << r.bound << '\n';
  }
}

void write_variance_csv(std::ostream& out, int dim, const VarianceReport& report) {
  out << "d,epsilon,V,V_over_d,bound,Z,V_over_Z2,quadrature_error\n" << std::setprecision(17);
  // log(sqrt 2 / tau) with tau = eps phi(0+) for the centred toy
  const double bound = 0.5 * std::numbers::ln2 - std::log(report.epsilon) - 0.5 * dim * std::numbers::ln2;
  out << dim << ',' << report.epsilon << ',' << report.variance << ',' << report.variance / dim << ','
      << bound << ',' << report.evidence << ',' << report.variance_over_z2 << ','
      << report.quadrature_error << '\n';
}

LogValue grid_riemann_mixture(std::span<const double> data, double p, std::size_t n_mu,
                              std::size_t n_log_var, const MixtureBounds& bounds) {
  if (n_mu < 2 || n_log_var < 2) throw std::invalid_argument("grid_riemann_mixture: grid dims must be >= 2");
  const double dmu = (bounds.mu_hi - bounds.mu_lo) / static_cast<double>(n_mu);
  const double dv = (bounds.log_var_hi - bounds.log_var_lo) / static_cast<double>(n_log_var);
  // prior density times cell area is 1 / (n_mu n_log_var)
  const double log_cell = -std::log(static_cast<double>(n_mu) * static_cast<double>(n_log_var));
  LogAccumulator acc;
  Point theta(2);
  for (std::size_t a = 0; a < n_mu; ++a) {
    theta(0) = bounds.mu_lo + (static_cast<double>(a) + 0.5) * dmu;
    for (std::size_t b = 0; b < n_log_var; ++b) {
      theta(1) = bounds.log_var_lo + (static_cast<double>(b) + 0.5) * dv;
      acc.add(mixture_loglik(theta, p, data) + log_cell);
    }
  }
  return acc.value();
}

// ---------------------------------------------------------------------------
// Small statistics helpers
// ---------------------------------------------------------------------------

double sample_mean(std::span<const double> xs) {
  if (xs.empty()) throw std::invalid_argument("sample_mean: empty input");
  double acc = 0;
  for (double x : xs) acc += x;
  return acc / static_cast<double>(xs.size());
}

double sample_variance(std::span<const double> xs) {
  if (xs.size() < 2) throw std::invalid_argument("sample_variance: need two values");
  const double m = sample_mean(xs);
  double acc = 0;
  for (double x : xs) acc += (x - m) * (x - m);
  return acc / static_cast<double>(xs.size() - 1);
}

double quantile(std::vector<double> xs, double prob) {
  if (xs.empty()) throw std::invalid_argument("quantile: empty input");
  std::sort(xs.begin(), xs.end());
  const double h = (static_cast<double>(xs.size()) - 1.0) * prob;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, xs.size() - 1);
  return xs[lo] + (h - static_cast<double>(lo)) * (xs[hi] - xs[lo]);
}

double interquartile_range(std::span<const double> xs) {
  std::vector<double> v(xs.begin(), xs.end());
  return quantile(v, 0.75) - quantile(v, 0.25);
}

double median(std::span<const double> xs) { return quantile({xs.begin(), xs.end()}, 0.5); }

void parallel_for(std::size_t count, std::size_t threads,
                  const std::function<void(std::size_t)>& body) {
  if (threads <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  const std::size_t workers = std::min(threads, count);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace nestsample
