#include "nestsample/alt_estimators.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>

#include "nestsample/diagnostics.hpp"

namespace nestsample {

namespace {

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

struct KernelTable {
  Eigen::MatrixXd points;      // n x d
  Eigen::RowVectorXd inv_bw;
  double log_norm = 0;         // -log n - sum log h - d * log kernel normalizer
  KernelKind kind;
  double dof;
};

}  // namespace

ProposalDensity gaussian_proposal(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov) {
  const Eigen::Index d = mean.size();
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (cov.rows() != d || cov.cols() != d || llt.info() != Eigen::Success) {
    throw std::invalid_argument("gaussian_proposal: covariance must be d x d positive definite");
  }
  const Eigen::MatrixXd chol = llt.matrixL();
  const double log_det = 2.0 * chol.diagonal().array().log().sum();
  ProposalDensity g;
  g.log_density = [mean, chol, log_det, d](const Point& theta) {
    const Eigen::VectorXd z = chol.triangularView<Eigen::Lower>().solve(theta - mean);
    return -0.5 * (static_cast<double>(d) * std::log(2.0 * std::numbers::pi) + log_det + z.squaredNorm());
  };
  g.sample = [mean, chol, d](RandomSource& rng) -> Point {
    return mean + chol * rng.normal_vector(static_cast<int>(d));
  };
  return g;
}

Eigen::VectorXd default_bandwidth(std::span<const Point> sample) {
  if (sample.size() < 2) throw std::invalid_argument("default_bandwidth: need at least two points");
  const Eigen::Index d = sample.front().size();
  const double t = static_cast<double>(sample.size());
  Eigen::VectorXd bw(d);
  std::vector<double> column(sample.size());
  for (Eigen::Index k = 0; k < d; ++k) {
    for (std::size_t i = 0; i < sample.size(); ++i) column[i] = sample[i](k);
    const double sd = std::sqrt(sample_variance(column));
    const double iqr = interquartile_range(column);
    double spread = std::min(sd, iqr / 1.34);
    if (!(spread > 0)) spread = sd;  // heavy ties: fall back on the standard deviation
    if (!(spread > 0)) {
      throw std::invalid_argument("default_bandwidth: coordinate " + std::to_string(k) + " has zero spread");
    }
    bw(k) = 0.9 * spread * std::pow(t, -0.2);
  }
  return bw;
}

ProposalDensity kernel_proposal_fit(std::span<const Point> sample, KernelKind kind,
                                    double bandwidth_factor, double dof) {
  if (!(bandwidth_factor > 0)) throw std::invalid_argument("kernel_proposal_fit: bandwidth factor must be positive");
  if (kind == KernelKind::student_t && !(dof > 0)) throw std::invalid_argument("kernel_proposal_fit: dof must be positive");
  KernelFit fit;
  fit.kind = kind;
  fit.dof = dof;
  fit.bandwidth_factor = bandwidth_factor;
  fit.bandwidth = bandwidth_factor * default_bandwidth(sample);
  fit.sample.assign(sample.begin(), sample.end());

  auto table = std::make_shared<KernelTable>();
  const Eigen::Index d = fit.bandwidth.size();
  const auto n = static_cast<Eigen::Index>(sample.size());
  table->points.resize(n, d);
  for (Eigen::Index i = 0; i < n; ++i) table->points.row(i) = sample[static_cast<std::size_t>(i)].transpose();
  table->inv_bw = fit.bandwidth.cwiseInverse().transpose();
  table->kind = kind;
  table->dof = dof;
  const double log_kernel_norm =
      kind == KernelKind::gaussian
          ? -0.5 * std::log(2.0 * std::numbers::pi)
          : std::lgamma(0.5 * (dof + 1)) - std::lgamma(0.5 * dof) - 0.5 * std::log(dof * std::numbers::pi);
  table->log_norm = -std::log(static_cast<double>(n)) - fit.bandwidth.array().log().sum() +
                    static_cast<double>(d) * log_kernel_norm;

  ProposalDensity g;
  g.log_density = [table](const Point& theta) {
    const Eigen::ArrayXXd z =
        (table->points.rowwise() - theta.transpose()).array().rowwise() * table->inv_bw.array();
    Eigen::ArrayXd terms;
    if (table->kind == KernelKind::gaussian) {
      terms = -0.5 * z.square().rowwise().sum();
    } else {
      const double nu = table->dof;
      terms = (-0.5 * (nu + 1)) * (1.0 + z.square() / nu).log().rowwise().sum();
    }
    const double m = terms.maxCoeff();
    return table->log_norm + m + std::log((terms - m).exp().sum());
  };
  g.sample = [table](RandomSource& rng) -> Point {
    const auto i = static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(table->points.rows())));
    Point theta = table->points.row(i).transpose();
    for (Eigen::Index k = 0; k < theta.size(); ++k) {
      const double e = table->kind == KernelKind::gaussian ? rng.normal() : rng.student_t(table->dof);
      theta(k) += e / table->inv_bw(k);
    }
    return theta;
  };
  g.kernel = std::move(fit);
  return g;
}

LogValue reverse_is(std::span<const Point> posterior_sample, const Model& model,
                    const ProposalDensity& g) {
  if (posterior_sample.empty()) throw std::invalid_argument("reverse_is: empty posterior sample");
  LogAccumulator acc;
  for (const auto& theta : posterior_sample) {
    const double lp = model.log_prior(theta);
    const double post = lp == kNegInf ? kNegInf : lp + model.log_lik(theta);
    if (post == kNegInf) throw std::domain_error("reverse_is: posterior sample point has zero prior times likelihood");
    acc.add(g.log_density(theta) - post);
  }
  return LogValue(std::log(static_cast<double>(posterior_sample.size())) - acc.log());
}

LogValue importance_sampling(const Model& model, const ProposalDensity& g, std::size_t draws,
                             RandomSource& rng) {
  if (!g.sample) throw std::invalid_argument("importance_sampling: proposal has no sampler");
  if (draws < 1) throw std::invalid_argument("importance_sampling: need at least one draw");
  LogAccumulator acc;
  for (std::size_t t = 0; t < draws; ++t) {
    const Point theta = g.sample(rng);
    const double lp = model.log_prior(theta);
    if (lp == kNegInf) continue;
    acc.add(lp + model.log_lik(theta) - g.log_density(theta));
  }
  if (acc.log() == kNegInf) return LogValue::zero();
  return LogValue(acc.log() - std::log(static_cast<double>(draws)));
}

PosteriorKernel random_walk_posterior_kernel(const Model& model, Eigen::VectorXd scales,
                                             std::size_t steps) {
  if (scales.size() != model.dim) throw std::invalid_argument("random_walk_posterior_kernel: scale size");
  return [log_prior = model.log_prior, log_lik = model.log_lik, scales = std::move(scales),
          steps](const Point& from, RandomSource& rng) {
    Point current = from;
    double lp = log_prior(current);
    double log_post = lp == kNegInf ? kNegInf : lp + log_lik(current);
    for (std::size_t s = 0; s < steps; ++s) {
      Point prop = current + scales.cwiseProduct(rng.normal_vector(static_cast<int>(current.size())));
      const double lpp = log_prior(prop);
      if (lpp == kNegInf) continue;
      const double log_post_prop = lpp + log_lik(prop);
      if (std::log(rng.uniform()) < log_post_prop - log_post) {
        current = std::move(prop);
        log_post = log_post_prop;
      }
    }
    return current;
  };
}

std::vector<Point> posterior_chain(const Point& start, std::size_t length, std::size_t burn_in,
                                   const PosteriorKernel& kernel, RandomSource& rng) {
  Point current = start;
  for (std::size_t t = 0; t < burn_in; ++t) current = kernel(current, rng);
  std::vector<Point> chain;
  chain.reserve(length);
  for (std::size_t t = 0; t < length; ++t) {
    current = kernel(current, rng);
    chain.push_back(current);
  }
  return chain;
}

namespace {

// log(omega_1 pi L) and log g at theta.
std::pair<double, double> mixture_terms(const Point& theta, const Model& model,
                                        const ProposalDensity& g, double log_omega) {
  const double lp = model.log_prior(theta);
  const double a = lp == kNegInf ? kNegInf : log_omega + lp + model.log_lik(theta);
  return {a, g.log_density(theta)};
}

}  // namespace

std::vector<MixtureChainState> mixture_gibbs(const Model& model, const ProposalDensity& g,
                                             double omega1, std::size_t length, const Point& start,
                                             const PosteriorKernel& kernel, RandomSource& rng) {
  if (!(omega1 > 0)) throw std::invalid_argument("mixture_gibbs: omega1 must be positive");
  if (!g.sample) throw std::invalid_argument("mixture_gibbs: proposal has no sampler");
  const double log_omega = std::log(omega1);
  std::vector<MixtureChainState> chain;
  chain.reserve(length);
  Point current = start;
  for (std::size_t t = 0; t < length; ++t) {
    const auto [a, b] = mixture_terms(current, model, g, log_omega);
    const double log_p1 = a == kNegInf ? kNegInf : a - log_add(a, b);
    const int delta = std::log(rng.uniform()) < log_p1 ? 1 : 2;
    current = delta == 1 ? kernel(current, rng) : g.sample(rng);
    chain.push_back({current, delta});
  }
  return chain;
}

double rao_blackwell_xi(std::span<const MixtureChainState> chain, const Model& model,
                        const ProposalDensity& g, double omega1) {
  if (chain.empty()) throw std::invalid_argument("rao_blackwell_xi: empty chain");
  if (!(omega1 > 0)) throw std::invalid_argument("rao_blackwell_xi: omega1 must be positive");
  const double log_omega = std::log(omega1);
  double acc = 0;
  for (const auto& s : chain) {
    const auto [a, b] = mixture_terms(s.theta, model, g, log_omega);
    if (a == kNegInf) continue;
    acc += std::exp(a - log_add(a, b));
  }
  return acc / static_cast<double>(chain.size());
}

LogValue z3_from_xi(double xi, double omega1) {
  if (!(xi > 0 && xi < 1)) throw std::domain_error("z3_from_xi: xi must lie strictly inside (0, 1)");
  if (!(omega1 > 0)) throw std::invalid_argument("z3_from_xi: omega1 must be positive");
  return LogValue(std::log(xi) - std::log(omega1) - std::log1p(-xi));
}

LogValue z3_bridge_form(std::span<const MixtureChainState> chain, const Model& model,
                        const ProposalDensity& g, double omega1) {
  if (chain.empty()) throw std::invalid_argument("z3_bridge_form: empty chain");
  const double log_omega = std::log(omega1);
  LogAccumulator num;
  LogAccumulator den;
  for (const auto& s : chain) {
    const auto [a, b] = mixture_terms(s.theta, model, g, log_omega);
    const double m = log_add(a, b);
    if (m == kNegInf) {
      den.add(0.0);  // matches the zero weight rao_blackwell_xi gives this state
      continue;
    }
    num.add(a - m);
    den.add(b - m);
  }
  if (num.log() == kNegInf || den.log() == kNegInf) {
    throw std::domain_error("z3_bridge_form: one of the two sums vanishes");
  }
  return LogValue(num.log() - den.log() - log_omega);
}

}  // namespace nestsample
