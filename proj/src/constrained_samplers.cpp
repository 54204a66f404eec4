#include "nestsample/constrained_samplers.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "nestsample/models.hpp"
#include "nestsample/special.hpp"

namespace nestsample {

namespace {

constexpr int kMaxRedraws = 100;

Point pick_survivor(const ConstraintContext& ctx, RandomSource& rng) {
  const std::size_t n = ctx.live.size();
  if (n <= 1) return ctx.discarded;
  std::size_t j = rng.index(n - 1);
  if (j >= ctx.discarded_index) ++j;
  return ctx.live[j];
}

}  // namespace

Point exact_radial(int dim, double log_level, RandomSource& rng) {
  if (dim < 1) throw std::invalid_argument("exact_radial: dim must be positive");
  const double d = dim;
  const double bound = log_level == kNegInf ? std::numeric_limits<double>::infinity()
                                            : d * std::numbers::ln2 - 2.0 * log_level;
  if (!(bound > 0)) throw std::domain_error("exact_radial: level exceeds the maximum likelihood");

  const double mass = std::isinf(bound) ? 1.0 : special::chi2_cdf(bound, d);
  double s = special::chi2_quantile(rng.uniform() * mass, d);
  s = std::min(s, bound);
  Eigen::VectorXd dir = rng.normal_vector(dim);
  dir /= dir.norm();
  Point theta = std::sqrt(s / (4.0 * std::numbers::pi)) * dir;
  // Rounding in the radius can put a boundary draw an ulp outside the set.
  for (int i = 0; i < kMaxRedraws && centred_toy_log_lik(theta) < log_level; ++i) {
    theta *= 1.0 - 4.0 * std::numeric_limits<double>::epsilon();
  }
  return theta;
}

double truncated_standard_normal(double lo, double hi, RandomSource& rng) {
  if (!(lo <= hi)) throw std::domain_error("truncated_standard_normal: empty interval");
  if (lo == hi) return lo;
  if (lo > 0) return -truncated_standard_normal(-hi, -lo, rng);
  const double pa = special::normal_cdf(lo);
  const double pb = special::normal_cdf(hi);
  if (!(pb > pa)) {
    throw std::domain_error("truncated_standard_normal: interval carries no representable mass");
  }
  const double u = rng.uniform();
  const double x = special::normal_quantile(pa + u * (pb - pa));
  return std::clamp(x, lo, hi);
}

Point gibbs_decentred(const Point& start, const Point& level_point, const Eigen::VectorXd& data,
                      std::size_t sweeps, RandomSource& rng) {
  if (start.size() != data.size() || level_point.size() != data.size()) {
    throw std::invalid_argument("gibbs_decentred: dimension mismatch");
  }
  const double budget = (data - level_point).squaredNorm();
  Point theta = start;
  double resid = (data - theta).squaredNorm();
  if (resid > budget) throw std::domain_error("gibbs_decentred: start violates the constraint");

  for (std::size_t sweep = 0; sweep < sweeps; ++sweep) {
    resid = (data - theta).squaredNorm();
    for (Eigen::Index k = 0; k < theta.size(); ++k) {
      const double own = (data(k) - theta(k)) * (data(k) - theta(k));
      const double others = std::max(resid - own, 0.0);
      double delta2 = budget - others;
      if (delta2 < 0) {
        if (delta2 < -1e-12 * std::max(budget, 1.0)) {
          throw std::domain_error("gibbs_decentred: negative squared half-width");
        }
        delta2 = 0;
      }
      const double delta = std::sqrt(delta2);
      theta(k) = truncated_standard_normal(data(k) - delta, data(k) + delta, rng);
      resid = others + (data(k) - theta(k)) * (data(k) - theta(k));
    }
  }
  return theta;
}

RandomWalkResult rwm_constrained(const Model& model, const Point& start, double log_level,
                                 std::size_t steps, const Eigen::VectorXd& scales,
                                 RandomSource& rng) {
  if (scales.size() != start.size()) throw std::invalid_argument("rwm_constrained: scale size");
  RandomWalkResult out;
  out.point = start;
  double lp = model.log_prior(start);
  out.log_lik = model.log_lik(start);
  out.evaluations = 1;
  for (std::size_t s = 0; s < steps; ++s) {
    Point prop = out.point + scales.cwiseProduct(rng.normal_vector(start.size()));
    ++out.proposed;
    const double lp_prop = model.log_prior(prop);
    if (lp_prop == kNegInf) continue;
    if (std::log(rng.uniform()) >= lp_prop - lp) continue;
    const double ll_prop = model.log_lik(prop);
    ++out.evaluations;
    if (ll_prop < log_level) continue;
    out.point = std::move(prop);
    out.log_lik = ll_prop;
    lp = lp_prop;
    ++out.accepted;
  }
  return out;
}

std::optional<RejectionResult> rejection_from_prior(const Model& model, double log_level,
                                                    std::size_t budget, RandomSource& rng) {
  RejectionResult out;
  while (out.attempts < budget) {
    ++out.attempts;
    Point theta = model.sample_prior(rng);
    const double ll = model.log_lik(theta);
    if (ll >= log_level) {
      out.point = std::move(theta);
      out.log_lik = ll;
      return out;
    }
  }
  return std::nullopt;
}

namespace {

Eigen::VectorXd live_spread(std::span<const Point> live) {
  const Eigen::Index d = live.front().size();
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
  for (const auto& p : live) mean += p;
  mean /= static_cast<double>(live.size());
  Eigen::VectorXd ss = Eigen::VectorXd::Zero(d);
  for (const auto& p : live) ss += (p - mean).cwiseAbs2();
  return (ss / static_cast<double>(live.size() - 1)).cwiseSqrt();
}

struct Dispatcher {
  const ConstraintContext& ctx;
  RandomSource& rng;

  std::optional<ConstrainedDraw> operator()(const ExactRadial& s) const {
    ConstrainedDraw d;
    d.point = exact_radial(s.dim, ctx.log_level, rng);
    d.log_lik = ctx.model.log_lik(d.point);
    d.evaluations = 1;
    return d;
  }

  std::optional<ConstrainedDraw> operator()(const GibbsDecentred& s) const {
    const Point start = pick_survivor(ctx, rng);
    ConstrainedDraw d;
    for (int attempt = 0; attempt < kMaxRedraws; ++attempt) {
      d.point = gibbs_decentred(start, ctx.discarded, s.data, s.sweeps, rng);
      d.log_lik = ctx.model.log_lik(d.point);
      ++d.evaluations;
      if (d.log_lik >= ctx.log_level) return d;
    }
    return std::nullopt;
  }

  std::optional<ConstrainedDraw> operator()(const RandomWalk& s) const {
    const Point start = pick_survivor(ctx, rng);
    const double factor = s.shrink == 1.0 ? 1.0 : std::pow(s.shrink, double(ctx.iteration));
    Eigen::VectorXd scales = s.scales * factor;
    if (s.adapt_to_live && ctx.live.size() > 1) scales = scales.cwiseProduct(live_spread(ctx.live));
    RandomWalkResult r = rwm_constrained(ctx.model, start, ctx.log_level, s.steps, scales, rng);
    ConstrainedDraw d;
    d.point = std::move(r.point);
    d.log_lik = r.log_lik;
    d.evaluations = r.evaluations;
    d.proposed = r.proposed;
    d.accepted = r.accepted;
    return d;
  }

  std::optional<ConstrainedDraw> operator()(const Rejection& s) const {
    auto r = rejection_from_prior(ctx.model, ctx.log_level, s.budget, rng);
    if (!r) return std::nullopt;
    ConstrainedDraw d;
    d.point = std::move(r->point);
    d.log_lik = r->log_lik;
    d.evaluations = r->attempts;
    return d;
  }
};

}  // namespace

std::optional<ConstrainedDraw> draw_constrained(const ConstrainedSampler& sampler,
                                                const ConstraintContext& ctx,
                                                RandomSource& rng) {
  return std::visit(Dispatcher{ctx, rng}, sampler);
}

std::string sampler_name(const ConstrainedSampler& sampler) {
  struct Namer {
    std::string operator()(const ExactRadial&) const { return "exact_radial"; }
    std::string operator()(const GibbsDecentred&) const { return "gibbs_decentred"; }
    std::string operator()(const RandomWalk&) const { return "random_walk"; }
    std::string operator()(const Rejection&) const { return "rejection"; }
  };
  return std::visit(Namer{}, sampler);
}

}  // namespace nestsample
