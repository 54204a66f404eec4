#include "nestsample/nested_is.hpp"

#include <cmath>
#include <iomanip>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>

#include "nestsample/special.hpp"

namespace nestsample {

InstrumentalPair make_instrumental_pair(const Model& target,
                                        std::function<double(const Point&)> log_prior,
                                        std::function<Point(RandomSource&)> sample_prior,
                                        std::function<double(const Point&)> log_lik) {
  InstrumentalPair pair;
  pair.log_prior = std::move(log_prior);
  pair.sample_prior = std::move(sample_prior);
  pair.log_lik = std::move(log_lik);
  pair.log_weight = [target_prior = target.log_prior, target_lik = target.log_lik,
                     lp = pair.log_prior, ll = pair.log_lik](const Point& theta) {
    const double num = target_prior(theta) + target_lik(theta);
    if (num == kNegInf) return kNegInf;
    return num - lp(theta) - ll(theta);
  };
  return pair;
}

void check_pair(const Model& target, const InstrumentalPair& pair, std::size_t draws,
                RandomSource& rng) {
  auto identity_ok = [&](const Point& theta) {
    const double lhs = pair.log_prior(theta) + pair.log_lik(theta) + pair.log_weight(theta);
    const double rhs = target.log_prior(theta) + target.log_lik(theta);
    if (rhs == kNegInf) return lhs == kNegInf || std::isnan(lhs);
    return std::abs(lhs - rhs) <= 1e-10 * std::max(1.0, std::abs(rhs));
  };
  for (std::size_t k = 0; k < draws; ++k) {
    const Point theta = target.sample_prior(rng);
    if (target.log_prior(theta) > kNegInf && pair.log_prior(theta) == kNegInf) {
      throw std::invalid_argument("check_pair: target prior support not contained in instrumental prior");
    }
    if (!identity_ok(theta)) throw std::invalid_argument("check_pair: weight identity violated");
    if (!identity_ok(pair.sample_prior(rng))) {
      throw std::invalid_argument("check_pair: weight identity violated");
    }
  }
}

Model instrumental_model(const InstrumentalPair& pair, int dim) {
  Model m;
  m.dim = dim;
  m.log_prior = pair.log_prior;
  m.log_lik = pair.log_lik;
  m.sample_prior = pair.sample_prior;
  m.name = "instrumental";
  return m;
}

LogValue run_nested_is(const Model& target, const InstrumentalPair& pair,
                       const ConstrainedSampler& sampler, const NSConfig& cfg, RandomSource& rng,
                       NSRun* run_out) {
  const Model inst = instrumental_model(pair, target.dim);
  NSRun run = run_nested(inst, sampler, cfg, rng);
  LogAccumulator acc;
  for (const auto& r : run.records) {
    acc.add(log_deterministic_width(r.iteration, run.live_points) + r.log_phi + pair.log_weight(r.point));
  }
  if (run_out) *run_out = std::move(run);
  return acc.value();
}

// ---------------------------------------------------------------------------

EllipsoidSpec::EllipsoidSpec(Eigen::VectorXd center, Eigen::MatrixXd scale)
    : center_(std::move(center)), scale_(std::move(scale)) {
  const Eigen::Index d = center_.size();
  if (d < 1 || scale_.rows() != d || scale_.cols() != d) {
    throw std::domain_error("EllipsoidSpec: center and scale dimensions disagree");
  }
  if (!scale_.allFinite() || !center_.allFinite()) throw std::domain_error("EllipsoidSpec: non-finite entries");
  if ((scale_ - scale_.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale_.cwiseAbs().maxCoeff()) {
    throw std::domain_error("EllipsoidSpec: scale matrix is not symmetric");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(scale_);
  if (llt.info() != Eigen::Success) throw std::domain_error("EllipsoidSpec: Cholesky factorization failed");
  chol_ = llt.matrixL();
  for (Eigen::Index k = 0; k < d; ++k) {
    if (!(chol_(k, k) > 0)) throw std::domain_error("EllipsoidSpec: scale matrix is not positive definite");
    log_det_ += 2.0 * std::log(chol_(k, k));
  }
}

double EllipsoidSpec::mahalanobis2(const Point& theta) const {
  const Eigen::VectorXd z = chol_.triangularView<Eigen::Lower>().solve(theta - center_);
  return z.squaredNorm();
}

double EllipsoidSpec::log_density(const Point& theta) const {
  return -0.5 * (dim() * std::log(2.0 * std::numbers::pi) + log_det_ + mahalanobis2(theta));
}

Point EllipsoidSpec::sample(RandomSource& rng) const {
  return center_ + chol_ * rng.normal_vector(dim());
}

namespace {

std::vector<double> parse_row(const std::string& line, std::size_t lineno) {
  std::string s = line;
  for (char& c : s) {
    if (c == ',') c = ' ';
  }
  std::istringstream in(s);
  std::vector<double> out;
  std::string tok;
  while (in >> tok) {
    std::size_t pos = 0;
    double v = 0;
    try {
      v = std::stod(tok, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != tok.size()) {
      throw std::runtime_error("read_ellipsoid: line " + std::to_string(lineno) + ": bad number '" + tok + "'");
    }
    out.push_back(v);
  }
  return out;
}

}  // namespace

EllipsoidSpec read_ellipsoid(std::istream& in) {
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto row = parse_row(line, lineno);
    if (!row.empty()) rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error("read_ellipsoid: empty input");
  const std::size_t d = rows.front().size();
  if (rows.size() != d + 1) {
    throw std::runtime_error("read_ellipsoid: expected " + std::to_string(d) + " matrix rows after the center");
  }
  Eigen::VectorXd center = Eigen::Map<Eigen::VectorXd>(rows[0].data(), static_cast<Eigen::Index>(d));
  Eigen::MatrixXd scale(d, d);
  for (std::size_t r = 0; r < d; ++r) {
    if (rows[r + 1].size() != d) throw std::runtime_error("read_ellipsoid: ragged matrix row");
    for (std::size_t c = 0; c < d; ++c) scale(r, c) = rows[r + 1][c];
  }
  return EllipsoidSpec(std::move(center), std::move(scale));
}

void write_ellipsoid(std::ostream& out, const EllipsoidSpec& spec) {
  out << std::setprecision(17);
  auto row = [&](auto&& v, Eigen::Index n) {
    for (Eigen::Index k = 0; k < n; ++k) out << (k ? "," : "") << v(k);
    out << '\n';
  };
  row(spec.center(), spec.dim());
  for (Eigen::Index r = 0; r < spec.dim(); ++r) row(spec.scale().row(r), spec.dim());
}

Point ellipsoid_shell_sample_log(const EllipsoidSpec& spec, double log_x, RandomSource& rng) {
  if (!(log_x < 0)) throw std::invalid_argument("ellipsoid_shell_sample: mass must lie in (0, 1)");
  const double d = spec.dim();
  const double q = log_x > -std::numbers::ln2 ? special::chi2_quantile_upper(-std::expm1(log_x), d)
                                              : special::chi2_quantile(std::exp(log_x), d);
  Eigen::VectorXd v = rng.normal_vector(spec.dim());
  return spec.center() + std::sqrt(q) * (spec.cholesky() * (v / v.norm()));
}

Point ellipsoid_shell_sample(const EllipsoidSpec& spec, double x, RandomSource& rng) {
  if (!(x > 0 && x < 1)) throw std::invalid_argument("ellipsoid_shell_sample: mass must lie in (0, 1)");
  return ellipsoid_shell_sample_log(spec, std::log(x), rng);
}

EllipsoidEvidence nested_ellipsoid_evidence(const Model& model, const EllipsoidSpec& spec,
                                            const EllipsoidOptions& options, RandomSource& rng) {
  if (options.live_points < 1) throw std::invalid_argument("nested_ellipsoid_evidence: N must be >= 1");
  if (model.dim != spec.dim()) throw std::invalid_argument("nested_ellipsoid_evidence: dimension mismatch");
  const std::size_t n = options.live_points;
  const std::size_t limit = options.iterations.value_or(options.max_iterations);
  const double log_ratio = std::log(options.relative);
  if (options.shell_log) *options.shell_log << "i,log_x,log_integrand,mahalanobis2\n" << std::setprecision(17);

  EllipsoidEvidence out;
  LogAccumulator acc;
  double log_h_max = kNegInf;
  for (std::size_t i = 1; i <= limit; ++i) {
    const double log_x = -static_cast<double>(i) / static_cast<double>(n);
    const Point theta = ellipsoid_shell_sample_log(spec, log_x, rng);
    const double lp = model.log_prior(theta);
    const double log_h = lp == kNegInf ? kNegInf : lp + model.log_lik(theta) - spec.log_density(theta);
    ++out.likelihood_evaluations;
    acc.add(log_deterministic_width(i, n) + log_h);
    out.iterations = i;
    if (options.shell_log) {
      *options.shell_log << i << ',' << log_x << ',' << log_h << ',' << spec.mahalanobis2(theta) << '\n';
    }
    log_h_max = std::max(log_h_max, log_h);
    if (!options.iterations && i >= n && acc.log() > kNegInf && log_x + log_h_max < log_ratio + acc.log()) break;
  }
  out.evidence = acc.value();
  return out;
}

InstrumentalPair ellipsoid_instrumental_pair(const Model& target, const EllipsoidSpec& spec,
                                             std::function<double(double)> log_lambda) {
  auto lp = [spec](const Point& theta) { return spec.log_density(theta); };
  auto sample = [spec](RandomSource& rng) { return spec.sample(rng); };
  auto ll = [spec, log_lambda = std::move(log_lambda)](const Point& theta) {
    return log_lambda(spec.mahalanobis2(theta));
  };
  return make_instrumental_pair(target, lp, sample, ll);
}

EllipsoidSpec scenario_spec(const ProbitFit& fit, EllipsoidScenario scenario,
                            double curvature_multiplier) {
  if (!(curvature_multiplier > 0)) throw std::invalid_argument("scenario_spec: multiplier must be positive");
  const Eigen::Index d = fit.mode.size();
  if (scenario == EllipsoidScenario::mode_only) {
    return EllipsoidSpec(fit.mode, 100.0 * Eigen::MatrixXd::Identity(d, d));
  }
  return EllipsoidSpec(fit.mode, 2.0 * curvature_multiplier * fit.cov);
}

}  // namespace nestsample
