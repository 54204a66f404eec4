#include "nestsample/nested_sampler.hpp"

#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>

namespace nestsample {

void NSConfig::validate() const {
  if (live_points < 1) throw std::invalid_argument("NSConfig: live_points must be >= 1");
  if (streams < 1) throw std::invalid_argument("NSConfig: streams must be >= 1");
  if (mcmc_steps < 1) throw std::invalid_argument("NSConfig: mcmc_steps must be >= 1");
  if (stop.truncation && !(*stop.truncation > 0 && *stop.truncation < 1)) {
    throw std::invalid_argument("NSConfig: truncation epsilon must lie in (0, 1)");
  }
  if (stop.relative && !(*stop.relative > 0 && *stop.relative < 1)) {
    throw std::invalid_argument("NSConfig: relative ratio must lie in (0, 1)");
  }
  if (stop.max_iterations && *stop.max_iterations < 1) {
    throw std::invalid_argument("NSConfig: max_iterations must be >= 1");
  }
  if (!stop.truncation && !stop.relative && !stop.max_iterations) {
    throw std::invalid_argument("NSConfig: no stop rule active");
  }
}

std::size_t truncation_iterations(std::size_t live_points, double eps) {
  return static_cast<std::size_t>(std::ceil(-static_cast<double>(live_points) * std::log(eps)));
}

double log_deterministic_width(std::size_t i, std::size_t live_points) {
  const double n = static_cast<double>(live_points);
  return -static_cast<double>(i - 1) / n + std::log(-std::expm1(-1.0 / n));
}

NSRun run_nested(const Model& model, const ConstrainedSampler& sampler, const NSConfig& cfg,
                 RandomSource& rng) {
  cfg.validate();
  const std::size_t n = cfg.live_points;
  NSRun run;
  run.live_points = n;
  run.scheme = cfg.scheme;
  run.seed = rng.seed();
  run.stream = rng.stream();

  std::vector<Point> live(n);
  std::vector<double> log_lik(n);
  std::set<std::pair<double, std::size_t>> order;
  for (std::size_t k = 0; k < n; ++k) {
    live[k] = model.sample_prior(rng);
    log_lik[k] = model.log_lik(live[k]);
    order.emplace(log_lik[k], k);
  }
  run.likelihood_evaluations = n;

  const std::size_t j_trunc = cfg.stop.truncation
                                  ? truncation_iterations(n, *cfg.stop.truncation)
                                  : std::numeric_limits<std::size_t>::max();
  const std::size_t j_max = cfg.stop.max_iterations.value_or(std::numeric_limits<std::size_t>::max());
  const double log_ratio = cfg.stop.relative ? std::log(*cfg.stop.relative) : kNegInf;

  LogAccumulator evidence;
  for (std::size_t i = 1;; ++i) {
    const auto [log_phi, worst] = *order.begin();
    run.records.push_back({i, live[worst], log_phi});

    const double log_term = log_deterministic_width(i, n) + log_phi;
    evidence.add(log_term);
    bool stop = i >= j_trunc || i >= j_max;
    if (cfg.stop.relative && log_term < log_ratio + evidence.log()) stop = true;
    if (stop) break;

    order.erase(order.begin());
    const ConstraintContext ctx{model, log_phi, run.records.back().point, live, worst, i};
    auto replacement = draw_constrained(sampler, ctx, rng);
    if (!replacement) {
      run.valid = false;
      run.failure = sampler_name(sampler) + " failed at iteration " + std::to_string(i);
      order.emplace(log_phi, worst);
      break;
    }
    run.likelihood_evaluations += replacement->evaluations;
    run.proposed_moves += replacement->proposed;
    run.accepted_moves += replacement->accepted;
    live[worst] = std::move(replacement->point);
    log_lik[worst] = replacement->log_lik;
    order.emplace(log_lik[worst], worst);
  }
  run.live_final = std::move(live);
  run.live_final_log_lik = std::move(log_lik);
  return run;
}

LogValue evidence_deterministic(const NSRun& run) {
  LogAccumulator acc;
  for (const auto& r : run.records) {
    acc.add(log_deterministic_width(r.iteration, run.live_points) + r.log_phi);
  }
  return acc.value();
}

LogValue evidence_random(const NSRun& run, std::size_t streams, RandomSource& rng) {
  if (streams < 1) throw std::invalid_argument("evidence_random: need K >= 1");
  const double n = static_cast<double>(run.live_points);
  double mean = 0;
  for (std::size_t k = 0; k < streams; ++k) {
    double log_x = 0;
    LogAccumulator acc;
    for (const auto& r : run.records) {
      const double log_t = rng.log_beta_n1(n);
      acc.add(log_x + std::log(-std::expm1(log_t)) + r.log_phi);
      log_x += log_t;
    }
    mean += acc.log();
  }
  return LogValue(mean / static_cast<double>(streams));
}

std::vector<WeightedPoint> posterior_weights(const NSRun& run) {
  std::vector<double> log_terms;
  log_terms.reserve(run.records.size());
  for (const auto& r : run.records) {
    log_terms.push_back(log_deterministic_width(r.iteration, run.live_points) + r.log_phi);
  }
  if (log_terms.empty()) throw std::runtime_error("posterior_weights: empty run");
  const double log_z = log_sum_exp<double>(log_terms);
  if (log_z == kNegInf) throw std::runtime_error("posterior_weights: all weights are zero");
  std::vector<WeightedPoint> out;
  out.reserve(log_terms.size());
  for (std::size_t i = 0; i < log_terms.size(); ++i) {
    out.push_back({run.records[i].point, std::exp(log_terms[i] - log_z)});
  }
  return out;
}

Eigen::VectorXd posterior_expectation(const NSRun& run,
                                      const std::function<Eigen::VectorXd(const Point&)>& f) {
  const auto weights = posterior_weights(run);
  Eigen::VectorXd acc;
  for (const auto& w : weights) {
    Eigen::VectorXd v = f(w.point);
    if (acc.size() == 0) acc = Eigen::VectorXd::Zero(v.size());
    acc += w.weight * v;
  }
  return acc;
}

std::string to_string(XScheme scheme) {
  return scheme == XScheme::deterministic ? "deterministic" : "random";
}

void write_run(std::ostream& out, const NSRun& run) {
  out << "N=" << run.live_points << ",j=" << run.iterations() << ",scheme=" << to_string(run.scheme)
      << ",seed=" << run.seed << ",stream=" << run.stream << '\n';
  out << std::setprecision(17);
  for (const auto& r : run.records) {
    out << r.iteration << ',' << r.log_phi;
    for (Eigen::Index k = 0; k < r.point.size(); ++k) out << ',' << r.point(k);
    out << '\n';
  }
}

namespace {

double parse_number(const std::string& s, std::size_t line) {
  if (s == "-inf") return kNegInf;
  std::size_t pos = 0;
  double v = 0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != s.size() || s.empty()) {
    throw std::runtime_error("read_run: line " + std::to_string(line) + ": bad number '" + s + "'");
  }
  return v;
}

}  // namespace

NSRun read_run(std::istream& in) {
  NSRun run;
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("read_run: missing header");
  std::size_t declared_j = 0;
  {
    std::istringstream hs(line);
    std::string kv;
    while (std::getline(hs, kv, ',')) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw std::runtime_error("read_run: malformed header");
      const std::string key = kv.substr(0, eq);
      const std::string val = kv.substr(eq + 1);
      if (key == "N") run.live_points = std::stoull(val);
      else if (key == "j") declared_j = std::stoull(val);
      else if (key == "scheme") run.scheme = val == "random" ? XScheme::random : XScheme::deterministic;
      else if (key == "seed") run.seed = std::stoull(val);
      else if (key == "stream") run.stream = std::stoull(val);
    }
  }
  if (run.live_points == 0) throw std::runtime_error("read_run: header lacks N");
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::istringstream ls(line);
    std::string f;
    while (std::getline(ls, f, ',')) fields.push_back(f);
    if (fields.size() < 2) throw std::runtime_error("read_run: line " + std::to_string(lineno) + ": too few fields");
    NSRecord rec;
    rec.iteration = std::stoull(fields[0]);
    rec.log_phi = parse_number(fields[1], lineno);
    rec.point.resize(static_cast<Eigen::Index>(fields.size() - 2));
    for (std::size_t k = 2; k < fields.size(); ++k) rec.point(k - 2) = parse_number(fields[k], lineno);
    run.records.push_back(std::move(rec));
  }
  if (run.records.size() != declared_j) {
    throw std::runtime_error("read_run: header declares j=" + std::to_string(declared_j) + " but file has " +
                             std::to_string(run.records.size()) + " records");
  }
  return run;
}

}  // namespace nestsample
