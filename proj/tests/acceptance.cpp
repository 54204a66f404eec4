// Acceptance harness: one PASS/FAIL line per criterion, nonzero exit if any
// criterion fails. Informational lines are tagged INFO or SKIP and never fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "nestsample/alt_estimators.hpp"
#include "nestsample/diagnostics.hpp"
#include "nestsample/experiment.hpp"
#include "nestsample/models.hpp"
#include "nestsample/nested_sampler.hpp"

using namespace nestsample;

namespace {

using Clock = std::chrono::steady_clock;

int failures = 0;

void report(bool pass, const std::string& name, const std::string& detail) {
  std::printf("%s %s: %s\n", pass ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

void info(const std::string& tag, const std::string& name, const std::string& detail) {
  std::printf("%s %s: %s\n", tag.c_str(), name.c_str(), detail.c_str());
  std::fflush(stdout);
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Config preset(const std::string& text) {
  std::istringstream in(text);
  return Config::parse(in, "acceptance");
}

// Runs a criterion body, turning an exception into a FAIL line.
void guarded(const std::string& name, const std::function<void()>& body) {
  try {
    body();
  } catch (const std::exception& e) {
    report(false, name, std::string("exception: ") + e.what());
  }
}

void analytic_z() {
  const std::string name = "analytic_z_recovery";
  guarded(name, [&] {
    const Model toy = centred_gaussian_toy(2);
    NSConfig cfg;
    cfg.live_points = 1000;
    cfg.stop = StopRule::fixed_truncation(1e-6 * std::exp2(-1.0));
    std::vector<double> err;
    const auto t0 = Clock::now();
    for (std::uint64_t r = 0; r < 100; ++r) {
      RandomSource rng(1, r);
      const NSRun run = run_nested(toy, ExactRadial{2}, cfg, rng);
      err.push_back(evidence_deterministic(run).log() - *toy.log_evidence);
    }
    const double secs = seconds_since(t0);
    const double med = median(err);
    const double iqr = interquartile_range(err);
    report(std::abs(med) < 0.02 && iqr < 0.1 && secs < 60, name,
           fmt("median=%.5f (<0.02) IQR=%.5f (<0.1) runtime=%.1fs (<60)", med, iqr, secs));
  });
}

void clt_and_rate() {
  guarded("clt_variance_match", [&] {
    const auto t0 = Clock::now();
    const ResultLog log = run_experiment(ExperimentConfig::from(preset("experiment = clt\n")));
    const double secs = seconds_since(t0);
    if (log.summary.size() != 1) throw std::runtime_error("unexpected clt summary size");
    const double ratio = log.summary[0].statistic_value;
    const double var = ratio * 0.25;
    report(std::abs(ratio - 1.0) <= 0.15 && secs < 180, "clt_variance_match",
           fmt("R=500 N=100 var(sqrt(N) err)=%.4f vs 0.25, ratio=%.4f (within 15%%) runtime=%.1fs (<180)", var,
               ratio, secs));
  });
  guarded("rate_check", [&] {
    const Model toy = centred_gaussian_toy(2);
    CltOptions o;
    o.replications = 500;
    o.epsilon = 1e-6 * std::exp2(-1.0);
    o.band = 1e9;  // only the raw variances are used here
    o.seed = 2;
    o.live_points = 25;
    const CltReport small = clt_check(toy, ExactRadial{2}, o);
    o.live_points = 400;
    o.seed = 3;
    const CltReport large = clt_check(toy, ExactRadial{2}, o);
    const double factor = small.raw_variance / large.raw_variance;
    report(factor >= 12 && factor <= 20, "rate_check",
           fmt("var(N=25)=%.5f var(N=400)=%.6f factor=%.2f (in [12, 20])", small.raw_variance, large.raw_variance,
               factor));
  });
}

void dimension_scaling() {
  guarded("dimension_scaling", [&] {
    const std::vector<int> dims{1, 2, 5, 10, 20, 40};
    const auto rows = vd_scaling(dims, 1e-6);
    bool ok = true;
    std::string detail;
    for (const auto& r : rows) {
      ok = ok && r.within_bound;
      detail += fmt("d=%d V/d=%.4f; ", r.dim, r.variance_over_dim);
    }
    double worst = 0;
    for (std::size_t k = 0; k + 1 < rows.size(); ++k) {
      if (rows[k].dim < 10 || rows[k + 1].dim != 2 * rows[k].dim) continue;
      worst = std::max(worst, std::abs(rows[k + 1].variance_over_dim / rows[k].variance_over_dim - 1.0));
    }
    ok = ok && worst < 0.5;
    report(ok, "dimension_scaling",
           detail + fmt("bound=%.3f, max doubling variation (d>=10)=%.1f%% (<50%%)", rows[0].bound, 100 * worst));
  });
}

void decentred_bias() {
  guarded("decentred_bias_pattern", [&] {
    const ResultLog log = run_experiment(ExperimentConfig::from(preset("experiment = decentred\n")));
    auto med = [&](int d, int m) {
      return median(log.log_errors("ns", fmt("d=%d;N=100;M=%d", d, m)));
    };
    const double m5 = med(5, 1), m10 = med(10, 1), m20 = med(20, 1);
    const bool decreasing = m10 < m5 && m20 < m10;
    bool within = true;
    std::string others;
    for (int m : {3, 5}) {
      for (int d : {5, 10, 20}) {
        const double v = med(d, m);
        within = within && std::abs(v) <= 0.5;
        others += fmt("(d=%d,M=%d)=%.3f ", d, m, v);
      }
    }
    // least-squares fit of mean iterations on d for (N, M) = (100, 5)
    std::vector<double> xs{5, 10, 20}, ys;
    for (int d : {5, 10, 20}) ys.push_back(log.find("ns", fmt("d=%d;N=100;M=5", d))->mean_iterations);
    const double mx = sample_mean(xs), my = sample_mean(ys);
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t k = 0; k < 3; ++k) {
      sxy += (xs[k] - mx) * (ys[k] - my);
      sxx += (xs[k] - mx) * (xs[k] - mx);
      syy += (ys[k] - my) * (ys[k] - my);
    }
    const double r2 = sxy * sxy / (sxx * syy);
    report(decreasing && within && r2 > 0.99 && log.failures() == 0, "decentred_bias_pattern",
           fmt("M=1 medians d=5,10,20: %.3f, %.3f, %.3f (strictly decreasing: %s); ", m5, m10, m20,
               decreasing ? "yes" : "no") +
               others + fmt("(|.|<=0.5: %s); iterations %.0f, %.0f, %.0f R^2=%.4f (>0.99)", within ? "yes" : "no",
                            ys[0], ys[1], ys[2], r2));
  });
}

void mixture_agreement() {
  guarded("mixture_estimator_agreement", [&] {
    const ResultLog log = run_experiment(ExperimentConfig::from(preset("experiment = mixture\nomega1 = auto\n")));
    const std::string point = "n=10;N=1000";
    bool medians_ok = log.failures() == 0;
    std::string detail;
    auto iqr = [&](const std::string& e) { return interquartile_range(log.log_errors(e, point)); };
    for (const char* e : {"ns", "reverse_is", "is", "mixture"}) {
      const double m = median(log.log_errors(e, point));
      medians_ok = medians_ok && std::abs(m) < 0.2;
      detail += fmt("%s median=%.4f IQR=%.4f; ", e, m, iqr(e));
    }
    const bool order = iqr("is") <= iqr("mixture") && iqr("mixture") <= iqr("reverse_is") && iqr("reverse_is") <= iqr("ns");
    report(medians_ok && order, "mixture_estimator_agreement",
           detail + fmt("medians within 0.2: %s, IQR order IS<=mixture<=reverse-IS<=NS: %s", medians_ok ? "yes" : "no",
                        order ? "yes" : "no"));
  });
}

struct ProbitOutcome {
  bool nis_beats_is = true;
  bool scenario2_ok = true;
  std::string detail;
};

ProbitOutcome probit_compare(double multiplier) {
  const ResultLog log = run_experiment(ExperimentConfig::from(
      preset("experiment = probit\ncurvature_multiplier = " + std::to_string(multiplier) + "\n")));
  ProbitOutcome out;
  if (log.failures() > 0) out.nis_beats_is = false;
  for (int n : {8, 32, 128}) {
    const std::string point = fmt("d=3;N=%d", n);
    const double nis1 = log.find("nis1", point)->sd_log_error;
    const double is1 = log.find("is1", point)->sd_log_error;
    const double nis2 = log.find("nis2", point)->sd_log_error;
    out.nis_beats_is = out.nis_beats_is && nis1 <= is1;
    out.scenario2_ok = out.scenario2_ok && nis2 <= 3 * nis1;
    out.detail += fmt("N=%d sd nis1=%.4f is1=%.4f nis2=%.4f; ", n, nis1, is1, nis2);
  }
  return out;
}

void probit_nis() {
  guarded("probit_nested_ellipsoids_vs_is", [&] {
    const ProbitOutcome o = probit_compare(0.5);
    report(o.nis_beats_is && o.scenario2_ok, "probit_nested_ellipsoids_vs_is",
           "Sigma_m = 0.5 * inverse Hessian; " + o.detail +
               fmt("nis1<=is1: %s, nis2<=3*nis1: %s", o.nis_beats_is ? "yes" : "no", o.scenario2_ok ? "yes" : "no"));
  });
  try {
    const ProbitOutcome o = probit_compare(1.0);
    info("INFO", "probit_standard_curvature",
         "Sigma_m = inverse Hessian; " + o.detail +
             fmt("nis1<=is1: %s, nis2<=3*nis1: %s", o.nis_beats_is ? "yes" : "no", o.scenario2_ok ? "yes" : "no"));
  } catch (const std::exception& e) {
    info("INFO", "probit_standard_curvature", std::string("exception: ") + e.what());
  }

  const char* csv = std::getenv("NESTSAMPLE_ARSENIC_CSV");
  if (!csv) {
    info("SKIP", "probit_arsenic_enumeration", "set NESTSAMPLE_ARSENIC_CSV to a y,dist,arsenic,educ CSV to run");
    return;
  }
  guarded("probit_arsenic_enumeration", [&] {
    ProbitCsvOptions opt;
    std::ifstream head(csv);
    std::string header;
    std::getline(head, header);
    std::vector<std::string> names;
    std::stringstream hs(header);
    for (std::string f; std::getline(hs, f, ',');) names.push_back(f);
    if (names.size() != 4) throw std::runtime_error("expected columns y,dist,arsenic,educ");
    opt.cross_effects = {{names[1], names[2]}, {names[1], names[3]}, {names[2], names[3]}};
    const ProbitData data = load_probit_csv(csv, opt);
    EnumerationOptions eo;
    const auto rows = probit_model_enumeration(data.X, data.y, all_intercept_subsets(data.X.cols()), eo);
    std::vector<std::size_t> order(rows.size());
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return rows[a].posterior_probability > rows[b].posterior_probability; });
    const std::vector<std::size_t> best{0, 1, 2, 3, 5};  // main effects and dist:educ
    const std::vector<std::size_t> second{0, 1, 2, 3};
    report(rows[order[0]].columns == best && rows[order[1]].columns == second, "probit_arsenic_enumeration",
           fmt("top posterior %.3f, second %.3f", rows[order[0]].posterior_probability,
               rows[order[1]].posterior_probability));
  });
}

void lemma1() {
  guarded("lemma1_posterior_mean", [&] {
    const Model dec = decentred_gaussian(1);
    NSConfig cfg;
    cfg.live_points = 200;
    std::vector<double> means;
    for (std::uint64_t r = 0; r < 50; ++r) {
      RandomSource rng(4, r);
      const NSRun run = run_nested(dec, GibbsDecentred{Eigen::VectorXd::Constant(1, 3.0), 1}, cfg, rng);
      means.push_back(posterior_expectation(run, [](const Point& t) { return Eigen::VectorXd(t); })(0));
    }
    const double m = sample_mean(means);
    const double se = std::sqrt(sample_variance(means) / means.size());
    report(std::abs(m - 1.5) <= 3 * se, "lemma1_posterior_mean",
           fmt("mean over 50 runs=%.5f, SE=%.5f, |mean-1.5|=%.5f (<=3 SE)", m, se, std::abs(m - 1.5)));
  });
}

void bridge_identity() {
  guarded("bridge_identity", [&] {
    RandomSource drng(1, 0xDA7A);
    const Model mix = mixture_model(synthetic_mixture_data(10, drng), 0.5);
    RandomSource rng(5);
    const auto kernel = random_walk_posterior_kernel(mix, Eigen::Vector2d(0.5, 0.5));
    Point start(2);
    start << 2.0, 1.0;
    const auto post = posterior_chain(start, 2000, 500, kernel, rng);
    const ProposalDensity g = kernel_proposal_fit(post, KernelKind::student_t, 2.0);
    double worst = 0;
    for (double omega1 : {1e-3, 1.0, 1e4}) {
      const auto chain = mixture_gibbs(mix, g, omega1, 5000, post.back(), kernel, rng);
      const double a = z3_from_xi(rao_blackwell_xi(chain, mix, g, omega1), omega1).log();
      const double b = z3_bridge_form(chain, mix, g, omega1).log();
      worst = std::max(worst, std::abs(a - b));
    }
    report(worst < 1e-10, "bridge_identity", fmt("max |log Z3(xi) - log Z3(two-sum)| = %.3e (<1e-10)", worst));
  });
}

}  // namespace

int main() {
  const auto t0 = Clock::now();
  analytic_z();
  clt_and_rate();
  dimension_scaling();
  decentred_bias();
  mixture_agreement();
  probit_nis();
  lemma1();
  bridge_identity();
  std::printf("acceptance: %d criterion(s) failed, %.0fs total\n", failures, seconds_since(t0));
  return failures == 0 ? 0 : 1;
}
