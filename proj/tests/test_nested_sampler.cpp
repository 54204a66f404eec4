#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "nestsample/diagnostics.hpp"
#include "nestsample/models.hpp"
#include "nestsample/nested_sampler.hpp"

using namespace nestsample;

namespace {

Model constant_model(double log_c) {
  Model m;
  m.dim = 1;
  m.log_prior = [](const Point& t) { return -0.5 * (std::log(2 * std::numbers::pi) + t.squaredNorm()); };
  m.log_lik = [log_c](const Point&) { return log_c; };
  m.sample_prior = [](RandomSource& rng) { return rng.normal_vector(1); };
  m.name = "constant";
  return m;
}

NSConfig config(std::size_t n, StopRule stop) {
  NSConfig c;
  c.live_points = n;
  c.stop = stop;
  return c;
}

}  // namespace

TEST_CASE("constant likelihood reproduces the quadrature sum exactly") {
  const double log_c = 0.7;
  const Model m = constant_model(log_c);
  RandomSource rng(1);
  NSRun run = run_nested(m, Rejection{}, config(100, StopRule::iterations(200)), rng);
  REQUIRE(run.iterations() == 200);
  CHECK(evidence_deterministic(run).log() == doctest::Approx(log_c + std::log1p(-std::exp(-2.0))).epsilon(1e-13));
  run = run_nested(m, Rejection{}, config(100, StopRule::iterations(1)), rng);
  CHECK(evidence_deterministic(run).log() == doctest::Approx(log_c + std::log(-std::expm1(-0.01))).epsilon(1e-13));
}

TEST_CASE("truncation rule runs ceil(-N log eps) iterations") {
  CHECK(truncation_iterations(100, std::exp(-2.0)) == 200);
  CHECK(truncation_iterations(1000, 1e-3) == 6908);
  RandomSource rng(2);
  const NSRun run = run_nested(constant_model(0.0), Rejection{}, config(10, StopRule::fixed_truncation(0.5)), rng);
  CHECK(run.iterations() == 7);
}

TEST_CASE("deterministic widths") {
  double s = 0;
  for (std::size_t i = 1; i <= 500; ++i) s += std::exp(log_deterministic_width(i, 50));
  CHECK(s == doctest::Approx(1 - std::exp(-10.0)).epsilon(1e-13));
}

TEST_CASE("d=2 toy evidence is close to one") {
  const Model toy = centred_gaussian_toy(2);
  for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
    RandomSource rng(seed);
    const NSRun run = run_nested(toy, ExactRadial{2}, config(500, StopRule::relative_contribution()), rng);
    CHECK(run.valid);
    CHECK(std::abs(evidence_deterministic(run).log()) < 0.1);
  }
}

TEST_CASE("random abscissae inflate the spread") {
  const Model toy = centred_gaussian_toy(2);
  std::vector<double> det, rnd;
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    RandomSource rng(seed, 7);
    const NSRun run = run_nested(toy, ExactRadial{2}, config(50, StopRule::fixed_truncation(1e-6)), rng);
    det.push_back(evidence_deterministic(run).log());
    rnd.push_back(evidence_random(run, 1, rng).log());
  }
  CHECK(sample_variance(rnd) > sample_variance(det));
  RandomSource rng(1);
  CHECK_THROWS(evidence_random(NSRun{}, 0, rng));
}

TEST_CASE("posterior weights are normalized and proportional to widths") {
  const Model toy = centred_gaussian_toy(2);
  RandomSource rng(9);
  const NSRun run = run_nested(toy, ExactRadial{2}, config(40, StopRule::fixed_truncation(1e-5)), rng);
  const auto w = posterior_weights(run);
  double total = 0;
  for (const auto& p : w) total += p.weight;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  const double log_z = evidence_deterministic(run).log();
  for (std::size_t i = 0; i < w.size(); i += 37) {
    const double expect = std::exp(log_deterministic_width(i + 1, 40) + run.records[i].log_phi - log_z);
    CHECK(w[i].weight == doctest::Approx(expect).epsilon(1e-10));
  }
  const auto one = posterior_expectation(run, [](const Point&) { return Eigen::VectorXd::Ones(1); });
  CHECK(one(0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("posterior expectation of ||theta||^2 is consistent") {
  // posterior of the toy is N(0, I / 8pi); oracle by 10^6 self-normalized prior draws
  const Model toy = centred_gaussian_toy(2);
  RandomSource mc(31);
  double num = 0, den = 0;
  for (int k = 0; k < 1000000; ++k) {
    const Point t = toy.sample_prior(mc);
    const double l = std::exp(toy.log_lik(t));
    num += l * t.squaredNorm();
    den += l;
  }
  const double oracle = num / den;
  CHECK(oracle == doctest::Approx(2 / (8 * std::numbers::pi)).epsilon(0.01));

  std::vector<double> estimates;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    RandomSource rng(seed, 3);
    const NSRun run = run_nested(toy, ExactRadial{2}, config(200, StopRule::relative_contribution()), rng);
    estimates.push_back(
        posterior_expectation(run, [](const Point& t) { return Eigen::VectorXd::Constant(1, t.squaredNorm()); })(0));
  }
  const double se = std::sqrt(sample_variance(estimates) / estimates.size());
  CHECK(std::abs(sample_mean(estimates) - oracle) < 3 * se + 0.002);
}

TEST_CASE("ties go to the lowest live index and log phi never decreases") {
  const Model m = constant_model(0.0);
  RandomSource rng(4);
  const NSRun run = run_nested(m, Rejection{}, config(5, StopRule::iterations(5)), rng);
  // every live point ties, so the first record is the initial point 0
  RandomSource replay(4);
  const Point first = m.sample_prior(replay);
  CHECK(run.records.front().point == first);

  const Model toy = centred_gaussian_toy(3);
  RandomSource rng2(5);
  const NSRun toy_run = run_nested(toy, ExactRadial{3}, config(30, StopRule::fixed_truncation(1e-4)), rng2);
  for (std::size_t i = 1; i < toy_run.records.size(); ++i) {
    CHECK(toy_run.records[i].log_phi >= toy_run.records[i - 1].log_phi);
  }
}

TEST_CASE("run files roundtrip and reject malformed input") {
  const Model toy = centred_gaussian_toy(2);
  RandomSource rng(6, 2);
  const NSRun run = run_nested(toy, ExactRadial{2}, config(20, StopRule::iterations(50)), rng);
  std::stringstream ss;
  write_run(ss, run);
  const NSRun back = read_run(ss);
  CHECK(back.live_points == 20);
  CHECK(back.seed == 6);
  CHECK(back.stream == 2);
  REQUIRE(back.iterations() == run.iterations());
  for (std::size_t i = 0; i < run.iterations(); ++i) {
    CHECK(back.records[i].log_phi == run.records[i].log_phi);
    CHECK(back.records[i].point == run.records[i].point);
  }
  CHECK(evidence_deterministic(back).log() == evidence_deterministic(run).log());

  std::istringstream empty("");
  CHECK_THROWS(read_run(empty));
  std::istringstream no_n("j=1\n1,0.5,0.1\n");
  CHECK_THROWS(read_run(no_n));
  std::istringstream short_j("N=2,j=3\n1,0.5,0.1\n");
  CHECK_THROWS_WITH(read_run(short_j), doctest::Contains("j=3"));
  std::istringstream bad("N=2,j=1\n1,zz,0.1\n");
  CHECK_THROWS_WITH(read_run(bad), doctest::Contains("line 2"));
}

TEST_CASE("configuration validation") {
  NSConfig c;
  CHECK_NOTHROW(c.validate());
  c.live_points = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = NSConfig{};
  c.stop = StopRule::fixed_truncation(1.5);
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c.stop = StopRule::relative_contribution(0.0);
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c.stop = StopRule{};
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = NSConfig{};
  c.streams = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("a failing sampler marks the run invalid and keeps its records") {
  const Model toy = centred_gaussian_toy(2);
  RandomSource rng(7);
  const NSRun run = run_nested(toy, Rejection{3}, config(10, StopRule::fixed_truncation(1e-12)), rng);
  CHECK_FALSE(run.valid);
  CHECK(run.failure.find("rejection") != std::string::npos);
  CHECK(run.iterations() >= 1);
  CHECK(run.iterations() < truncation_iterations(10, 1e-12));
}
