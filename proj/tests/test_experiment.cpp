#include <doctest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "nestsample/experiment.hpp"

using namespace nestsample;
namespace fs = std::filesystem;

namespace {

Config parse(const std::string& text) {
  std::istringstream in(text);
  return Config::parse(in, "test.cfg");
}

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::path(NESTSAMPLE_TEST_TMP) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string("\"") + NESTSAMPLE_CLI + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("config parsing") {
  const Config c = parse("# header comment\nexperiment = decentred\n  dims = 2, 3  # trailing\n\nseed=9\nseed = 10\n");
  CHECK(c.get("experiment") == "decentred");
  CHECK(c.get_sizes("dims", {}) == std::vector<std::size_t>{2, 3});
  CHECK(c.get_u64("seed", 0) == 10);
  CHECK(c.get("missing", "fallback") == "fallback");
  CHECK(c.get_double("missing", 1.5) == 1.5);
  CHECK_THROWS_AS(c.get("missing"), ConfigError);
  CHECK_THROWS_WITH_AS(parse("a = 1\nno equals sign\n"), doctest::Contains("test.cfg:2:"), ConfigError);
  CHECK_THROWS_AS(parse(" = 4\n"), ConfigError);
  const Config bad = parse("x = abc\nn = -3\nlist = 1,,2\n");
  CHECK_THROWS_AS(bad.get_double("x", 0), ConfigError);
  CHECK_THROWS_AS(bad.get_size("n", 0), ConfigError);
  CHECK_THROWS_AS(bad.get_list("list", {}), ConfigError);
  CHECK_THROWS_AS(Config::load("/nonexistent/config.cfg"), ConfigError);
}

TEST_CASE("config hash is stable and order independent") {
  const Config a = parse("x = 1\ny = 2\n");
  const Config b = parse("y = 2\n# comment\nx = 1\n");
  const Config c = parse("x = 1\ny = 3\n");
  CHECK(a.hash() == b.hash());
  CHECK(a.hash() != c.hash());
  CHECK(a.hash().size() == 16);
  CHECK(a.hash() == parse("x = 1\ny = 2\n").hash());
}

TEST_CASE("experiment config defaults and validation") {
  const ExperimentConfig d = ExperimentConfig::from(parse("experiment = decentred\n"));
  CHECK(d.dims == std::vector<int>{5, 10, 20});
  REQUIRE(d.grid.size() == 3);
  CHECK(d.grid[1].live_points == 100);
  CHECK(d.grid[1].mcmc_steps == 3);
  CHECK(d.replications == 20);
  CHECK(d.estimators == std::vector<std::string>{"ns"});

  const ExperimentConfig p = ExperimentConfig::from(parse("experiment = probit\nlive_points = 8, 16\n"));
  REQUIRE(p.grid.size() == 2);
  CHECK(p.grid[1].live_points == 16);
  CHECK(p.estimators.size() == 4);

  CHECK_THROWS_AS(ExperimentConfig::from(parse("experiment = nope\n")), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from(parse("")), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from(parse("experiment = mixture\nestimators = ns, bogus\n")), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from(parse("experiment = decentred\ngrid = 100\n")), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from(parse("experiment = decentred\ngrid = 100:0\n")), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from(parse("experiment = decentred\ngrid = 0:1\n")), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from(parse("experiment = decentred\nreplications = 0\n")), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from(parse("experiment = clt\nreplications = 1\n")), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from(parse("experiment = decentred\ndims = 0\n")), ConfigError);
}

TEST_CASE("result and summary schemas") {
  CHECK(result_columns() ==
        std::vector<std::string>{"experiment", "estimator", "config_point", "replication", "seed", "stream",
                                 "log_z", "log_z_ref", "log_error", "iterations", "likelihood_evaluations",
                                 "wall_seconds", "status", "message", "config_hash"});
  CHECK(summary_columns() ==
        std::vector<std::string>{"experiment", "estimator", "config_point", "rows", "failures",
                                 "median_log_error", "iqr_log_error", "sd_log_error", "mean_iterations",
                                 "mean_likelihood_evaluations", "statistic", "statistic_value", "config_hash"});
}

TEST_CASE("result CSV roundtrip") {
  ResultRow a;
  a.experiment = "mixture";
  a.estimator = "is";
  a.config_point = "n=10;N=5";
  a.replication = 3;
  a.seed = 12345678901234ULL;
  a.stream = (1ULL << 40) | 7;
  a.log_z = -12.345678901234567;
  a.log_z_ref = -12.3;
  a.iterations = 17;
  a.likelihood_evaluations = 99;
  a.wall_seconds = 0.25;
  a.config_hash = "00112233aabbccdd";
  ResultRow b = a;
  b.ok = false;
  b.message = "bad \"thing\", at 3";
  b.log_z = std::numeric_limits<double>::quiet_NaN();

  std::stringstream ss;
  write_result_header(ss);
  write_result_row(ss, a);
  write_result_row(ss, b);
  const auto rows = read_results(ss);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].config_point == a.config_point);
  CHECK(rows[0].seed == a.seed);
  CHECK(rows[0].stream == a.stream);
  CHECK(rows[0].log_z == a.log_z);
  CHECK(rows[0].ok);
  CHECK_FALSE(rows[1].ok);
  CHECK(rows[1].message == b.message);
  CHECK(std::isnan(rows[1].log_z));

  std::istringstream bad_header("a,b,c\n");
  CHECK_THROWS(read_results(bad_header));
  std::stringstream short_row;
  write_result_header(short_row);
  short_row << "x,y\n";
  CHECK_THROWS_WITH(read_results(short_row), doctest::Contains("line 2"));
}

TEST_CASE("summaries group rows and skip failures") {
  std::vector<ResultRow> rows;
  for (double e : {0.1, -0.2, 0.4, 0.0}) {
    ResultRow r;
    r.estimator = "ns";
    r.config_point = "p";
    r.log_z = e;
    r.iterations = 10;
    rows.push_back(r);
  }
  ResultRow f;
  f.estimator = "ns";
  f.config_point = "p";
  f.ok = false;
  rows.push_back(f);
  ResultRow other;
  other.estimator = "is";
  other.config_point = "p";
  rows.push_back(other);

  const auto s = summarize(rows);
  REQUIRE(s.size() == 2);
  CHECK(s[0].estimator == "ns");
  CHECK(s[0].rows == 5);
  CHECK(s[0].failures == 1);
  CHECK(s[0].median_log_error == doctest::Approx(0.05));
  CHECK(s[0].iqr_log_error == doctest::Approx(0.175 - (-0.05)));  // type-7 quartiles
  CHECK(s[0].sd_log_error == doctest::Approx(0.25));
  CHECK(s[0].mean_iterations == 10.0);
  CHECK(std::isnan(s[1].sd_log_error));

  ResultLog log;
  log.rows = rows;
  log.summary = s;
  CHECK(log.failures() == 1);
  CHECK(log.find("is", "p") != nullptr);
  CHECK(log.find("is", "q") == nullptr);
  CHECK(log.log_errors("ns", "p").size() == 4);
}

TEST_CASE("runs are reproducible and independent of the thread count") {
  const std::string text =
      "experiment = decentred\ndims = 2\ngrid = 20:1, 20:2\nreplications = 4\nseed = 77\nestimators = ns, ns_random\n";
  Config c1 = parse(text);
  Config c2 = parse(text);
  c2.set("threads", "2");
  const ResultLog a = run_experiment(ExperimentConfig::from(c1));
  const ResultLog b = run_experiment(ExperimentConfig::from(c2));
  const ResultLog again = run_experiment(ExperimentConfig::from(c1));
  REQUIRE(a.rows.size() == 16);
  REQUIRE(b.rows.size() == a.rows.size());
  for (std::size_t k = 0; k < a.rows.size(); ++k) {
    CHECK(a.rows[k].log_z == b.rows[k].log_z);
    CHECK(a.rows[k].log_z == again.rows[k].log_z);
    CHECK(a.rows[k].stream == b.rows[k].stream);
  }
  CHECK(a.failures() == 0);
  Config c3 = parse(text);
  c3.set("seed", "78");
  CHECK(run_experiment(ExperimentConfig::from(c3)).rows[0].log_z != a.rows[0].log_z);
}

TEST_CASE("probit importance sampling gets the nested budget") {
  const Config c = parse(
      "experiment = probit\nn = 60\ngrid = 8:0\nreplications = 3\nreference_live_points = 64\nseed = 5\n");
  const ResultLog log = run_experiment(ExperimentConfig::from(c));
  CHECK(log.failures() == 0);
  for (std::size_t rep = 0; rep < 3; ++rep) {
    const ResultRow* nis = nullptr;
    const ResultRow* is = nullptr;
    for (const auto& r : log.rows) {
      if (r.replication != rep) continue;
      if (r.estimator == "nis1") nis = &r;
      if (r.estimator == "is1") is = &r;
    }
    REQUIRE(nis);
    REQUIRE(is);
    CHECK(nis->likelihood_evaluations > 0);
    CHECK(std::abs(double(is->likelihood_evaluations) - double(nis->likelihood_evaluations)) <=
          0.01 * double(nis->likelihood_evaluations));
    CHECK(is->log_z_ref == nis->log_z_ref);
  }
}

TEST_CASE("a failing sub-run becomes a failed row") {
  const ResultLog log = run_experiment(ExperimentConfig::from(parse("experiment = clt\nreplications = 5\nepsilon = 2\n")));
  CHECK(log.failures() == 1);
  const auto it = std::find_if(log.rows.begin(), log.rows.end(), [](const ResultRow& r) { return !r.ok; });
  REQUIRE(it != log.rows.end());
  CHECK(it->message.find("epsilon") != std::string::npos);
  CHECK(std::isnan(it->log_z));
}

TEST_CASE("clt and vdscale record their statistics") {
  const ResultLog clt = run_experiment(ExperimentConfig::from(
      parse("experiment = clt\nreplications = 40\nlive_points = 30\ntau = 1e-3\nband = 10\n")));
  REQUIRE(clt.summary.size() == 1);
  CHECK(clt.summary[0].statistic == "variance_ratio");
  CHECK(clt.summary[0].statistic_value > 0);
  CHECK(clt.summary[0].rows == 40);

  const ResultLog vd = run_experiment(ExperimentConfig::from(parse("experiment = vdscale\ndims = 2, 4\n")));
  REQUIRE(vd.rows.size() == 2);
  CHECK(std::exp(vd.rows[0].log_z) == doctest::Approx(0.25).epsilon(1e-4));
  CHECK(vd.summary[0].statistic == "V_over_d");
}

TEST_CASE("output directory holds results, summary and metadata") {
  const fs::path dir = fresh_dir("exp_out");
  Config c = parse("experiment = decentred\ndims = 2\ngrid = 10:1\nreplications = 3\n");
  c.set("output", dir.string());
  const ResultLog log = run_experiment(ExperimentConfig::from(c));
  const std::string results = slurp(dir / "decentred_results.csv");
  CHECK(results.rfind("experiment,estimator,config_point,replication,", 0) == 0);
  CHECK(std::count(results.begin(), results.end(), '\n') == 4);
  std::ifstream rin(dir / "decentred_results.csv");
  const auto back = read_results(rin);
  REQUIRE(back.size() == log.rows.size());
  CHECK(back[2].log_z == log.rows[2].log_z);
  CHECK(back[0].config_hash == c.hash());
  const std::string summary = slurp(dir / "decentred_summary.csv");
  CHECK(summary.rfind("experiment,estimator,config_point,rows,failures,", 0) == 0);
  const std::string meta = slurp(dir / "decentred_results.meta");
  CHECK(meta.find(std::string("artifact_version = ") + kArtifactVersion) != std::string::npos);
  CHECK(meta.find("config_hash = " + c.hash()) != std::string::npos);
  CHECK(meta.find("config.grid = 10:1") != std::string::npos);
}

TEST_CASE("probit enumeration") {
  RandomSource rng(1);
  Eigen::VectorXd truth(3);
  truth << 0.5, 0.0, 0.8;
  const ProbitData data = synthetic_probit(200, truth, rng);
  EnumerationOptions opt;

  const auto single = probit_model_enumeration(data.X, data.y, {{0, 2}}, opt);
  REQUIRE(single.size() == 1);
  CHECK(single[0].posterior_probability == doctest::Approx(1.0));
  CHECK(std::isfinite(single[0].log_z));

  Eigen::MatrixXd dup(data.X.rows(), 3);
  dup << data.X.col(0), data.X.col(2), data.X.col(2);
  const auto flagged = probit_model_enumeration(dup, data.y, {{0, 1}, {0, 1, 2}}, opt);
  CHECK_FALSE(flagged[0].failed);
  CHECK(flagged[1].failed);
  CHECK(flagged[1].message.find("rank deficient") != std::string::npos);
  CHECK(flagged[0].posterior_probability == doctest::Approx(1.0));

  CHECK_THROWS_AS(probit_model_enumeration(data.X, data.y, {{1, 2}}, opt), std::invalid_argument);
  CHECK_THROWS_AS(probit_model_enumeration(data.X, data.y, {{0, 5}}, opt), std::invalid_argument);
  CHECK(all_intercept_subsets(4).size() == 8);
  CHECK(all_intercept_subsets(1) == std::vector<std::vector<std::size_t>>{{0}});

  std::ostringstream csv;
  write_enumeration_csv(csv, single, data.columns);
  CHECK(csv.str().find("intercept") != std::string::npos);
}

TEST_CASE("enumeration favours the generating covariates") {
  Eigen::VectorXd truth(3);
  truth << 0.5, 0.0, 0.8;
  const auto subsets = all_intercept_subsets(3);
  int top = 0;
  for (std::uint64_t s = 0; s < 50; ++s) {
    RandomSource rng(1000 + s);
    const ProbitData data = synthetic_probit(200, truth, rng);
    EnumerationOptions opt;
    opt.seed = s;
    const auto rows = probit_model_enumeration(data.X, data.y, subsets, opt);
    const auto best = std::max_element(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
      return a.posterior_probability < b.posterior_probability;
    });
    if (best->columns == std::vector<std::size_t>{0, 2}) ++top;
  }
  CHECK(top >= 45);
}

TEST_CASE("command-line exit codes") {
  const fs::path dir = fresh_dir("cli");
  const fs::path log = dir / "log.txt";
  CHECK(run_cli("variance gaussian-toy 2 2.5e-7 --out \"" + dir.string() + "\"", log) == 0);
  CHECK(slurp(log).find("d,epsilon,V,V_over_d,bound,Z,V_over_Z2,quadrature_error") != std::string::npos);
  CHECK(fs::exists(dir / "variance.csv"));

  CHECK(run_cli("variance nothing 2 0.1", log) == 1);
  CHECK(run_cli("run \"" + (dir / "missing.cfg").string() + "\"", log) == 1);
  CHECK(run_cli("frobnicate", log) == 1);

  std::ofstream(dir / "bad.cfg") << "experiment = decentred\ngrid = 5\n";
  CHECK(run_cli("run \"" + (dir / "bad.cfg").string() + "\"", log) == 1);
  CHECK(slurp(log).find("grid") != std::string::npos);

  std::ofstream(dir / "good.cfg") << "experiment = decentred\ndims = 2\ngrid = 10:1\nreplications = 2\n";
  CHECK(run_cli("run \"" + (dir / "good.cfg").string() + "\" --out \"" + (dir / "good").string() + "\"", log) == 0);
  CHECK(fs::exists(dir / "good" / "decentred_results.csv"));

  std::ofstream(dir / "clt_fail.cfg") << "replications = 3\nepsilon = 2\n";
  CHECK(run_cli("clt \"" + (dir / "clt_fail.cfg").string() + "\"", log) == 2);

  std::ofstream(dir / "enum.cfg") << "n = 120\ntheta_true = 0.5, 0.0, 0.8\nsubsets = 0+2, 0+1+2\nlive_points = 32\n";
  CHECK(run_cli("enumerate-probit \"" + (dir / "enum.cfg").string() + "\" --out \"" + (dir / "enum").string() + "\"",
                log) == 0);
  CHECK(fs::exists(dir / "enum" / "probit_enumeration.csv"));
}
