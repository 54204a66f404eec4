// Command-line front end for the experiment harness.
//
//   nestsample run <config>               replication sweep from a config file
//   nestsample clt <config>               same, experiment forced to clt
//   nestsample enumerate-probit <config>  evidence of every probit covariate subset
//   nestsample variance <model> <d> <eps> asymptotic variance by quadrature
//
// Exit status: 0 on success, 2 when some sub-runs failed, 1 on bad input.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>

#include "nestsample/diagnostics.hpp"
#include "nestsample/experiment.hpp"

namespace ns = nestsample;

namespace {

struct GlobalFlags {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> threads;
};

ns::Config load_with_overrides(const std::string& path, const GlobalFlags& flags) {
  ns::Config c = ns::Config::load(path);
  if (flags.seed) c.set("seed", std::to_string(*flags.seed));
  if (flags.out) c.set("output", *flags.out);
  if (flags.threads) c.set("threads", std::to_string(*flags.threads));
  return c;
}

void print_summary(const ns::ResultLog& log) {
  std::cout << std::left << std::setw(12) << "estimator" << std::setw(24) << "config" << std::right
            << std::setw(6) << "rows" << std::setw(6) << "fail" << std::setw(14) << "median_err"
            << std::setw(12) << "iqr_err" << std::setw(14) << "mean_iter" << "  statistic\n";
  for (const auto& s : log.summary) {
    std::cout << std::left << std::setw(12) << s.estimator << std::setw(24) << s.config_point << std::right
              << std::setw(6) << s.rows << std::setw(6) << s.failures << std::setw(14) << std::setprecision(5)
              << s.median_log_error << std::setw(12) << s.iqr_log_error << std::setw(14) << s.mean_iterations;
    if (!s.statistic.empty()) std::cout << "  " << s.statistic << "=" << s.statistic_value;
    std::cout << '\n';
  }
}

int run_sweep(const std::string& path, const GlobalFlags& flags, bool force_clt) {
  ns::Config c = load_with_overrides(path, flags);
  if (force_clt) {
    if (c.has("experiment") && c.get("experiment") != "clt") {
      throw ns::ConfigError("clt verb given a config for experiment '" + c.get("experiment") + "'");
    }
    c.set("experiment", "clt");
  }
  const auto cfg = ns::ExperimentConfig::from(c);
  const ns::ResultLog log = ns::run_experiment(cfg);
  print_summary(log);
  if (!cfg.output_dir.empty()) std::cout << "results written to " << cfg.output_dir << '\n';
  if (log.failures() > 0) {
    std::cerr << log.failures() << " sub-run(s) failed; see the status column\n";
    return 2;
  }
  return 0;
}

std::vector<std::vector<std::size_t>> parse_subsets(const ns::Config& c, std::size_t columns) {
  const std::string spec = c.get("subsets", "all");
  if (spec == "all") return ns::all_intercept_subsets(columns);
  std::vector<std::vector<std::size_t>> out;
  for (const auto& item : c.get_list("subsets", {})) {
    std::vector<std::size_t> s;
    std::string token;
    for (char ch : item + "+") {
      if (ch == '+') {
        try {
          s.push_back(static_cast<std::size_t>(std::stoul(token)));
        } catch (const std::exception&) {
          throw ns::ConfigError("key 'subsets': bad column index '" + token + "'");
        }
        token.clear();
      } else if (ch != ' ') {
        token += ch;
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

int run_enumeration(const std::string& path, const GlobalFlags& flags) {
  const ns::Config c = load_with_overrides(path, flags);
  const ns::ProbitData data = ns::probit_data_from_config(c);
  ns::EnumerationOptions opt;
  opt.live_points = c.get_size("live_points", 128);
  opt.curvature_multiplier = c.get_double("curvature_multiplier", 1.0);
  opt.prior_sd = c.get_double("prior_sd", 10.0);
  opt.seed = c.get_u64("seed", 1);
  opt.threads = std::max<std::size_t>(1, c.get_size("threads", 1));
  const std::string scenario = c.get("scenario", "mode_and_curvature");
  if (scenario == "mode_only") opt.scenario = ns::EllipsoidScenario::mode_only;
  else if (scenario != "mode_and_curvature") throw ns::ConfigError("key 'scenario': expected mode_and_curvature or mode_only");

  const auto subsets = parse_subsets(c, static_cast<std::size_t>(data.X.cols()));
  std::vector<ns::EnumerationRow> rows;
  try {
    rows = ns::probit_model_enumeration(data.X, data.y, subsets, opt);
  } catch (const std::invalid_argument& e) {
    throw ns::ConfigError(e.what());
  }

  std::vector<std::size_t> order(rows.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return rows[a].posterior_probability > rows[b].posterior_probability;
  });
  std::cout << std::setw(12) << "posterior" << std::setw(14) << "log_z" << "  columns\n";
  for (std::size_t k : order) {
    std::cout << std::setw(12) << std::setprecision(4) << rows[k].posterior_probability << std::setw(14)
              << std::setprecision(8) << rows[k].log_z << "  ";
    for (std::size_t col : rows[k].columns) std::cout << data.columns[col] << ' ';
    if (rows[k].failed) std::cout << "[failed: " << rows[k].message << "]";
    std::cout << '\n';
  }
  const std::string out_dir = c.get("output", "");
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    std::ofstream out(std::filesystem::path(out_dir) / "probit_enumeration.csv");
    ns::write_enumeration_csv(out, rows, data.columns);
  }
  const bool any_failed = std::any_of(rows.begin(), rows.end(), [](const auto& r) { return r.failed; });
  return any_failed ? 2 : 0;
}

int run_variance(const std::string& model, int dim, double eps, const GlobalFlags& flags) {
  if (model != "gaussian-toy" && model != "toy") {
    throw ns::ConfigError("unknown model '" + model + "' (available: gaussian-toy)");
  }
  if (dim < 1) throw ns::ConfigError("dimension must be positive");
  if (!(eps > 0 && eps < 1)) throw ns::ConfigError("epsilon must lie in (0, 1)");
  const ns::VarianceReport report = ns::asymptotic_variance(ns::phi_gaussian_toy(dim), eps);
  ns::write_variance_csv(std::cout, dim, report);
  if (flags.out) {
    std::filesystem::create_directories(*flags.out);
    std::ofstream out(std::filesystem::path(*flags.out) / "variance.csv");
    ns::write_variance_csv(out, dim, report);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Nested sampling evidence estimation experiments"};
  app.require_subcommand(1);
  GlobalFlags flags;
  app.add_option("--seed", flags.seed, "Override the config seed");
  app.add_option("--out", flags.out, "Output directory");
  app.add_option("--threads", flags.threads, "Worker threads for replications");
  app.fallthrough();

  std::string config_path;
  auto* run = app.add_subcommand("run", "Run the experiment described by a config file");
  run->add_option("config", config_path, "Config file")->required();
  auto* clt = app.add_subcommand("clt", "Run the CLT variance check described by a config file");
  clt->add_option("config", config_path, "Config file")->required();
  auto* enumerate = app.add_subcommand("enumerate-probit", "Evidence for every probit covariate subset");
  enumerate->add_option("config", config_path, "Config file")->required();

  std::string model;
  int dim = 0;
  double eps = 0;
  auto* variance = app.add_subcommand("variance", "Asymptotic variance of the log evidence");
  variance->add_option("model", model, "Model name (gaussian-toy)")->required();
  variance->add_option("d", dim, "Dimension")->required();
  variance->add_option("eps", eps, "Truncation point")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*run) return run_sweep(config_path, flags, false);
    if (*clt) return run_sweep(config_path, flags, true);
    if (*enumerate) return run_enumeration(config_path, flags);
    if (*variance) return run_variance(model, dim, eps, flags);
  } catch (const ns::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
