#include "nestsample/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <memory>
#include <ostream>
#include <set>
#include <sstream>

#include "nestsample/alt_estimators.hpp"
#include "nestsample/constrained_samplers.hpp"
#include "nestsample/diagnostics.hpp"
#include "nestsample/nested_sampler.hpp"

namespace nestsample {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) out.push_back(trim(item));
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

double to_double(const std::string& key, const std::string& text) {
  std::size_t pos = 0;
  double v = 0;
  try {
    v = std::stod(text, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != text.size()) throw ConfigError("key '" + key + "': '" + text + "' is not a number");
  return v;
}

std::uint64_t to_u64(const std::string& key, const std::string& text) {
  std::size_t pos = 0;
  unsigned long long v = 0;
  try {
    if (!text.empty() && text[0] == '-') throw std::invalid_argument("negative");
    v = std::stoull(text, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != text.size()) {
    throw ConfigError("key '" + key + "': '" + text + "' is not a nonnegative integer");
  }
  return v;
}

}  // namespace

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

Config Config::parse(std::istream& in, const std::string& source) {
  Config c;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(source + ":" + std::to_string(lineno) + ": empty key");
    c.values_[key] = trim(line.substr(eq + 1));
  }
  return c;
}

Config Config::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  return parse(in, path);
}

std::string Config::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("missing required key '" + key + "'");
  return it->second;
}

std::string Config::get(const std::string& key, const std::string& fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double Config::get_double(const std::string& key, double fallback) const {
  return has(key) ? to_double(key, get(key)) : fallback;
}

std::size_t Config::get_size(const std::string& key, std::size_t fallback) const {
  return has(key) ? static_cast<std::size_t>(to_u64(key, get(key))) : fallback;
}

std::uint64_t Config::get_u64(const std::string& key, std::uint64_t fallback) const {
  return has(key) ? to_u64(key, get(key)) : fallback;
}

std::vector<std::string> Config::get_list(const std::string& key,
                                          const std::vector<std::string>& fallback) const {
  if (!has(key)) return fallback;
  auto items = split(get(key), ',');
  for (const auto& item : items) {
    if (item.empty()) throw ConfigError("key '" + key + "': empty list entry");
  }
  return items;
}

std::vector<double> Config::get_doubles(const std::string& key, const std::vector<double>& fallback) const {
  if (!has(key)) return fallback;
  std::vector<double> out;
  for (const auto& item : get_list(key, {})) out.push_back(to_double(key, item));
  return out;
}

std::vector<std::size_t> Config::get_sizes(const std::string& key,
                                           const std::vector<std::size_t>& fallback) const {
  if (!has(key)) return fallback;
  std::vector<std::size_t> out;
  for (const auto& item : get_list(key, {})) out.push_back(static_cast<std::size_t>(to_u64(key, item)));
  return out;
}

std::string Config::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& [k, v] : values_) {
    for (char ch : k + "=" + v + "\n") {
      h ^= static_cast<unsigned char>(ch);
      h *= 0x100000001b3ULL;
    }
  }
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

// ---------------------------------------------------------------------------
// ExperimentConfig
// ---------------------------------------------------------------------------

std::vector<std::string> ExperimentConfig::known_estimators(const std::string& experiment) {
  if (experiment == "decentred") return {"ns", "ns_random"};
  if (experiment == "mixture") return {"ns", "reverse_is", "is", "mixture"};
  if (experiment == "probit") return {"nis1", "is1", "nis2", "is2"};
  if (experiment == "clt") return {"ns"};
  if (experiment == "vdscale") return {"quadrature"};
  throw ConfigError("unknown experiment '" + experiment +
                    "' (expected decentred, mixture, probit, clt or vdscale)");
}

ExperimentConfig ExperimentConfig::from(const Config& config) {
  ExperimentConfig cfg;
  cfg.raw = config;
  cfg.experiment = config.get("experiment");
  const auto known = known_estimators(cfg.experiment);
  cfg.estimators = config.get_list("estimators", cfg.experiment == "decentred" ? std::vector<std::string>{"ns"} : known);
  for (const auto& e : cfg.estimators) {
    if (std::find(known.begin(), known.end(), e) == known.end()) {
      throw ConfigError("estimator '" + e + "' is not available for experiment '" + cfg.experiment + "'");
    }
  }

  std::vector<std::size_t> default_dims{2};
  std::size_t default_r = 1;
  std::vector<GridPoint> default_grid;
  if (cfg.experiment == "decentred") {
    default_dims = {5, 10, 20};
    default_r = 20;
    default_grid = {{100, 1}, {100, 3}, {100, 5}};
  } else if (cfg.experiment == "mixture") {
    default_r = 50;
    default_grid = {{1000, 10}};
  } else if (cfg.experiment == "probit") {
    default_dims = {};
    default_r = 50;
    default_grid = {{8, 0}, {32, 0}, {128, 0}};
  } else if (cfg.experiment == "clt") {
    default_r = 500;
    default_grid = {{100, 0}};
  } else if (cfg.experiment == "vdscale") {
    default_dims = {1, 2, 5, 10, 20, 40};
  }

  for (std::size_t d : config.get_sizes("dims", default_dims)) {
    if (d < 1) throw ConfigError("key 'dims': dimensions must be positive");
    cfg.dims.push_back(static_cast<int>(d));
  }
  if (config.has("grid")) {
    for (const auto& item : config.get_list("grid", {})) {
      const auto parts = split(item, ':');
      if (parts.size() != 2) throw ConfigError("key 'grid': entries must look like N:M, got '" + item + "'");
      cfg.grid.push_back({static_cast<std::size_t>(to_u64("grid", parts[0])),
                          static_cast<std::size_t>(to_u64("grid", parts[1]))});
    }
  } else if (config.has("live_points")) {
    const std::size_t steps = config.get_size("mcmc_steps", default_grid.empty() ? 1 : default_grid.front().mcmc_steps);
    for (std::size_t n : config.get_sizes("live_points", {})) cfg.grid.push_back({n, steps});
  } else {
    cfg.grid = default_grid;
  }
  for (const auto& g : cfg.grid) {
    if (g.live_points < 1) throw ConfigError("live point counts must be >= 1");
    if (cfg.experiment == "decentred" && g.mcmc_steps < 1) throw ConfigError("Gibbs sweeps M must be >= 1");
  }
  if (cfg.experiment != "vdscale" && cfg.grid.empty()) throw ConfigError("empty (N, M) grid");

  cfg.replications = config.get_size("replications", default_r);
  if (cfg.replications < 1) throw ConfigError("key 'replications': R must be >= 1");
  if (cfg.experiment == "clt" && cfg.replications < 2) throw ConfigError("clt needs at least two replications");
  cfg.seed = config.get_u64("seed", 1);
  cfg.output_dir = config.get("output", "");
  cfg.threads = std::max<std::size_t>(1, config.get_size("threads", 1));
  return cfg;
}

// ---------------------------------------------------------------------------
// ResultLog I/O
// ---------------------------------------------------------------------------

const std::vector<std::string>& result_columns() {
  static const std::vector<std::string> cols{
      "experiment", "estimator",  "config_point", "replication", "seed",
      "stream",     "log_z",      "log_z_ref",    "log_error",   "iterations",
      "likelihood_evaluations",   "wall_seconds", "status",      "message",
      "config_hash"};
  return cols;
}

const std::vector<std::string>& summary_columns() {
  static const std::vector<std::string> cols{
      "experiment",     "estimator",        "config_point",       "rows",
      "failures",       "median_log_error", "iqr_log_error",      "sd_log_error",
      "mean_iterations", "mean_likelihood_evaluations", "statistic", "statistic_value",
      "config_hash"};
  return cols;
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c == '\n' ? ' ' : c;
  }
  return out + "\"";
}

std::vector<std::string> parse_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  fields.push_back(cur);
  return fields;
}

void write_joined(std::ostream& out, const std::vector<std::string>& cols) {
  for (std::size_t k = 0; k < cols.size(); ++k) out << (k ? "," : "") << cols[k];
  out << '\n';
}

}  // namespace

void write_result_header(std::ostream& out) { write_joined(out, result_columns()); }

void write_result_row(std::ostream& out, const ResultRow& r) {
  out << std::setprecision(17) << csv_field(r.experiment) << ',' << csv_field(r.estimator) << ','
      << csv_field(r.config_point) << ',' << r.replication << ',' << r.seed << ',' << r.stream << ','
      << r.log_z << ',' << r.log_z_ref << ',' << r.log_error() << ',' << r.iterations << ','
      << r.likelihood_evaluations << ',' << std::setprecision(6) << r.wall_seconds << ','
      << (r.ok ? "ok" : "failed") << ',' << csv_field(r.message) << ',' << r.config_hash << '\n';
}

void write_summary(std::ostream& out, const std::vector<SummaryRow>& rows) {
  write_joined(out, summary_columns());
  out << std::setprecision(17);
  for (const auto& s : rows) {
    out << csv_field(s.experiment) << ',' << csv_field(s.estimator) << ',' << csv_field(s.config_point)
        << ',' << s.rows << ',' << s.failures << ',' << s.median_log_error << ',' << s.iqr_log_error << ','
        << s.sd_log_error << ',' << s.mean_iterations << ',' << s.mean_likelihood_evaluations << ','
        << csv_field(s.statistic) << ',' << s.statistic_value << ',' << s.config_hash << '\n';
  }
}

std::vector<ResultRow> read_results(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("read_results: empty input");
  if (parse_csv_line(line) != result_columns()) throw std::runtime_error("read_results: unexpected header");
  std::vector<ResultRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = parse_csv_line(line);
    if (f.size() != result_columns().size()) {
      throw std::runtime_error("read_results: line " + std::to_string(lineno) + ": wrong field count");
    }
    ResultRow r;
    try {
      r.experiment = f[0];
      r.estimator = f[1];
      r.config_point = f[2];
      r.replication = std::stoull(f[3]);
      r.seed = std::stoull(f[4]);
      r.stream = std::stoull(f[5]);
      r.log_z = std::stod(f[6]);
      r.log_z_ref = std::stod(f[7]);
      r.iterations = std::stoull(f[9]);
      r.likelihood_evaluations = std::stoull(f[10]);
      r.wall_seconds = std::stod(f[11]);
    } catch (const std::exception&) {
      throw std::runtime_error("read_results: line " + std::to_string(lineno) + ": malformed field");
    }
    r.ok = f[12] == "ok";
    r.message = f[13];
    r.config_hash = f[14];
    rows.push_back(std::move(r));
  }
  return rows;
}

std::size_t ResultLog::failures() const {
  return static_cast<std::size_t>(std::count_if(rows.begin(), rows.end(), [](const ResultRow& r) { return !r.ok; }));
}

const SummaryRow* ResultLog::find(const std::string& estimator, const std::string& config_point) const {
  for (const auto& s : summary) {
    if (s.estimator == estimator && s.config_point == config_point) return &s;
  }
  return nullptr;
}

std::vector<double> ResultLog::log_errors(const std::string& estimator, const std::string& config_point) const {
  std::vector<double> out;
  for (const auto& r : rows) {
    if (r.ok && r.estimator == estimator && r.config_point == config_point) out.push_back(r.log_error());
  }
  return out;
}

std::vector<SummaryRow> summarize(const std::vector<ResultRow>& rows) {
  std::vector<SummaryRow> out;
  std::vector<std::vector<const ResultRow*>> groups;
  for (const auto& r : rows) {
    auto it = std::find_if(out.begin(), out.end(), [&](const SummaryRow& s) {
      return s.estimator == r.estimator && s.config_point == r.config_point;
    });
    if (it == out.end()) {
      SummaryRow s;
      s.experiment = r.experiment;
      s.estimator = r.estimator;
      s.config_point = r.config_point;
      s.config_hash = r.config_hash;
      out.push_back(s);
      groups.emplace_back();
      it = out.end() - 1;
    }
    groups[static_cast<std::size_t>(it - out.begin())].push_back(&r);
  }
  for (std::size_t g = 0; g < out.size(); ++g) {
    auto& s = out[g];
    std::vector<double> errors;
    double iters = 0;
    double evals = 0;
    for (const ResultRow* r : groups[g]) {
      ++s.rows;
      if (!r->ok) {
        ++s.failures;
        continue;
      }
      errors.push_back(r->log_error());
      iters += static_cast<double>(r->iterations);
      evals += static_cast<double>(r->likelihood_evaluations);
    }
    const double nan = std::numeric_limits<double>::quiet_NaN();
    s.median_log_error = errors.empty() ? nan : median(errors);
    s.iqr_log_error = errors.empty() ? nan : interquartile_range(errors);
    s.sd_log_error = errors.size() < 2 ? nan : std::sqrt(sample_variance(errors));
    s.mean_iterations = errors.empty() ? nan : iters / static_cast<double>(errors.size());
    s.mean_likelihood_evaluations = errors.empty() ? nan : evals / static_cast<double>(errors.size());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Experiment runners
// ---------------------------------------------------------------------------

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Likelihood wrapper that counts calls; one per replication, single thread.
Model counted(const Model& m, const std::shared_ptr<std::size_t>& counter) {
  Model out = m;
  out.log_lik = [f = m.log_lik, counter](const Point& theta) {
    ++*counter;
    return f(theta);
  };
  return out;
}

std::uint64_t stream_id(std::size_t point, std::size_t estimator, std::size_t rep) {
  return (static_cast<std::uint64_t>(point) << 40) | (static_cast<std::uint64_t>(estimator) << 32) |
         static_cast<std::uint64_t>(rep);
}

bool wants(const ExperimentConfig& cfg, const std::string& estimator) {
  return std::find(cfg.estimators.begin(), cfg.estimators.end(), estimator) != cfg.estimators.end();
}

struct Sink {
  const ExperimentConfig& cfg;
  std::string hash;
  std::ofstream file;
  ResultLog log;

  Sink(const ExperimentConfig& c) : cfg(c), hash(c.raw.hash()) {
    if (cfg.output_dir.empty()) return;
    std::filesystem::create_directories(cfg.output_dir);
    const auto path = std::filesystem::path(cfg.output_dir) / (cfg.experiment + "_results.csv");
    file.open(path);
    if (!file) throw std::runtime_error("cannot write " + path.string());
    write_result_header(file);
  }

  ResultRow row(const std::string& estimator, const std::string& point, std::size_t rep,
                std::uint64_t stream) const {
    ResultRow r;
    r.experiment = cfg.experiment;
    r.estimator = estimator;
    r.config_point = point;
    r.replication = rep;
    r.seed = cfg.seed;
    r.stream = stream;
    r.config_hash = hash;
    return r;
  }

  void append(std::vector<ResultRow> batch) {
    for (auto& r : batch) {
      if (file.is_open()) write_result_row(file, r);
      log.rows.push_back(std::move(r));
    }
    if (file.is_open()) file.flush();
  }
};

void fail(ResultRow& r, const std::exception& e) {
  r.ok = false;
  r.message = e.what();
  r.log_z = std::numeric_limits<double>::quiet_NaN();
}

std::string point_label(const std::vector<std::pair<std::string, std::string>>& kv) {
  std::string s;
  for (const auto& [k, v] : kv) s += (s.empty() ? "" : ";") + k + "=" + v;
  return s;
}

// Each replication produces the rows for all requested estimators.
template <class Body>
void replicate(Sink& sink, std::size_t count, Body body) {
  std::vector<std::vector<ResultRow>> per_rep(count);
  parallel_for(count, sink.cfg.threads, [&](std::size_t rep) { per_rep[rep] = body(rep); });
  std::vector<ResultRow> batch;
  for (auto& rows : per_rep) {
    for (auto& r : rows) batch.push_back(std::move(r));
  }
  sink.append(std::move(batch));
}

NSConfig ns_config(const ExperimentConfig& cfg, std::size_t live_points, std::size_t steps) {
  NSConfig ns;
  ns.live_points = live_points;
  ns.mcmc_steps = std::max<std::size_t>(1, steps);
  ns.stop = StopRule::relative_contribution(cfg.raw.get_double("stop_ratio", 1e-8));
  if (cfg.raw.has("max_iterations")) ns.stop.max_iterations = cfg.raw.get_size("max_iterations", 0);
  ns.streams = cfg.raw.get_size("streams", 1);
  ns.validate();
  return ns;
}

void run_decentred(Sink& sink) {
  const auto& cfg = sink.cfg;
  const double y = cfg.raw.get_double("y", 3.0);
  std::size_t point = 0;
  for (int d : cfg.dims) {
    const Eigen::VectorXd data = Eigen::VectorXd::Constant(d, y);
    const Model model = decentred_gaussian(data);
    const double ref = decentred_log_evidence(data);
    for (const auto& g : cfg.grid) {
      const std::string label = point_label({{"d", std::to_string(d)},
                                             {"N", std::to_string(g.live_points)},
                                             {"M", std::to_string(g.mcmc_steps)}});
      const NSConfig ns = ns_config(cfg, g.live_points, g.mcmc_steps);
      const ConstrainedSampler sampler = GibbsDecentred{data, g.mcmc_steps};
      replicate(sink, cfg.replications, [&](std::size_t rep) {
        std::vector<ResultRow> rows;
        const std::uint64_t stream = stream_id(point, 0, rep);
        ResultRow r = sink.row("ns", label, rep, stream);
        r.log_z_ref = ref;
        const auto t0 = Clock::now();
        NSRun run;
        try {
          RandomSource rng(cfg.seed, stream);
          run = run_nested(model, sampler, ns, rng);
          if (!run.valid) throw std::runtime_error(run.failure);
          r.log_z = evidence_deterministic(run).log();
          r.iterations = run.iterations();
          r.likelihood_evaluations = run.likelihood_evaluations;
        } catch (const std::exception& e) {
          fail(r, e);
        }
        r.wall_seconds = seconds_since(t0);
        if (wants(cfg, "ns")) rows.push_back(r);
        if (wants(cfg, "ns_random")) {
          ResultRow q = r;
          q.estimator = "ns_random";
          if (q.ok) {
            RandomSource xs(cfg.seed, stream_id(point, 1, rep));
            q.log_z = evidence_random(run, ns.streams, xs).log();
          }
          rows.push_back(q);
        }
        return rows;
      });
      ++point;
    }
  }
}

void run_clt(Sink& sink) {
  const auto& cfg = sink.cfg;
  const double tau = cfg.raw.get_double("tau", 1e-6);
  std::size_t point = 0;
  for (int d : cfg.dims) {
    const Model model = centred_gaussian_toy(d);
    for (const auto& g : cfg.grid) {
      const std::string label = point_label({{"d", std::to_string(d)}, {"N", std::to_string(g.live_points)}});
      CltOptions o;
      o.live_points = g.live_points;
      o.replications = cfg.replications;
      o.epsilon = cfg.raw.get_double("epsilon", tau * std::exp2(-0.5 * d));
      o.band = cfg.raw.get_double("band", 0.15);
      o.seed = cfg.seed + 1000003ULL * point;
      o.threads = cfg.threads;
      std::vector<ResultRow> rows;
      const auto t0 = Clock::now();
      SummaryRow extra;
      try {
        const CltReport rep = clt_check(model, ExactRadial{d}, o);
        const double wall = seconds_since(t0) / static_cast<double>(rep.replications);
        const std::size_t j = truncation_iterations(g.live_points, o.epsilon);
        for (std::size_t k = 0; k < rep.errors.size(); ++k) {
          ResultRow r = sink.row("ns", label, k, k);
          r.seed = o.seed;
          r.log_z = rep.errors[k];
          r.log_z_ref = 0.0;
          r.iterations = j;
          r.likelihood_evaluations = g.live_points + j - 1;
          r.wall_seconds = wall;
          rows.push_back(r);
        }
        sink.log.summary.push_back({cfg.experiment, "ns", label, 0, 0, 0, 0, 0, 0, 0, "variance_ratio",
                                    rep.ratio, sink.hash});
        if (!rep.pass) {
          ResultRow r = sink.row("ns", label, rep.errors.size(), 0);
          r.log_z = std::numeric_limits<double>::quiet_NaN();
          r.ok = false;
          r.message = "clt check outside tolerance: variance ratio " + std::to_string(rep.ratio);
          rows.push_back(r);
        }
      } catch (const std::exception& e) {
        ResultRow r = sink.row("ns", label, 0, 0);
        fail(r, e);
        rows.push_back(r);
      }
      sink.append(std::move(rows));
      ++point;
    }
  }
}

void run_vdscale(Sink& sink) {
  const auto& cfg = sink.cfg;
  const double tau = cfg.raw.get_double("tau", 1e-6);
  std::vector<ScalingRow> table;
  std::vector<ResultRow> rows;
  for (int d : cfg.dims) {
    ResultRow r = sink.row("quadrature", point_label({{"d", std::to_string(d)}}), 0, 0);
    const auto t0 = Clock::now();
    try {
      const int dims[] = {d};
      const ScalingRow s = vd_scaling(dims, tau).front();
      table.push_back(s);
      // log V_d against its bound d log(sqrt 2 / tau): nonpositive when the bound holds
      r.log_z = std::log(s.variance);
      r.log_z_ref = std::log(d * s.bound);
      r.iterations = 1;
      sink.log.summary.push_back({cfg.experiment, "quadrature", r.config_point, 0, 0, 0, 0, 0, 0, 0,
                                  "V_over_d", s.variance_over_dim, sink.hash});
    } catch (const std::exception& e) {
      fail(r, e);
    }
    r.wall_seconds = seconds_since(t0);
    rows.push_back(r);
  }
  sink.append(std::move(rows));
  if (!cfg.output_dir.empty()) {
    std::ofstream out(std::filesystem::path(cfg.output_dir) / "vdscale_scaling.csv");
    write_scaling_csv(out, table);
  }
}

std::vector<Point> thin(std::span<const Point> xs, std::size_t target) {
  const std::size_t stride = std::max<std::size_t>(1, xs.size() / std::max<std::size_t>(1, target));
  std::vector<Point> out;
  for (std::size_t k = 0; k < xs.size(); k += stride) out.push_back(xs[k]);
  return out;
}

void run_mixture(Sink& sink) {
  const auto& cfg = sink.cfg;
  const Config& c = cfg.raw;
  const double p = c.get_double("p", 0.5);
  std::vector<double> data;
  if (c.has("data")) {
    data = load_mixture_csv(c.get("data"));
  } else {
    RandomSource drng(c.get_u64("data_seed", cfg.seed), 0xDA7A);
    data = synthetic_mixture_data(c.get_size("n", 10), drng);
  }
  const MixtureBounds bounds;
  const Model model = mixture_model(data, p, bounds);
  const double ref = grid_riemann_mixture(data, p, c.get_size("grid_mu", 800), c.get_size("grid_log_var", 500), bounds).log();

  const std::size_t chain_length = c.get_size("mcmc_length", 10000);
  const std::size_t burn_in = c.get_size("mcmc_burn_in", 1000);
  const auto mcmc_scale = c.get_doubles("mcmc_scale", {0.5, 0.5});
  const std::size_t kde_points = c.get_size("kde_points", 1000);
  const std::size_t is_draws = c.get_size("is_draws", chain_length);
  const std::string omega_text = c.get("omega1", "1");
  const std::size_t pilot_draws = c.get_size("pilot_draws", 1000);
  const double rw_scale = c.get_double("rw_scale", 1.0);
  const double t_dof = c.get_double("t_dof", 3.0);
  if (mcmc_scale.size() != 2) throw ConfigError("key 'mcmc_scale': need two values");
  if (chain_length < 4) throw ConfigError("key 'mcmc_length': need at least 4");
  const double omega_fixed = omega_text == "auto" ? 0.0 : to_double("omega1", omega_text);
  if (omega_text != "auto" && !(omega_fixed > 0)) throw ConfigError("key 'omega1': must be positive or 'auto'");

  double mean = 0;
  for (double v : data) mean += v;
  mean /= static_cast<double>(data.size());
  double var = 0;
  for (double v : data) var += (v - mean) * (v - mean);
  var = data.size() > 1 ? var / static_cast<double>(data.size() - 1) : 1.0;
  Point start(2);
  start << std::clamp(mean, bounds.mu_lo + 0.01, bounds.mu_hi - 0.01),
      std::clamp(std::log(var), bounds.log_var_lo + 0.01, bounds.log_var_hi - 0.01);

  std::size_t point = 0;
  for (const auto& g : cfg.grid) {
    const std::string label = point_label({{"n", std::to_string(data.size())}, {"N", std::to_string(g.live_points)}});
    const NSConfig ns = ns_config(cfg, g.live_points, g.mcmc_steps);
    RandomWalk rw;
    rw.steps = std::max<std::size_t>(1, g.mcmc_steps);
    rw.scales = Eigen::VectorXd::Constant(2, rw_scale);
    rw.adapt_to_live = true;
    const ConstrainedSampler sampler = rw;

    replicate(sink, cfg.replications, [&](std::size_t rep) {
      std::vector<ResultRow> rows;
      if (wants(cfg, "ns")) {
        const std::uint64_t stream = stream_id(point, 0, rep);
        ResultRow r = sink.row("ns", label, rep, stream);
        r.log_z_ref = ref;
        const auto t0 = Clock::now();
        try {
          RandomSource rng(cfg.seed, stream);
          const NSRun run = run_nested(model, sampler, ns, rng);
          if (!run.valid) throw std::runtime_error(run.failure);
          r.log_z = evidence_deterministic(run).log();
          r.iterations = run.iterations();
          r.likelihood_evaluations = run.likelihood_evaluations;
        } catch (const std::exception& e) {
          fail(r, e);
        }
        r.wall_seconds = seconds_since(t0);
        rows.push_back(r);
      }
      if (!wants(cfg, "reverse_is") && !wants(cfg, "is") && !wants(cfg, "mixture")) return rows;

      const std::uint64_t stream = stream_id(point, 1, rep);
      RandomSource rng(cfg.seed, stream);
      auto chain_count = std::make_shared<std::size_t>(0);
      const Model chain_model = counted(model, chain_count);
      const auto t_chain = Clock::now();
      const PosteriorKernel kernel =
          random_walk_posterior_kernel(chain_model, Eigen::Vector2d(mcmc_scale[0], mcmc_scale[1]));
      const std::vector<Point> chain = posterior_chain(start, chain_length, burn_in, kernel, rng);
      const std::size_t half = chain.size() / 2;
      const std::vector<Point> fit_sample = thin(std::span(chain).first(half), kde_points);
      const double chain_seconds = seconds_since(t_chain);

      auto estimator_row = [&](const std::string& name, auto&& compute) {
        ResultRow r = sink.row(name, label, rep, stream);
        r.log_z_ref = ref;
        auto count = std::make_shared<std::size_t>(0);
        const auto t0 = Clock::now();
        try {
          r.log_z = compute(counted(model, count));
        } catch (const std::exception& e) {
          fail(r, e);
        }
        r.iterations = chain_length;
        r.likelihood_evaluations = *chain_count + *count;
        r.wall_seconds = chain_seconds + seconds_since(t0);
        rows.push_back(r);
      };

      if (wants(cfg, "reverse_is")) {
        estimator_row("reverse_is", [&](const Model& m) {
          const ProposalDensity g1 = kernel_proposal_fit(fit_sample, KernelKind::gaussian, 0.5);
          return reverse_is(std::span(chain).subspan(half), m, g1).log();
        });
      }
      if (wants(cfg, "is") || wants(cfg, "mixture")) {
        const ProposalDensity gt = kernel_proposal_fit(fit_sample, KernelKind::student_t, 2.0, t_dof);
        if (wants(cfg, "is")) {
          estimator_row("is", [&](const Model& m) { return importance_sampling(m, gt, is_draws, rng).log(); });
        }
        if (wants(cfg, "mixture")) {
          estimator_row("mixture", [&](const Model& m) {
            double omega = omega_fixed;
            if (omega_text == "auto") omega = std::exp(-importance_sampling(m, gt, pilot_draws, rng).log());
            const PosteriorKernel k = random_walk_posterior_kernel(m, Eigen::Vector2d(mcmc_scale[0], mcmc_scale[1]));
            const auto mix = mixture_gibbs(m, gt, omega, chain_length, chain.back(), k, rng);
            return z3_from_xi(rao_blackwell_xi(mix, m, gt, omega), omega).log();
          });
        }
      }
      return rows;
    });
    ++point;
  }
}

ProbitFit scaled_fit(const ProbitFit& fit, double multiplier) {
  ProbitFit out = fit;
  out.cov = multiplier * fit.cov;
  return out;
}

void run_probit(Sink& sink) {
  const auto& cfg = sink.cfg;
  const Config& c = cfg.raw;
  const ProbitData data = probit_data_from_config(c);
  const double prior_sd = c.get_double("prior_sd", 10.0);
  const double multiplier = c.get_double("curvature_multiplier", 1.0);
  if (!(multiplier > 0)) throw ConfigError("key 'curvature_multiplier': must be positive");
  const double relative = c.get_double("stop_ratio", 1e-8);
  const Model model = probit_model(data.X, data.y, prior_sd);
  const ProbitFit fit = probit_mode_hessian(data.X, data.y, prior_sd);
  const ProbitFit sigma_m = scaled_fit(fit, multiplier);  // Sigma_m as used by both methods
  const EllipsoidSpec s1 = scenario_spec(fit, EllipsoidScenario::mode_and_curvature, multiplier);
  const EllipsoidSpec s2 = scenario_spec(fit, EllipsoidScenario::mode_only, multiplier);
  const ProposalDensity optimal = gaussian_proposal(sigma_m.mode, sigma_m.cov);

  // Reference: a long scenario-1 run with the standard curvature.
  EllipsoidOptions ref_opt;
  ref_opt.live_points = c.get_size("reference_live_points", 4096);
  ref_opt.relative = relative;
  RandomSource ref_rng(cfg.seed, 0xFEFE);
  const double ref =
      nested_ellipsoid_evidence(model, scenario_spec(fit, EllipsoidScenario::mode_and_curvature), ref_opt, ref_rng)
          .evidence.log();

  std::size_t point = 0;
  for (const auto& g : cfg.grid) {
    const std::string label = point_label({{"d", std::to_string(data.X.cols())}, {"N", std::to_string(g.live_points)}});
    EllipsoidOptions opt;
    opt.live_points = g.live_points;
    opt.relative = relative;
    if (c.has("iterations")) opt.iterations = c.get_size("iterations", 0);

    replicate(sink, cfg.replications, [&](std::size_t rep) {
      std::vector<ResultRow> rows;
      const struct {
        const char* nis;
        const char* is;
        const EllipsoidSpec* spec;
      } arms[] = {{"nis1", "is1", &s1}, {"nis2", "is2", &s2}};
      for (std::size_t a = 0; a < 2; ++a) {
        const bool want_nis = wants(cfg, arms[a].nis);
        const bool want_is = wants(cfg, arms[a].is);
        if (!want_nis && !want_is) continue;
        const std::uint64_t stream = stream_id(point, 2 * a, rep);
        ResultRow r = sink.row(arms[a].nis, label, rep, stream);
        r.log_z_ref = ref;
        const auto t0 = Clock::now();
        try {
          RandomSource rng(cfg.seed, stream);
          const EllipsoidEvidence e = nested_ellipsoid_evidence(model, *arms[a].spec, opt, rng);
          r.log_z = e.evidence.log();
          r.iterations = e.iterations;
          r.likelihood_evaluations = e.likelihood_evaluations;
        } catch (const std::exception& ex) {
          fail(r, ex);
        }
        r.wall_seconds = seconds_since(t0);
        if (want_nis) rows.push_back(r);
        if (!want_is) continue;

        const std::uint64_t is_stream = stream_id(point, 2 * a + 1, rep);
        ResultRow q = sink.row(arms[a].is, label, rep, is_stream);
        q.log_z_ref = ref;
        if (!r.ok) {
          q.ok = false;
          q.log_z = std::numeric_limits<double>::quiet_NaN();
          q.message = "budget unavailable: " + r.message;
        } else {
          const auto t1 = Clock::now();
          try {
            RandomSource rng(cfg.seed, is_stream);
            q.log_z = importance_sampling(model, optimal, r.likelihood_evaluations, rng).log();
            q.iterations = r.likelihood_evaluations;
            q.likelihood_evaluations = r.likelihood_evaluations;
          } catch (const std::exception& ex) {
            fail(q, ex);
          }
          q.wall_seconds = seconds_since(t1);
        }
        rows.push_back(q);
      }
      return rows;
    });
    ++point;
  }
}

void write_metadata(const ExperimentConfig& cfg, const std::string& hash) {
  std::ofstream out(std::filesystem::path(cfg.output_dir) / (cfg.experiment + "_results.meta"));
  out << "artifact_version = " << kArtifactVersion << '\n';
  out << "config_hash = " << hash << '\n';
  out << "result_columns = ";
  write_joined(out, result_columns());
  out << "summary_columns = ";
  write_joined(out, summary_columns());
  for (const auto& [k, v] : cfg.raw.values()) out << "config." << k << " = " << v << '\n';
}

}  // namespace

ResultLog run_experiment(const ExperimentConfig& cfg) {
  Sink sink(cfg);
  if (cfg.experiment == "decentred") run_decentred(sink);
  else if (cfg.experiment == "mixture") run_mixture(sink);
  else if (cfg.experiment == "probit") run_probit(sink);
  else if (cfg.experiment == "clt") run_clt(sink);
  else if (cfg.experiment == "vdscale") run_vdscale(sink);
  else throw ConfigError("unknown experiment '" + cfg.experiment + "'");

  // Statistics recorded by the runners are merged into the grouped summary.
  std::vector<SummaryRow> extras = std::move(sink.log.summary);
  sink.log.summary = summarize(sink.log.rows);
  for (const auto& e : extras) {
    for (auto& s : sink.log.summary) {
      if (s.estimator == e.estimator && s.config_point == e.config_point) {
        s.statistic = e.statistic;
        s.statistic_value = e.statistic_value;
      }
    }
  }
  if (!cfg.output_dir.empty()) {
    std::ofstream out(std::filesystem::path(cfg.output_dir) / (cfg.experiment + "_summary.csv"));
    write_summary(out, sink.log.summary);
    write_metadata(cfg, sink.hash);
  }
  return std::move(sink.log);
}

// ---------------------------------------------------------------------------
// Probit enumeration
// ---------------------------------------------------------------------------

std::vector<std::vector<std::size_t>> all_intercept_subsets(std::size_t columns) {
  if (columns < 1 || columns > 31) throw std::invalid_argument("all_intercept_subsets: need 1..31 columns");
  std::vector<std::vector<std::size_t>> out;
  const std::size_t extra = columns - 1;
  for (std::size_t mask = 0; mask < (std::size_t{1} << extra); ++mask) {
    std::vector<std::size_t> s{0};
    for (std::size_t k = 0; k < extra; ++k) {
      if (mask & (std::size_t{1} << k)) s.push_back(k + 1);
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<EnumerationRow> probit_model_enumeration(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                                     const std::vector<std::vector<std::size_t>>& subsets,
                                                     const EnumerationOptions& options) {
  for (const auto& s : subsets) {
    if (std::find(s.begin(), s.end(), std::size_t{0}) == s.end()) {
      throw std::invalid_argument("probit_model_enumeration: every subset must include the intercept column 0");
    }
    for (std::size_t c : s) {
      if (c >= static_cast<std::size_t>(X.cols())) throw std::invalid_argument("probit_model_enumeration: column out of range");
    }
  }
  std::vector<EnumerationRow> rows(subsets.size());
  parallel_for(subsets.size(), options.threads, [&](std::size_t k) {
    EnumerationRow& row = rows[k];
    row.columns = subsets[k];
    try {
      Eigen::MatrixXd Xs(X.rows(), static_cast<Eigen::Index>(row.columns.size()));
      for (std::size_t j = 0; j < row.columns.size(); ++j) {
        Xs.col(static_cast<Eigen::Index>(j)) = X.col(static_cast<Eigen::Index>(row.columns[j]));
      }
      Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Xs);
      if (qr.rank() < Xs.cols()) {
        throw std::domain_error("Sigma_m Cholesky failure: design matrix is rank deficient");
      }
      const ProbitFit fit = probit_mode_hessian(Xs, y, options.prior_sd);
      const EllipsoidSpec spec = scenario_spec(fit, options.scenario, options.curvature_multiplier);
      const Model model = probit_model(Xs, y, options.prior_sd);
      EllipsoidOptions opt;
      opt.live_points = options.live_points;
      RandomSource rng(options.seed, k);
      const EllipsoidEvidence e = nested_ellipsoid_evidence(model, spec, opt, rng);
      row.log_z = e.evidence.log();
      row.likelihood_evaluations = e.likelihood_evaluations;
    } catch (const std::exception& ex) {
      row.failed = true;
      row.message = ex.what();
      row.log_z = kNegInf;
    }
  });
  std::vector<double> ok;
  for (const auto& r : rows) {
    if (!r.failed) ok.push_back(r.log_z);
  }
  if (!ok.empty()) {
    const double norm = log_sum_exp<double>(ok);
    for (auto& r : rows) {
      if (!r.failed) r.posterior_probability = std::exp(r.log_z - norm);
    }
  }
  return rows;
}

void write_enumeration_csv(std::ostream& out, const std::vector<EnumerationRow>& rows,
                           const std::vector<std::string>& column_names) {
  out << "model,columns,log_z,posterior_probability,likelihood_evaluations,status,message\n";
  out << std::setprecision(17);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto& r = rows[k];
    std::string cols;
    for (std::size_t c : r.columns) {
      cols += (cols.empty() ? "" : "+") + (c < column_names.size() ? column_names[c] : "x" + std::to_string(c));
    }
    out << k << ',' << csv_field(cols) << ',' << r.log_z << ',' << r.posterior_probability << ','
        << r.likelihood_evaluations << ',' << (r.failed ? "failed" : "ok") << ',' << csv_field(r.message)
        << '\n';
  }
}

ProbitData probit_data_from_config(const Config& c) {
  if (c.has("data")) {
    ProbitCsvOptions opt;
    opt.intercept = c.get("intercept", "true") != "false";
    for (const auto& item : c.get_list("cross_effects", {})) {
      const auto parts = split(item, ':');
      if (parts.size() != 2) throw ConfigError("key 'cross_effects': entries must look like a:b");
      opt.cross_effects.emplace_back(parts[0], parts[1]);
    }
    return load_probit_csv(c.get("data"), opt);
  }
  const auto theta = c.get_doubles("theta_true", {0.5, -0.3, 0.8});
  if (theta.empty()) throw ConfigError("key 'theta_true': empty");
  RandomSource rng(c.get_u64("data_seed", c.get_u64("seed", 1)), 0xDA7A);
  return synthetic_probit(c.get_size("n", 200),
                          Eigen::Map<const Eigen::VectorXd>(theta.data(), static_cast<Eigen::Index>(theta.size())),
                          rng);
}

}  // namespace nestsample
