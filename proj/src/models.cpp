#include "nestsample/models.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

#include "nestsample/diagnostics.hpp"
#include "nestsample/special.hpp"

namespace nestsample {

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

double normal_log_density(double x, double mean, double var) {
  return -0.5 * (kLog2Pi + std::log(var) + (x - mean) * (x - mean) / var);
}

std::runtime_error csv_error(const std::string& path, std::size_t line, const std::string& what) {
  return std::runtime_error(path + ":" + std::to_string(line) + ": " + what);
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) {
    const auto b = field.find_first_not_of(" \t\r");
    const auto e = field.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? std::string() : field.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::optional<double> parse_double(const std::string& s) {
  double v = 0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (!s.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || s.empty()) return std::nullopt;
  return v;
}

}  // namespace

// Centred Gaussian toy --------------------------------------------------------

double centred_toy_log_lik(const Point& theta) {
  return 0.5 * theta.size() * std::numbers::ln2 - 2.0 * std::numbers::pi * theta.squaredNorm();
}

Model centred_gaussian_toy(int dim) {
  if (dim < 1) throw std::invalid_argument("centred_gaussian_toy: dim must be positive");
  const double var = 1.0 / (4.0 * std::numbers::pi);
  Model m;
  m.dim = dim;
  m.name = "centred_gaussian_toy";
  m.log_prior = [var](const Point& t) {
    return -0.5 * t.size() * (kLog2Pi + std::log(var)) - 0.5 * t.squaredNorm() / var;
  };
  m.log_lik = centred_toy_log_lik;
  m.sample_prior = [dim, var](RandomSource& rng) -> Point {
    return std::sqrt(var) * rng.normal_vector(dim);
  };
  m.survival = phi_gaussian_toy(dim);
  m.log_evidence = 0.0;
  return m;
}

// Decentred Gaussian -----------------------------------------------------------

double decentred_log_evidence(const Eigen::VectorXd& data) {
  double acc = 0;
  for (Eigen::Index k = 0; k < data.size(); ++k) acc += normal_log_density(data(k), 0.0, 2.0);
  return acc;
}

Model decentred_gaussian(const Eigen::VectorXd& data) {
  const int dim = static_cast<int>(data.size());
  if (dim < 1) throw std::invalid_argument("decentred_gaussian: empty data");
  Model m;
  m.dim = dim;
  m.name = "decentred_gaussian";
  m.log_prior = [](const Point& t) { return -0.5 * (t.size() * kLog2Pi + t.squaredNorm()); };
  m.log_lik = [data](const Point& t) {
    return -0.5 * (t.size() * kLog2Pi + (data - t).squaredNorm());
  };
  m.sample_prior = [dim](RandomSource& rng) -> Point { return rng.normal_vector(dim); };
  m.log_evidence = decentred_log_evidence(data);
  return m;
}

// Mixture ------------------------------------------------------------------------

double mixture_loglik(const Point& params, double p, std::span<const double> data) {
  if (params.size() != 2) throw std::invalid_argument("mixture_loglik: params must be (mu, log var)");
  const double mu = params(0);
  const double var = std::exp(params(1));
  if (!(var > 0)) throw std::domain_error("mixture_loglik: variance must be positive");
  const double log_p = std::log(p);
  const double log_q = std::log1p(-p);
  double acc = 0;
  for (double y : data) {
    acc += log_add(log_p + normal_log_density(y, 0.0, 1.0),
                   log_q + normal_log_density(y, mu, var));
  }
  return acc;
}

Model mixture_model(std::vector<double> data, double p, MixtureBounds bounds) {
  if (!(p >= 0 && p <= 1)) throw std::invalid_argument("mixture_model: p outside [0, 1]");
  Model m;
  m.dim = 2;
  m.name = "mixture";
  const double log_density = -bounds.log_area();
  m.log_prior = [bounds, log_density](const Point& t) {
    return bounds.contains(t) ? log_density : kNegInf;
  };
  m.log_lik = [data = std::move(data), p](const Point& t) { return mixture_loglik(t, p, data); };
  m.sample_prior = [bounds](RandomSource& rng) -> Point {
    Point t(2);
    t(0) = rng.uniform(bounds.mu_lo, bounds.mu_hi);
    t(1) = rng.uniform(bounds.log_var_lo, bounds.log_var_hi);
    return t;
  };
  return m;
}

std::vector<double> synthetic_mixture_data(std::size_t n, RandomSource& rng) {
  std::vector<double> out(n);
  for (auto& v : out) v = 2.0 + 1.5 * rng.normal();
  return out;
}

std::vector<double> load_mixture_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<double> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto fields = split_fields(line);
    if (fields.empty() || (fields.size() == 1 && fields[0].empty())) continue;
    if (fields.size() != 1) throw csv_error(path, lineno, "expected one column");
    auto v = parse_double(fields[0]);
    if (!v) {
      if (lineno == 1) continue;  // header
      throw csv_error(path, lineno, "non-numeric cell '" + fields[0] + "'");
    }
    out.push_back(*v);
  }
  return out;
}

// Probit -------------------------------------------------------------------------

double probit_loglik(const Point& theta, const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  if (X.cols() != theta.size() || X.rows() != y.size()) {
    throw std::invalid_argument("probit_loglik: dimension mismatch");
  }
  const Eigen::VectorXd eta = X * theta;
  double acc = 0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    acc += y(i) > 0.5 ? special::log_normal_cdf(eta(i)) : special::log_normal_cdf(-eta(i));
  }
  return acc;
}

Eigen::VectorXd probit_loglik_gradient(const Point& theta, const Eigen::MatrixXd& X,
                                       const Eigen::VectorXd& y) {
  const Eigen::VectorXd eta = X * theta;
  Eigen::VectorXd score(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    const double s = y(i) > 0.5 ? 1.0 : -1.0;
    score(i) = s * special::inverse_mills_ratio(s * eta(i));
  }
  return X.transpose() * score;
}

Eigen::MatrixXd probit_loglik_hessian(const Point& theta, const Eigen::MatrixXd& X,
                                      const Eigen::VectorXd& y) {
  const Eigen::VectorXd eta = X * theta;
  Eigen::VectorXd w(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    const double z = (y(i) > 0.5 ? 1.0 : -1.0) * eta(i);
    const double lambda = special::inverse_mills_ratio(z);
    w(i) = lambda * (z + lambda);
  }
  return -(X.transpose() * w.asDiagonal() * X);
}

ProbitFit probit_mode_hessian(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                              double prior_sd) {
  const Eigen::Index d = X.cols();
  const double prec = 1.0 / (prior_sd * prior_sd);
  auto log_post = [&](const Eigen::VectorXd& t) {
    return probit_loglik(t, X, y) - 0.5 * prec * t.squaredNorm();
  };
  ProbitFit fit;
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(d);
  double current = log_post(theta);
  for (int it = 1; it <= 100; ++it) {
    const Eigen::VectorXd grad = probit_loglik_gradient(theta, X, y) - prec * theta;
    const Eigen::MatrixXd hess =
        probit_loglik_hessian(theta, X, y) - prec * Eigen::MatrixXd::Identity(d, d);
    const Eigen::VectorXd step = (-hess).ldlt().solve(grad);
    // Newton decrement; once it is at rounding level further steps only add noise
    const double decrement = 0.5 * grad.dot(step);
    if (grad.norm() < 1e-8 || decrement < 1e-15 * std::max(1.0, std::abs(current))) {
      fit.mode = theta;
      fit.cov = (-hess).inverse();
      fit.cov = 0.5 * (fit.cov + fit.cov.transpose());
      fit.iterations = it - 1;
      return fit;
    }
    double scale = 1.0;
    Eigen::VectorXd next = theta + step;
    double value = log_post(next);
    const double slack = 1e-13 * std::max(1.0, std::abs(current));
    while (!(value >= current - slack) && scale > 1e-10) {
      scale *= 0.5;
      next = theta + scale * step;
      value = log_post(next);
    }
    theta = next;
    current = value;
  }
  throw std::runtime_error("probit_mode_hessian: Newton did not converge in 100 iterations");
}

Model probit_model(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double prior_sd) {
  Model m;
  m.dim = static_cast<int>(X.cols());
  m.name = "probit";
  const double var = prior_sd * prior_sd;
  m.log_prior = [var](const Point& t) {
    return -0.5 * (t.size() * (kLog2Pi + std::log(var)) + t.squaredNorm() / var);
  };
  m.log_lik = [X, y](const Point& t) { return probit_loglik(t, X, y); };
  const int dim = m.dim;
  m.sample_prior = [dim, prior_sd](RandomSource& rng) -> Point {
    return prior_sd * rng.normal_vector(dim);
  };
  return m;
}

ProbitData synthetic_probit(std::size_t n, const Eigen::VectorXd& theta_true, RandomSource& rng) {
  const Eigen::Index d = theta_true.size();
  ProbitData out;
  out.X.resize(static_cast<Eigen::Index>(n), d);
  out.y.resize(static_cast<Eigen::Index>(n));
  out.columns.push_back("intercept");
  for (Eigen::Index k = 1; k < d; ++k) out.columns.push_back("x" + std::to_string(k));
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(n); ++i) {
    out.X(i, 0) = 1.0;
    for (Eigen::Index k = 1; k < d; ++k) out.X(i, k) = rng.normal();
    const double eta = out.X.row(i).dot(theta_true);
    out.y(i) = rng.uniform() < special::normal_cdf(eta) ? 1.0 : 0.0;
  }
  return out;
}

ProbitData load_probit_csv(const std::string& path, const ProbitCsvOptions& options) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw csv_error(path, 1, "missing header row");
  const std::vector<std::string> header = split_fields(line);
  if (header.size() < 2) throw csv_error(path, 1, "need a response and at least one covariate");

  std::vector<double> ys;
  std::vector<std::vector<double>> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto fields = split_fields(line);
    if (fields.size() != header.size()) {
      throw csv_error(path, lineno, "expected " + std::to_string(header.size()) + " fields, got " +
                                        std::to_string(fields.size()));
    }
    std::vector<double> row;
    for (std::size_t c = 0; c < fields.size(); ++c) {
      auto v = parse_double(fields[c]);
      if (!v || !std::isfinite(*v)) {
        throw csv_error(path, lineno, "non-numeric cell '" + fields[c] + "' in column " + header[c]);
      }
      if (c == 0) {
        if (*v != 0.0 && *v != 1.0) throw csv_error(path, lineno, "response must be 0 or 1");
        ys.push_back(*v);
      } else {
        row.push_back(*v);
      }
    }
    rows.push_back(std::move(row));
  }

  ProbitData out;
  std::vector<std::string> covs(header.begin() + 1, header.end());
  auto column_index = [&](const std::string& name) -> std::size_t {
    for (std::size_t c = 0; c < covs.size(); ++c) {
      if (covs[c] == name) return c;
    }
    throw std::runtime_error(path + ": unknown column '" + name + "' in cross effect");
  };
  std::vector<std::pair<std::size_t, std::size_t>> crosses;
  for (const auto& [a, b] : options.cross_effects) crosses.emplace_back(column_index(a), column_index(b));

  const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
  const Eigen::Index d = (options.intercept ? 1 : 0) + static_cast<Eigen::Index>(covs.size()) +
                         static_cast<Eigen::Index>(crosses.size());
  out.X.resize(n, d);
  out.y.resize(n);
  if (options.intercept) out.columns.push_back("intercept");
  for (const auto& c : covs) out.columns.push_back(c);
  for (const auto& [a, b] : options.cross_effects) out.columns.push_back(a + ":" + b);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index col = 0;
    out.y(i) = ys[i];
    if (options.intercept) out.X(i, col++) = 1.0;
    for (double v : rows[i]) out.X(i, col++) = v;
    for (const auto& [a, b] : crosses) out.X(i, col++) = rows[i][a] * rows[i][b];
  }
  return out;
}

void save_probit_csv(const std::string& path, const ProbitData& data) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  const bool skip_first = !data.columns.empty() && data.columns[0] == "intercept";
  const Eigen::Index first = skip_first ? 1 : 0;
  out << "y";
  for (Eigen::Index k = first; k < data.X.cols(); ++k) {
    out << ',' << (static_cast<std::size_t>(k) < data.columns.size() ? data.columns[k]
                                                                      : "x" + std::to_string(k));
  }
  out << '\n' << std::setprecision(17);
  for (Eigen::Index i = 0; i < data.X.rows(); ++i) {
    out << static_cast<int>(data.y(i));
    for (Eigen::Index k = first; k < data.X.cols(); ++k) out << ',' << data.X(i, k);
    out << '\n';
  }
}

}  // namespace nestsample
