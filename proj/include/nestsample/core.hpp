#pragma once

#include <array>
#include <cmath>
#include <compare>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace nestsample {

using Point = Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Log-domain values
// ---------------------------------------------------------------------------

/// A nonnegative quantity stored as its natural logarithm. Zero is -inf;
/// NaN and +inf are rejected on construction.
template <typename Scalar>
class BasicLogValue {
 public:
  static constexpr Scalar kNegInf = -std::numeric_limits<Scalar>::infinity();

  constexpr BasicLogValue() = default;

  explicit BasicLogValue(Scalar log_value) : v_(log_value) {
    if (std::isnan(log_value) || log_value == std::numeric_limits<Scalar>::infinity()) {
      throw std::domain_error("LogValue: log value must be finite or -inf");
    }
  }

  static BasicLogValue zero() { return BasicLogValue(); }
  static BasicLogValue one() { return BasicLogValue(Scalar(0)); }

  static BasicLogValue from_linear(Scalar x) {
    if (!(x >= Scalar(0))) throw std::domain_error("LogValue: negative linear value");
    return BasicLogValue(std::log(x));
  }

  Scalar log() const { return v_; }
  Scalar linear() const { return std::exp(v_); }
  bool is_zero() const { return v_ == kNegInf; }

  friend BasicLogValue operator*(BasicLogValue a, BasicLogValue b) {
    if (a.is_zero() || b.is_zero()) return zero();
    return BasicLogValue(a.v_ + b.v_);
  }
  friend BasicLogValue operator/(BasicLogValue a, BasicLogValue b) {
    if (b.is_zero()) throw std::domain_error("LogValue: division by zero");
    if (a.is_zero()) return zero();
    return BasicLogValue(a.v_ - b.v_);
  }
  friend BasicLogValue operator+(BasicLogValue a, BasicLogValue b) {
    if (a.is_zero()) return b;
    if (b.is_zero()) return a;
    const Scalar hi = std::max(a.v_, b.v_);
    const Scalar lo = std::min(a.v_, b.v_);
    return BasicLogValue(hi + std::log1p(std::exp(lo - hi)));
  }
  BasicLogValue& operator+=(BasicLogValue o) { return *this = *this + o; }
  BasicLogValue& operator*=(BasicLogValue o) { return *this = *this * o; }

  friend auto operator<=>(BasicLogValue a, BasicLogValue b) { return a.v_ <=> b.v_; }
  friend bool operator==(BasicLogValue a, BasicLogValue b) { return a.v_ == b.v_; }

 private:
  Scalar v_ = kNegInf;
};

using LogValue = BasicLogValue<double>;

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// log(sum exp(v_i)), shifted by the max. All -inf gives -inf.
template <typename Scalar>
Scalar log_sum_exp(std::span<const Scalar> log_values) {
  if (log_values.empty()) throw std::invalid_argument("log_sum_exp: empty input");
  Scalar hi = -std::numeric_limits<Scalar>::infinity();
  for (Scalar v : log_values) hi = std::max(hi, v);
  if (hi == -std::numeric_limits<Scalar>::infinity()) return hi;
  Scalar acc = 0;
  for (Scalar v : log_values) acc += std::exp(v - hi);
  return hi + std::log(acc);
}

template <typename Scalar>
BasicLogValue<Scalar> log_sum_exp(std::span<const BasicLogValue<Scalar>> values) {
  std::vector<Scalar> raw;
  raw.reserve(values.size());
  for (const auto& v : values) raw.push_back(v.log());
  return BasicLogValue<Scalar>(log_sum_exp<Scalar>(std::span<const Scalar>(raw)));
}

/// log(e^a - e^b) for a >= b.
template <typename Scalar>
BasicLogValue<Scalar> log_diff_exp(BasicLogValue<Scalar> a, BasicLogValue<Scalar> b) {
  if (b > a) throw std::domain_error("log_diff_exp: requires a >= b");
  if (b.is_zero()) return a;
  if (a == b) return BasicLogValue<Scalar>::zero();
  return BasicLogValue<Scalar>(a.log() + std::log1p(-std::exp(b.log() - a.log())));
}

/// Streaming log-domain accumulator for long Riemann sums.
class LogAccumulator {
 public:
  void add(double log_term);
  double log() const { return acc_; }
  LogValue value() const { return LogValue(acc_); }

 private:
  double acc_ = kNegInf;
};

// ---------------------------------------------------------------------------
// Random source
// ---------------------------------------------------------------------------

/// Counter-based generator (Philox4x32-10). The key is derived from the seed
/// and the counter carries (block index, stream id), so every (seed, stream)
/// pair names an independent, reproducible sequence.
class RandomSource {
 public:
  using result_type = std::uint64_t;

  explicit RandomSource(std::uint64_t seed = 0, std::uint64_t stream = 0);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
  result_type operator()() { return next_u64(); }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

  std::uint64_t next_u64();
  /// Uniform on the open interval (0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Unbiased integer in [0, n).
  std::size_t index(std::size_t n);
  double normal();
  Eigen::VectorXd normal_vector(Eigen::Index dim);
  double exponential() { return -std::log(uniform()); }
  /// beta(n, 1) via t = u^{1/n}; returned as log t.
  double log_beta_n1(double n) { return std::log(uniform()) / n; }
  /// Marsaglia-Tsang gamma(shape, 1).
  double gamma(double shape);
  double student_t(double dof);

 private:
  void refill();

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::array<std::uint32_t, 2> key_{};
  std::uint64_t block_ = 0;
  std::array<std::uint32_t, 4> buffer_{};
  int used_ = 4;
};

// ---------------------------------------------------------------------------
// Model abstraction
// ---------------------------------------------------------------------------

enum class Provenance { analytic, empirical };

/// phi(x): likelihood level enclosing prior mass x; phi_inverse(l) = pr{L > l}.
struct SurvivalCurve {
  std::function<double(double)> phi;
  std::function<double(double)> dphi;
  std::function<double(double)> phi_inverse;  // may be empty
  std::optional<double> phi_sup;              // phi(0+) when finite
  Provenance provenance = Provenance::analytic;
};

/// Evaluators return natural-log densities; -inf encodes zero. All callables
/// must be pure so replications can evaluate them concurrently.
struct Model {
  int dim = 0;
  std::function<double(const Point&)> log_prior;
  std::function<double(const Point&)> log_lik;
  std::function<Point(RandomSource&)> sample_prior;
  std::optional<SurvivalCurve> survival;
  std::optional<double> log_evidence;  // analytic log Z when known
  std::string name;
};

}  // namespace nestsample
