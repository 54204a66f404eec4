#include "nestsample/core.hpp"

#include "nestsample/special.hpp"

namespace nestsample {

void LogAccumulator::add(double log_term) {
  if (std::isnan(log_term)) throw std::domain_error("LogAccumulator: NaN term");
  if (log_term == kNegInf) return;
  if (acc_ == kNegInf) {
    acc_ = log_term;
    return;
  }
  const double hi = std::max(acc_, log_term);
  const double lo = std::min(acc_, log_term);
  acc_ = hi + std::log1p(std::exp(lo - hi));
}

namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> ctr,
                                           std::array<std::uint32_t, 2> key) {
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kPhiloxM0, ctr[0], hi0, lo0);
    mulhilo(kPhiloxM1, ctr[2], hi1, lo1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kPhiloxW0;
    key[1] += kPhiloxW1;
  }
  return ctr;
}

}  // namespace

RandomSource::RandomSource(std::uint64_t seed, std::uint64_t stream)
    : seed_(seed),
      stream_(stream),
      key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)} {}

void RandomSource::refill() {
  const std::array<std::uint32_t, 4> ctr{
      static_cast<std::uint32_t>(block_), static_cast<std::uint32_t>(block_ >> 32),
      static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)};
  buffer_ = philox4x32_10(ctr, key_);
  ++block_;
  used_ = 0;
}

std::uint64_t RandomSource::next_u64() {
  if (used_ > 2) refill();
  const std::uint64_t out =
      (static_cast<std::uint64_t>(buffer_[used_]) << 32) | buffer_[used_ + 1];
  used_ += 2;
  return out;
}

double RandomSource::uniform() {
  // 53-bit mantissa shifted by half an ulp keeps the result off {0, 1}.
  return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

std::size_t RandomSource::index(std::size_t n) {
  if (n == 0) throw std::invalid_argument("RandomSource::index: n must be positive");
  const std::uint64_t limit = max() - max() % n;
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return static_cast<std::size_t>(x % n);
}

double RandomSource::normal() { return special::normal_quantile(uniform()); }

Eigen::VectorXd RandomSource::normal_vector(Eigen::Index dim) {
  Eigen::VectorXd v(dim);
  for (Eigen::Index k = 0; k < dim; ++k) v(k) = normal();
  return v;
}

double RandomSource::gamma(double shape) {
  if (!(shape > 0)) throw std::invalid_argument("RandomSource::gamma: shape must be positive");
  if (shape < 1) {
    return gamma(shape + 1) * std::pow(uniform(), 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = normal();
      v = 1.0 + c * x;
    } while (v <= 0);
    v = v * v * v;
    const double u = uniform();
    if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return d * v;
  }
}

double RandomSource::student_t(double dof) {
  const double z = normal();
  const double w = 2.0 * gamma(0.5 * dof);  // chi-square(dof)
  return z / std::sqrt(w / dof);
}

}  // namespace nestsample
