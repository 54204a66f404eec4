#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <variant>

#include "nestsample/core.hpp"

namespace nestsample {

/// Prior of the centred Gaussian toy restricted to {log L >= level}, drawn
/// exactly: ||theta||^2 * 4pi ~ chi2(d) truncated to [0, d log 2 - 2 level].
struct ExactRadial {
  int dim = 2;
};

/// Coordinate-wise Gibbs on the decentred Gaussian's constrained prior.
struct GibbsDecentred {
  Eigen::VectorXd data;  // y
  std::size_t sweeps = 1;
};

/// Metropolis random walk on the prior, proposals outside the level set
/// rejected. Step sizes shrink as shrink^iteration (1 disables shrinking).
/// With adapt_to_live, `scales` multiply the per-coordinate standard
/// deviation of the current live set instead of being absolute.
struct RandomWalk {
  std::size_t steps = 10;
  Eigen::VectorXd scales;
  double shrink = 1.0;
  bool adapt_to_live = false;
};

/// Draw from the unconstrained prior until the level is met.
struct Rejection {
  std::size_t budget = 100000;
};

using ConstrainedSampler = std::variant<ExactRadial, GibbsDecentred, RandomWalk, Rejection>;

/// Everything a strategy may consult when replacing the worst live point.
struct ConstraintContext {
  const Model& model;
  double log_level;
  const Point& discarded;             // point whose likelihood set the level
  std::span<const Point> live;        // current live set, discarded included
  std::size_t discarded_index = 0;
  std::size_t iteration = 0;
};

struct ConstrainedDraw {
  Point point;
  double log_lik = kNegInf;
  std::size_t evaluations = 0;  // likelihood evaluations spent
  std::size_t proposed = 0;     // MCMC proposals (0 for exact strategies)
  std::size_t accepted = 0;
};

/// Dispatches on the strategy. Returns nullopt when the strategy gives up
/// (rejection budget exhausted); every returned point satisfies
/// log L(point) >= log_level.
std::optional<ConstrainedDraw> draw_constrained(const ConstrainedSampler& sampler,
                                                const ConstraintContext& ctx,
                                                RandomSource& rng);

std::string sampler_name(const ConstrainedSampler& sampler);

// Individual strategies ----------------------------------------------------

/// Throws std::domain_error when the level exceeds the maximum likelihood.
Point exact_radial(int dim, double log_level, RandomSource& rng);

/// N(0,1) truncated to [lo, hi] by inverse CDF, folding to the lower tail so
/// that intervals far in the upper tail keep their precision.
double truncated_standard_normal(double lo, double hi, RandomSource& rng);

/// M Gibbs sweeps; the level is fixed by `level_point` through
/// sum_k (y_k - level_point_k)^2. Throws std::domain_error if `start` violates
/// the constraint.
Point gibbs_decentred(const Point& start, const Point& level_point, const Eigen::VectorXd& data,
                      std::size_t sweeps, RandomSource& rng);

struct RandomWalkResult {
  Point point;
  double log_lik = kNegInf;
  std::size_t proposed = 0;
  std::size_t accepted = 0;
  std::size_t evaluations = 0;
  double stall_fraction() const {
    return proposed == 0 ? 0.0 : 1.0 - static_cast<double>(accepted) / proposed;
  }
};

RandomWalkResult rwm_constrained(const Model& model, const Point& start, double log_level,
                                 std::size_t steps, const Eigen::VectorXd& scales,
                                 RandomSource& rng);

struct RejectionResult {
  Point point;
  double log_lik = kNegInf;
  std::size_t attempts = 0;
};

std::optional<RejectionResult> rejection_from_prior(const Model& model, double log_level,
                                                    std::size_t budget, RandomSource& rng);

}  // namespace nestsample
