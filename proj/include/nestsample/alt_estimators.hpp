#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "nestsample/core.hpp"

namespace nestsample {

enum class KernelKind { gaussian, student_t };

struct KernelFit {
  KernelKind kind = KernelKind::gaussian;
  double dof = 3.0;               // student_t only
  double bandwidth_factor = 1.0;
  Eigen::VectorXd bandwidth;      // per coordinate, factor applied
  std::vector<Point> sample;
};

struct ProposalDensity {
  std::function<double(const Point&)> log_density;
  std::function<Point(RandomSource&)> sample;  // may be empty
  std::optional<KernelFit> kernel;             // empty for analytic densities
};

ProposalDensity gaussian_proposal(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov);

/// 0.9 min(sd, IQR / 1.34) T^{-1/5} per coordinate. Throws
/// std::invalid_argument on a coordinate with zero spread or T < 2.
Eigen::VectorXd default_bandwidth(std::span<const Point> sample);

/// Product-kernel density estimate, bandwidth = factor * default_bandwidth.
ProposalDensity kernel_proposal_fit(std::span<const Point> sample, KernelKind kind,
                                    double bandwidth_factor, double dof = 3.0);

/// Reverse importance sampling: 1 / mean_t g(theta_t) / (pi L)(theta_t) over a
/// posterior sample. Throws std::domain_error if pi L vanishes at a sample
/// point.
LogValue reverse_is(std::span<const Point> posterior_sample, const Model& model,
                    const ProposalDensity& g);

/// mean_t (pi L)(theta_t) / g(theta_t) with theta_t ~ g.
LogValue importance_sampling(const Model& model, const ProposalDensity& g, std::size_t draws,
                             RandomSource& rng);

/// One step of a posterior MCMC kernel.
using PosteriorKernel = std::function<Point(const Point&, RandomSource&)>;

/// Metropolis random walk targeting pi L, `steps` proposals per call.
PosteriorKernel random_walk_posterior_kernel(const Model& model, Eigen::VectorXd scales,
                                             std::size_t steps = 1);

/// `length` states of the kernel chain after `burn_in` discarded ones.
std::vector<Point> posterior_chain(const Point& start, std::size_t length, std::size_t burn_in,
                                   const PosteriorKernel& kernel, RandomSource& rng);

struct MixtureChainState {
  Point theta;
  int delta = 1;  // 1: posterior kernel move, 2: fresh draw from g
};

/// Gibbs sampler on the mixture omega_1 pi L + g with its component label.
std::vector<MixtureChainState> mixture_gibbs(const Model& model, const ProposalDensity& g,
                                             double omega1, std::size_t length, const Point& start,
                                             const PosteriorKernel& kernel, RandomSource& rng);

/// mean_t omega_1 pi L / (omega_1 pi L + g) along the chain.
double rao_blackwell_xi(std::span<const MixtureChainState> chain, const Model& model,
                        const ProposalDensity& g, double omega1);

/// Solves omega_1 Z / (omega_1 Z + 1) = xi. Throws std::domain_error unless
/// 0 < xi < 1.
LogValue z3_from_xi(double xi, double omega1);

/// (1/omega_1) sum_t a_t / sum_t b_t with a_t = omega_1 pi L / (omega_1 pi L + g)
/// and b_t = g / (omega_1 pi L + g), both sums taken in log domain.
LogValue z3_bridge_form(std::span<const MixtureChainState> chain, const Model& model,
                        const ProposalDensity& g, double omega1);

}  // namespace nestsample
