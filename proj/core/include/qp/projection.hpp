#ifndef QPROP_PROJECTION_HPP
#define QPROP_PROJECTION_HPP

#include <cstdint>
#include <functional>
#include <utility>

#include "qp/likelihoods.hpp"

namespace qp {

enum class ProjectionMethod { kl, w2, lp };

struct ProjectedGaussian {
  double mean = 0.0;
  double var = 1.0;
  ProjectionMethod method = ProjectionMethod::kl;
  double lp_order = 0.0;  // set for method == lp
};

using RealFn = std::function<double(double)>;

// KL (moment-matching) projection: the Gaussian with the tilted moments.
ProjectedGaussian project_kl(const TiltedMoments& tilted);

struct W2Options {
  double abs_tol = 1e-10;   // absolute quadrature tolerance of the sd integral
  int max_segments = 4000;
  double scale_hint = 0.0;  // ~sd of the tilted mass; 0: derived from the support
};

// Widens [lo, hi] until cdf(lo) <= 1e-12 and cdf(hi) >= 1 - 1e-12.
std::pair<double, double> widen_support(const RealFn& cdf, std::pair<double, double> hint);

// L2 Wasserstein projection: mean is the tilted mean, the standard deviation
// is 1/sqrt(2 pi) Int exp(-[erfinv(2 F(f) - 1)]^2) df, integrated adaptively
// over the (widened) support. The integrand is clamped to zero once
// |2F - 1| >= 1 - 1e-15. Throws NumericalError if quadrature fails.
ProjectedGaussian project_w2(const RealFn& cdf, double tilted_mean,
                             std::pair<double, double> support_hint,
                             const W2Options& options = {});

// W_p^p(q, N(mu, sigma^2)) evaluated in x-space:
//   Int |x - mu - sqrt(2) sigma erfinv(2 F(x) - 1)|^p q(x) dx.
double wasserstein_pp(double p, const RealFn& cdf, const RealFn& pdf,
                      std::pair<double, double> support, double mu, double sigma,
                      double abs_tol = 1e-10);

struct LpOptions {
  double grad_tol = 1e-8;  // infinity norm over the (mu, log sigma) gradient
  int max_iters = 10000;
  double quad_tol = 1e-10;
  double armijo_c = 1e-4;
};

// Gradient-descent L_p projection on (mu, log sigma) with Armijo backtracking.
// Strict convexity makes the optimum independent of init.
ProjectedGaussian project_lp(double p, const RealFn& cdf, const RealFn& pdf,
                             const ProjectedGaussian& init,
                             std::pair<double, double> support,
                             const LpOptions& options = {});

struct LpGradients {
  double d_mu = 0.0;
  double d_sigma = 0.0;
};

// Quadrature gradients of W_p^p at (mu, sigma).
LpGradients lp_gradients(double p, const RealFn& cdf, const RealFn& pdf,
                         std::pair<double, double> support, double mu, double sigma,
                         double abs_tol = 1e-10);

// Monte Carlo estimate of the same gradients by importance sampling from a
// Gaussian proposal (typically the cavity). weight(x) must be proportional to
// tilted(x) / N(x | proposal); the likelihood itself qualifies.
LpGradients lp_gradients_mc(double p, const RealFn& cdf, const RealFn& weight,
                            double proposal_mean, double proposal_sd, double mu,
                            double sigma, int n_samples, std::uint64_t seed);

}  // namespace qp

#endif
