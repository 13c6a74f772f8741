#include "qp/projection.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "qp/errors.hpp"
#include "qp/quadrature.hpp"
#include "qp/special_functions.hpp"

namespace qp {

namespace {

namespace sf = qp::special;

constexpr double kSqrt2 = 1.41421356237309504880;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
constexpr double kCdfClamp = 1.0 - 1e-15;

// erfinv(2F - 1) with the tail clamp; |result| <= erfinv(1 - 1e-15) ~ 5.68.
double clamped_quantile_arg(double f_val) {
  const double u = 2.0 * f_val - 1.0;
  if (u >= kCdfClamp) return sf::erf_inv(kCdfClamp);
  if (u <= -kCdfClamp) return -sf::erf_inv(kCdfClamp);
  return sf::erf_inv(u);
}

}  // namespace

ProjectedGaussian project_kl(const TiltedMoments& tilted) {
  if (!(tilted.var > 0.0) || !std::isfinite(tilted.var) || !std::isfinite(tilted.mean)) {
    throw ValidationError("project_kl: invalid tilted moments");
  }
  return {tilted.mean, tilted.var, ProjectionMethod::kl, 0.0};
}

std::pair<double, double> widen_support(const RealFn& cdf, std::pair<double, double> hint) {
  double lo = hint.first;
  double hi = hint.second;
  if (!(lo < hi)) throw ValidationError("widen_support: empty support hint");
  // Capped doubling: once the CDF endpoint noise floor sits above 1e-12 the
  // condition can stay unresolved forever; the tail clamp keeps any
  // unresolved region harmless.
  double span = hi - lo;
  for (int i = 0; i < 11 && cdf(lo) > 1e-12; ++i) {
    lo -= 0.5 * span;
    span = hi - lo;
  }
  for (int i = 0; i < 11 && cdf(hi) < 1.0 - 1e-12; ++i) {
    hi += 0.5 * span;
    span = hi - lo;
  }
  return {lo, hi};
}

ProjectedGaussian project_w2(const RealFn& cdf, double tilted_mean,
                             std::pair<double, double> support_hint,
                             const W2Options& options) {
  const auto [lo, hi] = widen_support(cdf, support_hint);
  const auto integrand = [&](double f) {
    const double u = 2.0 * cdf(f) - 1.0;
    if (std::fabs(u) >= kCdfClamp) return 0.0;
    const double v = sf::erf_inv(u);
    return std::exp(-v * v);
  };
  const double scale =
      options.scale_hint > 0.0 ? options.scale_hint : (hi - lo) / 24.0;
  // The clamp zeroes the integrand once |2F-1| >= 1 - 1e-15, which for a
  // Gaussian-like quantile happens ~8.2 sd out; integrate a window around the
  // mass and extend it while the edges are still live.
  double win_lo = std::max(lo, tilted_mean - 9.0 * scale);
  double win_hi = std::min(hi, tilted_mean + 9.0 * scale);
  if (!(win_lo < win_hi)) {
    win_lo = lo;
    win_hi = hi;
  }
  for (int i = 0; i < 24 && win_lo > lo && integrand(win_lo) > 1e-14; ++i) {
    win_lo = std::max(lo, win_lo - 2.0 * scale);
  }
  for (int i = 0; i < 24 && win_hi < hi && integrand(win_hi) > 1e-14; ++i) {
    win_hi = std::min(hi, win_hi + 2.0 * scale);
  }
  // Seed the partition around the mass so refinement starts at the right
  // resolution instead of bisecting down from the whole window.
  std::vector<double> breaks;
  for (double m : {-7.0, -4.0, -2.5, -1.5, -0.75, 0.0, 0.75, 1.5, 2.5, 4.0, 7.0}) {
    breaks.push_back(tilted_mean + m * scale);
  }
  const QuadratureResult r = integrate_with_breakpoints(
      integrand, win_lo, win_hi, breaks, options.abs_tol * kSqrt2, options.max_segments);
  if (!r.converged) {
    std::ostringstream msg;
    msg << "project_w2: quadrature failed on [" << lo << ", " << hi
        << "], error estimate " << r.error_estimate << " after " << r.evaluations
        << " evaluations";
    throw NumericalError(msg.str());
  }
  const double sigma = kInvSqrt2Pi * r.value;
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw NumericalError("project_w2: nonpositive sd from quadrature");
  }
  return {tilted_mean, sigma * sigma, ProjectionMethod::w2, 0.0};
}

namespace {

// Sign-change locations of eta(x) = x - mu - sqrt(2) sigma erfinv(2F(x)-1).
// For p < 2 the L_p integrands are not smooth at these roots, so quadrature
// segments are split there instead of letting refinement chase the kinks.
std::vector<double> eta_roots(const RealFn& cdf, std::pair<double, double> support,
                              double mu, double sigma) {
  const auto eta = [&](double x) {
    return x - mu - kSqrt2 * sigma * clamped_quantile_arg(cdf(x));
  };
  std::vector<double> roots;
  constexpr int kScan = 96;
  double x_prev = support.first;
  double e_prev = eta(x_prev);
  for (int i = 1; i <= kScan; ++i) {
    const double x = support.first + (support.second - support.first) * i / kScan;
    const double e = eta(x);
    if ((e_prev < 0.0 && e > 0.0) || (e_prev > 0.0 && e < 0.0)) {
      double lo = x_prev, hi = x, e_lo = e_prev;
      for (int it = 0; it < 60; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double e_mid = eta(mid);
        if ((e_lo < 0.0) == (e_mid < 0.0)) {
          lo = mid;
          e_lo = e_mid;
        } else {
          hi = mid;
        }
      }
      roots.push_back(0.5 * (lo + hi));
    }
    x_prev = x;
    e_prev = e;
  }
  return roots;
}

}  // namespace

double wasserstein_pp(double p, const RealFn& cdf, const RealFn& pdf,
                      std::pair<double, double> support, double mu, double sigma,
                      double abs_tol) {
  const auto integrand = [&](double x) {
    const double eta = x - mu - kSqrt2 * sigma * clamped_quantile_arg(cdf(x));
    return std::pow(std::fabs(eta), p) * pdf(x);
  };
  std::vector<double> breaks;
  if (p < 2.0) breaks = eta_roots(cdf, support, mu, sigma);
  return integrate_with_breakpoints(integrand, support.first, support.second, breaks,
                                    abs_tol, 4000)
      .value;
}

LpGradients lp_gradients(double p, const RealFn& cdf, const RealFn& pdf,
                         std::pair<double, double> support, double mu, double sigma,
                         double abs_tol) {
  const auto common = [&](double x) {
    const double q = clamped_quantile_arg(cdf(x));
    const double eta = x - mu - kSqrt2 * sigma * q;
    const double mag = p == 1.0 ? 1.0 : std::pow(std::fabs(eta), p - 1.0);
    const double s = eta > 0.0 ? 1.0 : (eta < 0.0 ? -1.0 : 0.0);
    return std::pair<double, double>{mag * s * pdf(x), q};
  };
  const auto f_mu = [&](double x) { return common(x).first; };
  const auto f_sigma = [&](double x) {
    const auto [base, q] = common(x);
    return base * q;
  };
  std::vector<double> breaks;
  if (p < 2.0) breaks = eta_roots(cdf, support, mu, sigma);
  for (double m : {-8.0, -4.0, -2.0, -1.0, 0.0, 1.0, 2.0, 4.0, 8.0}) {
    breaks.push_back(mu + m * sigma);
  }
  LpGradients g;
  g.d_mu = -p * integrate_with_breakpoints(f_mu, support.first, support.second, breaks,
                                           abs_tol, 4000)
                    .value;
  g.d_sigma = -p * kSqrt2 *
              integrate_with_breakpoints(f_sigma, support.first, support.second, breaks,
                                         abs_tol, 4000)
                  .value;
  return g;
}

ProjectedGaussian project_lp(double p, const RealFn& cdf, const RealFn& pdf,
                             const ProjectedGaussian& init,
                             std::pair<double, double> support,
                             const LpOptions& options) {
  if (!(p >= 1.0)) throw ValidationError("project_lp: requires p >= 1");
  if (!(init.var > 0.0)) throw ValidationError("project_lp: init.var must be positive");

  double mu = init.mean;
  double log_sigma = 0.5 * std::log(init.var);
  double step = 0.25;
  // Quadrature tolerance tracks the objective scale: near tight minima the
  // W_p^p values shrink by orders of magnitude and an absolute tolerance
  // would drown the Armijo comparisons in integration noise.
  const auto tol_for = [&](double v) {
    return std::clamp(1e-4 * std::fabs(v), 1e-14, options.quad_tol);
  };
  double value = wasserstein_pp(p, cdf, pdf, support, mu, std::exp(log_sigma),
                                options.quad_tol);
  value = wasserstein_pp(p, cdf, pdf, support, mu, std::exp(log_sigma), tol_for(value));
  // The gradient integrals must resolve the stopping test itself.
  const double grad_quad_tol = std::min(options.quad_tol, 0.1 * options.grad_tol);
  double anchor_mu = mu, anchor_ls = log_sigma;
  int since_anchor = 0;
  for (int iter = 0; iter < options.max_iters; ++iter) {
    const double sigma = std::exp(log_sigma);
    const LpGradients g = lp_gradients(p, cdf, pdf, support, mu, sigma,
                                       std::min(grad_quad_tol, tol_for(value)));
    const double g_log_sigma = g.d_sigma * sigma;  // chain rule for log sigma
    const double inf_norm = std::max(std::fabs(g.d_mu), std::fabs(g_log_sigma));
    if (inf_norm <= options.grad_tol) {
      return {mu, sigma * sigma, ProjectionMethod::lp, p};
    }
    const double dir_sq = g.d_mu * g.d_mu + g_log_sigma * g_log_sigma;
    bool accepted = false;
    for (int back = 0; back < 60; ++back) {
      const double mu_try = mu - step * g.d_mu;
      const double ls_try = log_sigma - step * g_log_sigma;
      const double trial = wasserstein_pp(p, cdf, pdf, support, mu_try,
                                          std::exp(ls_try), tol_for(value));
      if (trial <= value - options.armijo_c * step * dir_sq) {
        mu = mu_try;
        log_sigma = ls_try;
        value = trial;
        step *= 1.5;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      return {mu, std::exp(2.0 * log_sigma), ProjectionMethod::lp, p};
    }
    // Stall exit: quadrature bias can hold the measured gradient a hair above
    // the tolerance at the optimum (and p = 1 cones never satisfy it); once
    // the iterate stops moving it is the minimizer at working resolution.
    if (std::max(std::fabs(mu - anchor_mu), std::fabs(log_sigma - anchor_ls)) > 1e-11) {
      anchor_mu = mu;
      anchor_ls = log_sigma;
      since_anchor = 0;
    } else if (++since_anchor >= 50) {
      return {mu, std::exp(2.0 * log_sigma), ProjectionMethod::lp, p};
    }
  }
  std::ostringstream msg;
  msg << "project_lp: no convergence after " << options.max_iters
      << " iterations; last iterate mu=" << mu << " sigma=" << std::exp(log_sigma);
  throw NumericalError(msg.str());
}

LpGradients lp_gradients_mc(double p, const RealFn& cdf, const RealFn& weight,
                            double proposal_mean, double proposal_sd, double mu,
                            double sigma, int n_samples, std::uint64_t seed) {
  if (n_samples <= 0) throw ValidationError("lp_gradients_mc: n_samples must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(proposal_mean, proposal_sd);
  double w_sum = 0.0, mu_sum = 0.0, sigma_sum = 0.0;
  for (int i = 0; i < n_samples; ++i) {
    const double x = normal(rng);
    const double w = weight(x);
    const double q = clamped_quantile_arg(cdf(x));
    const double eta = x - mu - kSqrt2 * sigma * q;
    const double mag = p == 1.0 ? 1.0 : std::pow(std::fabs(eta), p - 1.0);
    const double s = eta > 0.0 ? 1.0 : (eta < 0.0 ? -1.0 : 0.0);
    w_sum += w;
    mu_sum += w * mag * s;
    sigma_sum += w * mag * s * q;
  }
  if (w_sum <= 0.0) throw NumericalError("lp_gradients_mc: all weights vanished");
  return {-p * mu_sum / w_sum, -p * kSqrt2 * sigma_sum / w_sum};
}

}  // namespace qp
