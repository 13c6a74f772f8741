#include "qp/inference.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <algorithm>
#include <cmath>
#include <deque>
#include <sstream>

#include "qp/detail/rng.hpp"
#include "qp/errors.hpp"

namespace qp {

namespace {

constexpr double kLogTwoPi = 1.83787706640934548356;
constexpr double kSitePrecisionFloor = 1e-12;

std::vector<int> update_order(int n, UpdateOrder order, std::uint64_t seed, int sweep) {
  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) idx[i] = i;
  if (order == UpdateOrder::random) {
    detail::shuffle_indices(idx, seed * 1315423911ULL + std::uint64_t(sweep) + 1);
  }
  return idx;
}

// Convergence metric representation of a site. Natural parameters stay
// continuous when a site crosses vacuous (the (mean, sd) chart is singular
// there, which would hold the sweep RMS above any tolerance forever).
std::pair<double, double> site_metric(const SiteParams& s) {
  return {s.natural_mean(), s.precision()};
}

// log q(D) assembled in the always-real arrangement
//   sum_i [log Z~_i - log(2 pi |var_t_i|)/2 - nu_i^2 / (2 tau_i)]
//     - log det(I + K T) / 2 + nu' Sigma nu / 2,
// where det(I + K T) = det(K) det(K^{-1} + T) stays positive whenever the
// posterior is positive definite, including anti-sites (tau < 0).
double evidence_from_state(const CovMatrix& k, const std::vector<SiteParams>& sites,
                           const Eigen::MatrixXd& cov) {
  const int n = k.size();
  Eigen::VectorXd nu = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd tau = Eigen::VectorXd::Zero(n);
  double site_sum = 0.0;
  bool any_informative = false;
  for (int i = 0; i < n; ++i) {
    tau[i] = sites[i].precision();
    if (tau[i] == 0.0) continue;
    any_informative = true;
    nu[i] = sites[i].natural_mean();
    site_sum += sites[i].log_zt - 0.5 * std::log(2.0 * 3.14159265358979323846 *
                                                 std::fabs(sites[i].var_t)) -
                nu[i] * nu[i] / (2.0 * tau[i]);
  }
  if (!any_informative) return 0.0;
  Eigen::MatrixXd m = k.k * tau.asDiagonal();
  m.diagonal().array() += 1.0;
  const Eigen::PartialPivLU<Eigen::MatrixXd> lu(m);
  const Eigen::MatrixXd& lu_mat = lu.matrixLU();
  double log_det = 0.0;
  double det_sign = lu.permutationP().determinant();
  for (int i = 0; i < n; ++i) {
    const double piv = lu_mat(i, i);
    if (piv < 0.0) det_sign = -det_sign;
    log_det += std::log(std::fabs(piv));
  }
  if (det_sign <= 0.0) {
    throw SingularMatrixError("log evidence: det(I + K T) not positive");
  }
  const double quad = nu.dot(cov * nu);
  return site_sum - 0.5 * log_det + 0.5 * quad;
}

}  // namespace

SiteParams SiteParams::from_natural(double tau, double nu, double log_zt) {
  SiteParams s;
  s.log_zt = log_zt;
  if (tau == 0.0) {
    s.mu_t = 0.0;
    s.var_t = std::numeric_limits<double>::infinity();
  } else {
    s.var_t = 1.0 / tau;
    s.mu_t = nu / tau;
  }
  return s;
}

std::optional<CavityParams> cavity(double marginal_mean, double marginal_var,
                                   const SiteParams& site) {
  if (!(marginal_var > 0.0)) {
    throw ValidationError("cavity: marginal variance must be positive");
  }
  if (site.vacuous()) return CavityParams{marginal_mean, marginal_var};
  const double tau_cav = 1.0 / marginal_var - site.precision();
  if (!(tau_cav > 0.0)) return std::nullopt;
  const double var_cav = 1.0 / tau_cav;
  const double mu_cav =
      var_cav * (marginal_mean / marginal_var - site.natural_mean());
  return CavityParams{mu_cav, var_cav};
}

SiteUpdateResult site_update(const CavityParams& cav, const ProjectedGaussian& projected,
                             double damping, const SiteParams& old_site,
                             double tilted_log_z) {
  if (!(projected.var > 0.0)) {
    throw ValidationError("site_update: projected variance must be positive");
  }
  if (!(damping > 0.0 && damping <= 1.0)) {
    throw ValidationError("site_update: damping must be in (0, 1]");
  }
  const double tau_cav = 1.0 / cav.var;
  const double tau_star = 1.0 / projected.var;
  const double tau_new = tau_star - tau_cav;
  const double nu_new = projected.mean * tau_star - cav.mean * tau_cav;

  double tau = (1.0 - damping) * old_site.precision() + damping * tau_new;
  double nu = (1.0 - damping) * old_site.natural_mean() + damping * nu_new;

  SiteUpdateResult out;
  if (tau == 0.0 && nu == 0.0) {
    out.site = SiteParams{};  // vacuous, no information
    return out;
  }
  // Negative precision (an anti-site) is legal as long as the updated
  // marginal keeps positive precision with some numerical headroom; beyond
  // that the posterior would lose definiteness, so floor the site and center
  // it on the projection so it carries (almost) no weight.
  if (tau_cav + tau <= 1e-9 * tau_cav) {
    tau = kSitePrecisionFloor;
    nu = tau * projected.mean;
    out.clipped = true;
  }
  if (tau == 0.0) tau = kSitePrecisionFloor;  // representable vacuous-adjacent
  const double var_t = 1.0 / tau;
  const double mu_t = nu / tau;
  // Consistent normalization; for anti-sites cav.var + var_t is negative with
  // the same sign as var_t, so the paired evidence expression stays real.
  const double denom = cav.var + var_t;
  const double log_zt = tilted_log_z + 0.5 * kLogTwoPi +
                        0.5 * std::log(std::fabs(denom)) +
                        (cav.mean - mu_t) * (cav.mean - mu_t) / (2.0 * denom);
  out.site = SiteParams{log_zt, mu_t, var_t};
  return out;
}

PosteriorState recompute_posterior(const CovMatrix& k,
                                   const std::vector<SiteParams>& sites) {
  const int n = k.size();
  if (static_cast<int>(sites.size()) != n) {
    throw ValidationError("recompute_posterior: site count != matrix size");
  }
  PosteriorState out;
  out.sites = sites;

  Eigen::VectorXd nu(n), tau(n);
  bool any_negative = false;
  for (int i = 0; i < n; ++i) {
    tau[i] = sites[i].precision();
    nu[i] = sites[i].natural_mean();
    any_negative |= tau[i] < 0.0;
  }
  if (!any_negative) {
    // B = I + sqrt(T) K sqrt(T); Sigma = K - K sqrt(T) B^{-1} sqrt(T) K.
    const Eigen::VectorXd sqrt_tau = tau.cwiseSqrt();
    Eigen::MatrixXd b = sqrt_tau.asDiagonal() * k.k * sqrt_tau.asDiagonal();
    b.diagonal().array() += 1.0;
    Eigen::LLT<Eigen::MatrixXd> llt(b);
    if (llt.info() != Eigen::Success) {
      throw SingularMatrixError("recompute_posterior: Cholesky of B failed");
    }
    const Eigen::MatrixXd sk = sqrt_tau.asDiagonal() * k.k;  // sqrt(T) K
    const Eigen::MatrixXd v = llt.matrixL().solve(sk);
    out.cov = k.k - v.transpose() * v;
  } else {
    // Anti-sites make sqrt(T) ill-defined; solve (I + K T) Sigma = K instead.
    Eigen::MatrixXd m = k.k * tau.asDiagonal();
    m.diagonal().array() += 1.0;
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(m);
    out.cov = lu.solve(k.k);
  }
  out.cov = 0.5 * (out.cov + out.cov.transpose());
  if (any_negative) {
    // definiteness check with roundoff headroom; anti-site states can be
    // legitimately close to singular
    Eigen::MatrixXd guarded = out.cov;
    guarded.diagonal().array() += 1e-10 * out.cov.diagonal().maxCoeff();
    const Eigen::LLT<Eigen::MatrixXd> pd_check(guarded);
    if (pd_check.info() != Eigen::Success) {
      throw SingularMatrixError("recompute_posterior: posterior not positive definite");
    }
  }
  out.mu = out.cov * nu;
  out.log_evidence = evidence_from_state(k, sites, out.cov);
  return out;
}

PosteriorState fit(const CovMatrix& k, const std::vector<int>& y, const Likelihood& lik,
                   const FitConfig& config, const std::vector<SiteParams>* init_sites) {
  const int n = k.size();
  if (static_cast<int>(y.size()) != n) {
    throw ValidationError("fit: observation count != matrix size");
  }
  for (int v : y) lik.validate_observation(v);
  if (config.method == Method::qp && config.sigma_source == SigmaStarSource::table &&
      config.table == nullptr) {
    throw ValidationError("fit: table sigma source requires a lookup table");
  }
  if (!(config.inner_tol > 0.0)) throw ValidationError("fit: inner_tol must be positive");

  std::vector<SiteParams> sites =
      init_sites != nullptr ? *init_sites : std::vector<SiteParams>(n);
  if (static_cast<int>(sites.size()) != n) {
    throw ValidationError("fit: init_sites size mismatch");
  }

  PosteriorState post = recompute_posterior(k, sites);
  FitDiagnostics diag;

  for (int sweep = 0; sweep < config.max_sweeps; ++sweep) {
    const std::vector<SiteParams> before = sites;
    const std::vector<int> order =
        update_order(n, config.order, config.order_seed, sweep);
    for (int i : order) {
      try {
        const double marg_mean = post.mu[i];
        const double marg_var = post.cov(i, i);
        if (!(marg_var > 0.0)) {  // roundoff drift in near-singular states
          ++diag.skipped_cavities;
          continue;
        }
        const auto cav = cavity(marg_mean, marg_var, sites[i]);
        if (!cav.has_value()) {
          ++diag.skipped_cavities;
          continue;
        }
        const TiltedMoments tilted = lik.tilted_moments(*cav, y[i]);
        if (tilted.used_quadrature) ++diag.moment_quadratures;

        ProjectedGaussian projected;
        if (config.method == Method::ep) {
          projected = project_kl(tilted);
        } else if (config.sigma_source == SigmaStarSource::quadrature) {
          std::int64_t cdf_fallbacks = 0;
          const auto cdf = [&](double x) {
            const TiltedCdfValue c = lik.tilted_cdf(x, *cav, y[i]);
            if (c.used_quadrature) ++cdf_fallbacks;
            return c.value;
          };
          W2Options w2 = config.w2;
          w2.scale_hint = std::sqrt(tilted.var);
          projected = project_w2(cdf, tilted.mean, lik.support_hint(*cav, y[i]), w2);
          diag.cdf_quadratures += cdf_fallbacks;
          if (projected.var > tilted.var + 1e-9) ++diag.ordering_violations;
        } else {
          const InterpResult r =
              interp_sigma_with_moments(*config.table, lik, *cav, y[i], tilted);
          switch (r.source) {
            case SigmaSource::table: ++diag.table_hits; break;
            case SigmaSource::fallback_ep: ++diag.ep_fallbacks; break;
            case SigmaSource::fallback_direct: ++diag.direct_fallbacks; break;
          }
          // Interpolation noise must not push past the moment-matched sd, which
          // bounds the exact projection from above.
          const double sd = std::min(r.sigma_star, std::sqrt(tilted.var));
          projected = ProjectedGaussian{tilted.mean, sd * sd, ProjectionMethod::w2, 0.0};
        }

        const SiteUpdateResult updated =
            site_update(*cav, projected, config.damping, sites[i], tilted.log_z);
        if (updated.clipped) ++diag.clipped_sites;

        const double d_tau = updated.site.precision() - sites[i].precision();
        const double d_nu = updated.site.natural_mean() - sites[i].natural_mean();
        sites[i] = updated.site;

        const double denom = 1.0 + d_tau * post.cov(i, i);
        if (std::fabs(denom) < 1e-12) {
          post = recompute_posterior(k, sites);
          continue;
        }
        const Eigen::VectorXd col = post.cov.col(i);
        post.cov.noalias() -= (d_tau / denom) * (col * col.transpose());
        post.mu.noalias() += ((d_nu - d_tau * post.mu[i]) / denom) * col;
      } catch (const NumericalError& e) {
        std::ostringstream msg;
        msg << "fit: site " << i << ": " << e.what();
        throw NumericalError(msg.str());
      }
    }

    post = recompute_posterior(k, sites);
    double sq_change = 0.0;
    for (int i = 0; i < n; ++i) {
      const auto [m0, s0] = site_metric(before[i]);
      const auto [m1, s1] = site_metric(sites[i]);
      sq_change += (m1 - m0) * (m1 - m0) + (s1 - s0) * (s1 - s0);
    }
    const double rms = std::sqrt(sq_change / (2.0 * n));
    diag.sweeps = sweep + 1;
    if (rms < config.inner_tol) {
      diag.converged = true;
      break;
    }
  }

  post.diagnostics = diag;
  return post;
}

// ---------------------------------------------------------------------------
// hyperparameter optimization
// ---------------------------------------------------------------------------

namespace {

struct Objective {
  const Eigen::MatrixXd& x;
  const std::vector<int>& y;
  const Likelihood& lik;
  const FitConfig& fit_config;
  int dim;
  std::vector<SiteParams> warm_sites;
  bool have_warm = false;
  int evals = 0;

  // Returns -log evidence (minimized), +inf on numerical failure.
  double operator()(const Eigen::VectorXd& log_params, PosteriorState* out_post = nullptr,
                    bool adopt_warm = false) {
    ++evals;
    try {
      const KernelParams params = KernelParams::from_log(log_params, dim);
      CovMatrix k = build_cov(x, params);
      cholesky_with_jitter(k, params.gamma);
      const PosteriorState post =
          fit(k, y, lik, fit_config, have_warm ? &warm_sites : nullptr);
      if (!std::isfinite(post.log_evidence)) return std::numeric_limits<double>::infinity();
      if (adopt_warm) {
        warm_sites = post.sites;
        have_warm = true;
      }
      if (out_post != nullptr) *out_post = post;
      return -post.log_evidence;
    } catch (const std::exception&) {
      return std::numeric_limits<double>::infinity();
    }
  }
};

}  // namespace

HyperOptResult optimize_hypers(const Eigen::MatrixXd& x, const std::vector<int>& y,
                               const Likelihood& lik, const KernelParams& init,
                               const FitConfig& fit_config,
                               const HyperOptConfig& opt_config) {
  init.validate();
  const int dim = static_cast<int>(x.cols());
  if (init.lengthscales.size() != dim) {
    throw ValidationError("optimize_hypers: lengthscale count != input dimension");
  }
  const int p = dim + 1;
  const auto project_box = [&](Eigen::VectorXd v) {
    for (int i = 0; i < p; ++i) v[i] = std::clamp(v[i], opt_config.log_lo, opt_config.log_hi);
    return v;
  };

  Objective objective{x, y, lik, fit_config, dim, {}, false, 0};
  Eigen::VectorXd theta = project_box(init.to_log());
  double f = objective(theta, nullptr, true);
  if (!std::isfinite(f)) {
    throw NumericalError("optimize_hypers: objective not finite at the initial point");
  }

  const auto gradient = [&](const Eigen::VectorXd& at) {
    Eigen::VectorXd g(p);
    for (int j = 0; j < p; ++j) {
      Eigen::VectorXd hi = at, lo = at;
      hi[j] += opt_config.fd_step;
      lo[j] -= opt_config.fd_step;
      const double fh = objective(hi);
      const double fl = objective(lo);
      g[j] = (fh - fl) / (2.0 * opt_config.fd_step);
      if (!std::isfinite(g[j])) g[j] = 0.0;
    }
    return g;
  };

  std::deque<Eigen::VectorXd> s_hist, y_hist;
  std::deque<double> rho_hist;
  Eigen::VectorXd grad = gradient(theta);
  Eigen::VectorXd best_theta = theta;
  double best_f = f;
  bool converged = false;
  int iter = 0;

  for (; iter < opt_config.max_iters; ++iter) {
    // Two-loop recursion for the L-BFGS direction.
    Eigen::VectorXd q = grad;
    std::vector<double> alpha(s_hist.size());
    for (int i = static_cast<int>(s_hist.size()) - 1; i >= 0; --i) {
      alpha[i] = rho_hist[i] * s_hist[i].dot(q);
      q -= alpha[i] * y_hist[i];
    }
    if (!s_hist.empty()) {
      const double gamma_scale =
          s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
      q *= gamma_scale;
    }
    for (std::size_t i = 0; i < s_hist.size(); ++i) {
      const double beta = rho_hist[i] * y_hist[i].dot(q);
      q += (alpha[i] - beta) * s_hist[i];
    }
    Eigen::VectorXd direction = -q;
    if (direction.dot(grad) >= 0.0) direction = -grad;  // safeguard

    double step = 1.0;
    double f_new = std::numeric_limits<double>::infinity();
    Eigen::VectorXd theta_new;
    bool accepted = false;
    for (int back = 0; back < 40; ++back) {
      theta_new = project_box(theta + step * direction);
      f_new = objective(theta_new);
      const double slope = grad.dot(theta_new - theta);
      if (std::isfinite(f_new) && f_new <= f + 1e-4 * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;  // stalled; return best iterate

    objective(theta_new, nullptr, true);  // refresh warm start at accepted point
    const Eigen::VectorXd grad_new = gradient(theta_new);
    const Eigen::VectorXd s = theta_new - theta;
    const Eigen::VectorXd yv = grad_new - grad;
    const double sy = s.dot(yv);
    if (sy > 1e-12) {
      s_hist.push_back(s);
      y_hist.push_back(yv);
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > opt_config.lbfgs_memory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
    const double f_prev = f;
    theta = theta_new;
    f = f_new;
    grad = grad_new;
    if (f < best_f) {
      best_f = f;
      best_theta = theta;
    }
    if (std::fabs(f_prev - f) <=
        opt_config.rel_f_tol * std::max({1.0, std::fabs(f_prev), std::fabs(f)})) {
      converged = true;
      ++iter;
      break;
    }
  }

  HyperOptResult result;
  result.params = KernelParams::from_log(best_theta, dim);
  result.iterations = iter;
  result.converged = converged;

  CovMatrix k = build_cov(x, result.params);
  cholesky_with_jitter(k, result.params.gamma);
  result.posterior = fit(k, y, lik, fit_config,
                         objective.have_warm ? &objective.warm_sites : nullptr);
  result.log_evidence = result.posterior.log_evidence;
  result.objective_evals = objective.evals;
  return result;
}

}  // namespace qp
