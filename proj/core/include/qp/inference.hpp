#ifndef QPROP_INFERENCE_HPP
#define QPROP_INFERENCE_HPP

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "qp/kernel.hpp"
#include "qp/likelihoods.hpp"
#include "qp/lookup_table.hpp"
#include "qp/projection.hpp"

namespace qp {

// One Gaussian site t_i(f) = Z~ N(f | mu_t, var_t). var_t == +inf encodes a
// vacuous (uninitialized) site. Non-log-concave likelihoods (the square-link
// Poisson) legitimately produce sites with negative precision, stored here as
// var_t < 0; the update clips only when the posterior would lose positive
// definiteness.
struct SiteParams {
  double log_zt = 0.0;
  double mu_t = 0.0;
  double var_t = std::numeric_limits<double>::infinity();

  bool vacuous() const { return std::isinf(var_t); }
  double precision() const { return vacuous() ? 0.0 : 1.0 / var_t; }
  double natural_mean() const { return vacuous() ? 0.0 : mu_t / var_t; }

  static SiteParams from_natural(double tau, double nu, double log_zt = 0.0);
};

enum class Method { ep, qp };
enum class SigmaStarSource { quadrature, table };
enum class UpdateOrder { index, random };

struct FitConfig {
  Method method = Method::ep;
  SigmaStarSource sigma_source = SigmaStarSource::quadrature;
  const SigmaLookupTable* table = nullptr;  // required when sigma_source == table
  double inner_tol = 1e-6;                  // RMS change of (mu_t, sd_t) per sweep
  int max_sweeps = 200;
  double damping = 0.9;
  UpdateOrder order = UpdateOrder::index;
  std::uint64_t order_seed = 0;
  W2Options w2;
};

struct FitDiagnostics {
  int sweeps = 0;
  bool converged = false;
  std::int64_t skipped_cavities = 0;   // nonpositive cavity variance
  std::int64_t clipped_sites = 0;      // site precision floored
  std::int64_t table_hits = 0;
  std::int64_t ep_fallbacks = 0;       // out-of-table queries
  std::int64_t direct_fallbacks = 0;   // NaN table corners
  std::int64_t moment_quadratures = 0; // closed-form moments fell back
  std::int64_t cdf_quadratures = 0;    // closed-form tilted CDF fell back
  std::int64_t ordering_violations = 0;  // sigma*_qp^2 > sigma*_ep^2 + 1e-9
};

struct PosteriorState {
  Eigen::VectorXd mu;
  Eigen::MatrixXd cov;
  std::vector<SiteParams> sites;
  double log_evidence = 0.0;
  FitDiagnostics diagnostics;
};

// Cavity by precision subtraction. Returns nullopt when the cavity variance
// would be nonpositive (caller skips the site update).
std::optional<CavityParams> cavity(double marginal_mean, double marginal_var,
                                   const SiteParams& site);

struct SiteUpdateResult {
  SiteParams site;
  bool clipped = false;
};

// New site from the projected Gaussian against the cavity, damped in natural
// parameters. log Z~ is set so the site integrates consistently with the
// tilted normalizer.
SiteUpdateResult site_update(const CavityParams& cav, const ProjectedGaussian& projected,
                             double damping, const SiteParams& old_site,
                             double tilted_log_z);

// Posterior (mu, Sigma, log evidence) from prior covariance and sites, through
// the numerically stable (K + Sigma~) route.
PosteriorState recompute_posterior(const CovMatrix& k, const std::vector<SiteParams>& sites);

// init_sites, when given, warm-starts the sweep (used by the hyperparameter
// loop); pass nullptr for a cold start from vacuous sites.
PosteriorState fit(const CovMatrix& k, const std::vector<int>& y, const Likelihood& lik,
                   const FitConfig& config,
                   const std::vector<SiteParams>* init_sites = nullptr);

struct HyperOptConfig {
  int max_iters = 1000;        // quasi-Newton iteration cap
  double rel_f_tol = 1e-9;     // relative function-value tolerance
  double fd_step = 1e-5;       // central-difference step in log space
  double log_lo = -8.0;        // box bounds for all log parameters
  double log_hi = 8.0;
  int lbfgs_memory = 10;
};

struct HyperOptResult {
  KernelParams params;
  PosteriorState posterior;
  double log_evidence = 0.0;
  int iterations = 0;
  int objective_evals = 0;
  bool converged = false;  // false: iteration cap hit, best iterate returned
};

// Maximizes the approximate log evidence over log(gamma), log(lengthscales)
// with a bounded L-BFGS using central finite-difference gradients, refitting
// the sites at every objective evaluation.
HyperOptResult optimize_hypers(const Eigen::MatrixXd& x, const std::vector<int>& y,
                               const Likelihood& lik, const KernelParams& init,
                               const FitConfig& fit_config,
                               const HyperOptConfig& opt_config = {});

}  // namespace qp

#endif
