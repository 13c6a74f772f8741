#include "qp/predict.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <algorithm>
#include <cmath>

#include "qp/errors.hpp"
#include "qp/special_functions.hpp"

namespace qp {

namespace sf = qp::special;

LatentPredictor::LatentPredictor(const CovMatrix& k, const PosteriorState& posterior) {
  const int n = k.size();
  if (static_cast<int>(posterior.sites.size()) != n) {
    throw ValidationError("LatentPredictor: posterior/matrix size mismatch");
  }
  Eigen::VectorXd nu(n), tau(n);
  bool any_negative = false;
  for (int i = 0; i < n; ++i) {
    tau[i] = posterior.sites[i].precision();
    nu[i] = posterior.sites[i].natural_mean();
    any_negative |= tau[i] < 0.0;
  }
  if (!any_negative) {
    sqrt_tau_ = tau.cwiseSqrt();
    Eigen::MatrixXd b = sqrt_tau_.asDiagonal() * k.k * sqrt_tau_.asDiagonal();
    b.diagonal().array() += 1.0;
    chol_b_.compute(b);
    if (chol_b_.info() != Eigen::Success) {
      throw SingularMatrixError("LatentPredictor: Cholesky of B failed");
    }
    // alpha = (K + Sigma~)^{-1} mu~ = nu - sqrt(T) B^{-1} sqrt(T) K nu
    const Eigen::VectorXd knu = k.k * nu;
    alpha_ = nu - sqrt_tau_.asDiagonal() *
                      chol_b_.solve((sqrt_tau_.asDiagonal() * knu).eval());
    return;
  }
  // Anti-sites: materialize A = T (I + K T)^{-1} = (K + Sigma~)^{-1} densely.
  Eigen::MatrixXd m = k.k * tau.asDiagonal();
  m.diagonal().array() += 1.0;
  const Eigen::PartialPivLU<Eigen::MatrixXd> lu(m);
  Eigen::MatrixXd inv_m = lu.inverse();
  dense_a_ = tau.asDiagonal() * inv_m;
  dense_a_ = 0.5 * (dense_a_ + dense_a_.transpose()).eval();
  alpha_ = inv_m.transpose() * nu;  // (T K + I)^{-1} nu
}

LatentPrediction LatentPredictor::latent(const Eigen::VectorXd& k_star,
                                         double k_star_star) const {
  if (k_star.size() != alpha_.size()) {
    throw ValidationError("LatentPredictor::latent: k_star size mismatch");
  }
  LatentPrediction out;
  out.mean = k_star.dot(alpha_);
  if (dense_a_.size() == 0) {
    const Eigen::VectorXd v =
        chol_b_.matrixL().solve((sqrt_tau_.asDiagonal() * k_star).eval());
    out.var = k_star_star - v.squaredNorm();
  } else {
    out.var = k_star_star - k_star.dot(dense_a_ * k_star);
  }
  if (!(out.var > 0.0)) out.var = 1e-12;  // numerical floor
  return out;
}

Eigen::MatrixXd LatentPredictor::dense_inverse() const {
  if (dense_a_.size() != 0) return dense_a_;
  // A = sqrt(T) B^{-1} sqrt(T); exact also with vacuous sites (zero rows).
  const Eigen::Index n = sqrt_tau_.size();
  Eigen::MatrixXd inv_b = chol_b_.solve(Eigen::MatrixXd::Identity(n, n));
  return sqrt_tau_.asDiagonal() * inv_b * sqrt_tau_.asDiagonal();
}

std::optional<double> rank1_predictive_var(const Eigen::MatrixXd& a,
                                           const Eigen::VectorXd& k_star,
                                           double k_star_star, int i,
                                           double old_site_var, double new_site_var) {
  if (i < 0 || i >= a.rows()) throw ValidationError("rank1_predictive_var: bad index");
  const double base = k_star_star - k_star.dot(a * k_star);
  const double delta = new_site_var - old_site_var;
  if (delta == 0.0) return base;
  const double denom = 1.0 / delta + a(i, i);
  if (std::fabs(denom) < 1e-12) return std::nullopt;
  const double proj = k_star.dot(a.col(i));
  return base + proj * proj / denom;
}

double class_predictive_prob(const LatentPrediction& latent) {
  if (!(latent.var > 0.0)) throw ValidationError("class_predictive_prob: var <= 0");
  return sf::std_normal_cdf(latent.mean / std::sqrt(1.0 + latent.var));
}

double class_predictive_log_prob(const LatentPrediction& latent, int y) {
  Observation::binary_label(y);
  if (!(latent.var > 0.0)) throw ValidationError("class_predictive_log_prob: var <= 0");
  return sf::log_std_normal_cdf(y * latent.mean / std::sqrt(1.0 + latent.var));
}

int class_label(double prob_positive) { return prob_positive >= 0.5 ? 1 : -1; }

NbParams count_predictive(const LatentPrediction& latent) {
  if (!(latent.var > 0.0)) throw ValidationError("count_predictive: var <= 0");
  const double m2 = latent.mean * latent.mean;
  const double v = latent.var;
  NbParams nb;
  nb.k = (m2 + v) * (m2 + v) / (2.0 * v * (2.0 * m2 + v));
  nb.c = 2.0 * v * (2.0 * m2 + v) / (m2 + v);
  return nb;
}

double nb_log_pmf(const NbParams& nb, int y) {
  if (y < 0) throw ValidationError("nb_log_pmf: negative count");
  // log NB(y | k, p = c/(1+c)) = y log c - (k+y) log(1+c) + lgamma(k+y)
  //                              - lgamma(y+1) - lgamma(k)
  return y * std::log(nb.c) - (nb.k + y) * std::log1p(nb.c) +
         std::lgamma(nb.k + y) - std::lgamma(y + 1.0) - std::lgamma(nb.k);
}

int nb_mode(const NbParams& nb) {
  if (nb.k <= 1.0) return 0;
  return static_cast<int>(std::floor(nb.c * (nb.k - 1.0)));
}

Metrics evaluate_binary(const std::vector<int>& truth,
                        const std::vector<LatentPrediction>& latents) {
  if (truth.size() != latents.size() || truth.empty()) {
    throw ValidationError("evaluate_binary: length mismatch or empty");
  }
  const double m = static_cast<double>(truth.size());
  double errors = 0.0, nll = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    Observation::binary_label(truth[i]);
    const int label = class_label(class_predictive_prob(latents[i]));
    errors += std::abs(truth[i] - label) / 2.0;
    nll -= class_predictive_log_prob(latents[i], truth[i]);
  }
  return {errors / m, nll / m};
}

Metrics evaluate_count(const std::vector<int>& truth,
                       const std::vector<LatentPrediction>& latents) {
  if (truth.size() != latents.size() || truth.empty()) {
    throw ValidationError("evaluate_count: length mismatch or empty");
  }
  const double m = static_cast<double>(truth.size());
  double errors = 0.0, nll = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    Observation::count(truth[i]);
    const NbParams nb = count_predictive(latents[i]);
    errors += std::abs(truth[i] - nb_mode(nb));
    nll -= nb_log_pmf(nb, truth[i]);
  }
  return {errors / m, nll / m};
}

}  // namespace qp
