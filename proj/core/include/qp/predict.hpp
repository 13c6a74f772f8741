#ifndef QPROP_PREDICT_HPP
#define QPROP_PREDICT_HPP

#include <Eigen/Core>
#include <optional>
#include <vector>

#include "qp/inference.hpp"
#include "qp/kernel.hpp"
#include "qp/likelihoods.hpp"

namespace qp {

struct LatentPrediction {
  double mean = 0.0;
  double var = 1.0;
};

// Precomputed solves over (K + Sigma~) for batch latent prediction.
class LatentPredictor {
 public:
  LatentPredictor(const CovMatrix& k, const PosteriorState& posterior);

  // k_star: covariances to the training inputs; k_star_star: prior variance.
  LatentPrediction latent(const Eigen::VectorXd& k_star, double k_star_star) const;

  // Dense A = (K + Sigma~)^{-1}, materialized on demand (rank-1 utilities).
  Eigen::MatrixXd dense_inverse() const;

 private:
  Eigen::VectorXd sqrt_tau_;
  Eigen::VectorXd alpha_;  // (K + Sigma~)^{-1} mu~
  Eigen::LLT<Eigen::MatrixXd> chol_b_;
  Eigen::MatrixXd dense_a_;  // set instead of chol_b_ when a site precision < 0
};

// Predictive variance after replacing site i's variance, without a fresh
// factorization (rank-1 correction over A = (K + Sigma~)^{-1}). Returns
// nullopt when the correction denominator degenerates and a full recompute is
// required.
std::optional<double> rank1_predictive_var(const Eigen::MatrixXd& a,
                                           const Eigen::VectorXd& k_star,
                                           double k_star_star, int i,
                                           double old_site_var, double new_site_var);

// Probit class probability p(y*=+1) = Phi(mean / sqrt(1 + var)).
double class_predictive_prob(const LatentPrediction& latent);
double class_predictive_log_prob(const LatentPrediction& latent, int y);

// Threshold at 1/2; exact ties go to +1.
int class_label(double prob_positive);

// Count predictive: Gamma(k, c) moment-matched to g = f^2, giving a negative
// binomial NB(y | k, c/(1+c)) over counts.
struct NbParams {
  double k = 1.0;
  double c = 1.0;
};

NbParams count_predictive(const LatentPrediction& latent);
double nb_log_pmf(const NbParams& nb, int y);
int nb_mode(const NbParams& nb);

struct Metrics {
  double te = 0.0;
  double ntll = 0.0;
};

// Classification: TE = sum |y - yhat| / 2 / m over labels in {-1, +1};
// counts: TE = sum |y - yhat| / m. NTLL = -mean log q(y* | x*).
Metrics evaluate_binary(const std::vector<int>& truth,
                        const std::vector<LatentPrediction>& latents);
Metrics evaluate_count(const std::vector<int>& truth,
                       const std::vector<LatentPrediction>& latents);

}  // namespace qp

#endif
