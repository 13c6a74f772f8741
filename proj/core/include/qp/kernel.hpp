#ifndef QPROP_KERNEL_HPP
#define QPROP_KERNEL_HPP

#include <Eigen/Cholesky>
#include <Eigen/Core>

namespace qp {

// Squared-exponential (ARD) kernel hyperparameters:
//   k(x, x') = gamma * exp(-sum_i (x_i - x'_i)^2 / (2 lengthscales_i^2))
struct KernelParams {
  double gamma = 1.0;
  Eigen::VectorXd lengthscales;

  // Throws ValidationError unless gamma and every lengthscale are positive
  // and finite.
  void validate() const;

  Eigen::VectorXd to_log() const;
  static KernelParams from_log(const Eigen::VectorXd& log_params, int dim);
};

double kernel_eval(const Eigen::Ref<const Eigen::VectorXd>& x,
                   const Eigen::Ref<const Eigen::VectorXd>& x2,
                   const KernelParams& params);

struct CovMatrix {
  Eigen::MatrixXd k;
  double jitter = 0.0;  // magnitude actually added to the diagonal, 0 if none

  int size() const { return static_cast<int>(k.rows()); }
};

// Dense covariance of the rows of X (n x d). Symmetric, diagonal == gamma.
CovMatrix build_cov(const Eigen::MatrixXd& x, const KernelParams& params);

// Cross covariance between rows of X (n x d) and X* (m x d); returns n x m.
Eigen::MatrixXd build_cross_cov(const Eigen::MatrixXd& x,
                                const Eigen::MatrixXd& x_star,
                                const KernelParams& params);

// Cholesky of cov.k + jitter*I. Jitter starts at 1e-10 * gamma and escalates
// by x10 up to 1e-6 * gamma, only if the plain factorization fails; the
// magnitude used is recorded in cov.jitter. Throws SingularMatrixError if the
// factorization still fails at max jitter.
Eigen::LLT<Eigen::MatrixXd> cholesky_with_jitter(CovMatrix& cov, double gamma);

}  // namespace qp

#endif
