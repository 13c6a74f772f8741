#include "qp/kernel.hpp"

#include <cmath>

#include "qp/errors.hpp"

namespace qp {

void KernelParams::validate() const {
  if (!(gamma > 0.0) || !std::isfinite(gamma)) {
    throw ValidationError("KernelParams: gamma must be positive and finite");
  }
  if (lengthscales.size() == 0) {
    throw ValidationError("KernelParams: lengthscales must be non-empty");
  }
  for (Eigen::Index i = 0; i < lengthscales.size(); ++i) {
    if (!(lengthscales[i] > 0.0) || !std::isfinite(lengthscales[i])) {
      throw ValidationError("KernelParams: lengthscales must be positive and finite");
    }
  }
}

Eigen::VectorXd KernelParams::to_log() const {
  Eigen::VectorXd v(1 + lengthscales.size());
  v[0] = std::log(gamma);
  for (Eigen::Index i = 0; i < lengthscales.size(); ++i) v[i + 1] = std::log(lengthscales[i]);
  return v;
}

KernelParams KernelParams::from_log(const Eigen::VectorXd& log_params, int dim) {
  if (log_params.size() != dim + 1) {
    throw ValidationError("KernelParams::from_log: wrong parameter count");
  }
  KernelParams p;
  p.gamma = std::exp(log_params[0]);
  p.lengthscales = log_params.tail(dim).array().exp();
  return p;
}

double kernel_eval(const Eigen::Ref<const Eigen::VectorXd>& x,
                   const Eigen::Ref<const Eigen::VectorXd>& x2,
                   const KernelParams& params) {
  if (x.size() != x2.size() || x.size() != params.lengthscales.size()) {
    throw ValidationError("kernel_eval: dimension mismatch");
  }
  double s = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double d = (x[i] - x2[i]) / params.lengthscales[i];
    s += d * d;
  }
  return params.gamma * std::exp(-0.5 * s);
}

CovMatrix build_cov(const Eigen::MatrixXd& x, const KernelParams& params) {
  params.validate();
  const Eigen::Index n = x.rows();
  if (n < 1) throw ValidationError("build_cov: need at least one input row");
  if (x.cols() != params.lengthscales.size()) {
    throw ValidationError("build_cov: input dimension mismatch");
  }
  // Scale columns once, then use squared distances.
  Eigen::MatrixXd xs = x.array().rowwise() / params.lengthscales.transpose().array();
  CovMatrix cov;
  cov.k.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    cov.k(i, i) = params.gamma;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double d2 = (xs.row(i) - xs.row(j)).squaredNorm();
      const double v = params.gamma * std::exp(-0.5 * d2);
      cov.k(i, j) = v;
      cov.k(j, i) = v;
    }
  }
  return cov;
}

Eigen::MatrixXd build_cross_cov(const Eigen::MatrixXd& x,
                                const Eigen::MatrixXd& x_star,
                                const KernelParams& params) {
  params.validate();
  if (x.cols() != x_star.cols() || x.cols() != params.lengthscales.size()) {
    throw ValidationError("build_cross_cov: input dimension mismatch");
  }
  Eigen::MatrixXd xs = x.array().rowwise() / params.lengthscales.transpose().array();
  Eigen::MatrixXd xt = x_star.array().rowwise() / params.lengthscales.transpose().array();
  Eigen::MatrixXd out(x.rows(), x_star.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x_star.rows(); ++j) {
      out(i, j) = params.gamma * std::exp(-0.5 * (xs.row(i) - xt.row(j)).squaredNorm());
    }
  }
  return out;
}

Eigen::LLT<Eigen::MatrixXd> cholesky_with_jitter(CovMatrix& cov, double gamma) {
  Eigen::LLT<Eigen::MatrixXd> llt(cov.k);
  if (llt.info() == Eigen::Success) {
    cov.jitter = 0.0;
    return llt;
  }
  for (double jitter = 1e-10 * gamma; jitter <= 1e-6 * gamma * (1.0 + 1e-12);
       jitter *= 10.0) {
    Eigen::MatrixXd kj = cov.k;
    kj.diagonal().array() += jitter;
    llt.compute(kj);
    if (llt.info() == Eigen::Success) {
      cov.jitter = jitter;
      cov.k = kj;
      return llt;
    }
  }
  throw SingularMatrixError("cholesky_with_jitter: factorization failed at max jitter");
}

}  // namespace qp
