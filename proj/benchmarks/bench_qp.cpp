#include <benchmark/benchmark.h>

#include <Eigen/Core>
#include <cmath>
#include <random>

#include "qp/inference.hpp"
#include "qp/kernel.hpp"
#include "qp/likelihoods.hpp"
#include "qp/lookup_table.hpp"
#include "qp/predict.hpp"
#include "qp/projection.hpp"
#include "qp/special_functions.hpp"

namespace {

namespace sf = qp::special;

void BM_ErfInv(benchmark::State& state) {
  double p = -0.999;
  for (auto _ : state) {
    benchmark::DoNotOptimize(sf::erf_inv(p));
    p += 1.998e-4;
    if (p >= 0.999) p = -0.999;
  }
}
BENCHMARK(BM_ErfInv);

void BM_OwenT(benchmark::State& state) {
  double h = -4.0, a = 0.1;
  for (auto _ : state) {
    benchmark::DoNotOptimize(sf::owen_t(h, a));
    h += 8.7e-3;
    a += 2.1e-2;
    if (h > 4.0) h = -4.0;
    if (a > 8.0) a = 0.1;
  }
}
BENCHMARK(BM_OwenT);

void BM_ProbitTiltedMoments(benchmark::State& state) {
  const qp::CavityParams cav{0.7, 2.1};
  for (auto _ : state) {
    benchmark::DoNotOptimize(qp::probit_tilted_moments(cav, 1));
  }
}
BENCHMARK(BM_ProbitTiltedMoments);

void BM_ProbitTiltedCdf(benchmark::State& state) {
  const qp::CavityParams cav{0.7, 2.1};
  double x = -4.0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(qp::probit_tilted_cdf(x, cav, 1));
    x += 1.3e-2;
    if (x > 5.0) x = -4.0;
  }
}
BENCHMARK(BM_ProbitTiltedCdf);

void BM_PoissonTiltedCdf(benchmark::State& state) {
  const qp::CavityParams cav{1.2, 0.8};
  double x = -2.0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(qp::poisson_sq_tilted_cdf(x, cav, 3));
    x += 1.1e-2;
    if (x > 4.0) x = -2.0;
  }
}
BENCHMARK(BM_PoissonTiltedCdf);

void BM_ProjectW2Probit(benchmark::State& state) {
  const qp::ProbitLikelihood lik;
  const qp::CavityParams cav{0.7, 2.1};
  const auto tilted = lik.tilted_moments(cav, 1);
  const auto cdf = [&](double x) { return lik.tilted_cdf(x, cav, 1).value; };
  qp::W2Options opts;
  opts.scale_hint = std::sqrt(tilted.var);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        qp::project_w2(cdf, tilted.mean, lik.support_hint(cav, 1), opts));
  }
}
BENCHMARK(BM_ProjectW2Probit);

void BM_InterpSigma(benchmark::State& state) {
  const qp::ProbitLikelihood lik;
  qp::GridSpec grid;
  grid.mu = qp::GridAxis{-5.0, 5.0, 201};
  grid.log10_sigma = qp::GridAxis{-0.8, 0.8, 65};
  const auto table = qp::precompute_table(lik, {-1, 1}, grid, 4);
  double mu = -4.9;
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        qp::interp_sigma(table, lik, qp::CavityParams{mu, 1.21}, 1));
    mu += 9.7e-3;
    if (mu > 4.9) mu = -4.9;
  }
}
BENCHMARK(BM_InterpSigma);

qp::CovMatrix bench_kernel(int n) {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  Eigen::MatrixXd x(n, 2);
  for (int i = 0; i < n; ++i) {
    x(i, 0) = u(rng);
    x(i, 1) = u(rng);
  }
  qp::KernelParams p;
  p.gamma = 1.0;
  p.lengthscales = Eigen::VectorXd::Constant(2, 1.0);
  return qp::build_cov(x, p);
}

void BM_EpFit(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const qp::CovMatrix k = bench_kernel(n);
  std::vector<int> y(n);
  for (int i = 0; i < n; ++i) y[i] = i % 2 == 0 ? 1 : -1;
  qp::FitConfig cfg;
  for (auto _ : state) {
    benchmark::DoNotOptimize(qp::fit(k, y, qp::ProbitLikelihood{}, cfg));
  }
}
BENCHMARK(BM_EpFit)->Arg(64)->Arg(128);

void BM_QpFitQuadrature(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const qp::CovMatrix k = bench_kernel(n);
  std::vector<int> y(n);
  for (int i = 0; i < n; ++i) y[i] = i % 2 == 0 ? 1 : -1;
  qp::FitConfig cfg;
  cfg.method = qp::Method::qp;
  for (auto _ : state) {
    benchmark::DoNotOptimize(qp::fit(k, y, qp::ProbitLikelihood{}, cfg));
  }
}
BENCHMARK(BM_QpFitQuadrature)->Arg(64)->Arg(128);

}  // namespace

BENCHMARK_MAIN();
