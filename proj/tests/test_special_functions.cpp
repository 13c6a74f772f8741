#include <doctest.h>

#include <cmath>

#include "qp/errors.hpp"
#include "qp/special_functions.hpp"
#include "support/oracles.hpp"
#include "support/tilted_oracles.hpp"

namespace sf = qp::special;

TEST_CASE("erf_inv basics") {
  CHECK(sf::erf_inv(0.0) == 0.0);
  CHECK(sf::erf_inv(0.5) == doctest::Approx(0.47693627620446987).epsilon(1e-14));
  // round-trip identity at a fixed point
  CHECK(sf::erf_inv(std::erf(1.3)) == doctest::Approx(1.3).epsilon(1e-12));
  CHECK_THROWS_AS(sf::erf_inv(1.0), qp::ValidationError);
  CHECK_THROWS_AS(sf::erf_inv(-1.0), qp::ValidationError);
  CHECK_THROWS_AS(sf::erf_inv(std::nan("")), qp::ValidationError);
}

TEST_CASE("erf_inv round trip and odd symmetry over 1e4 samples") {
  qptest::Rng rng(61);
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const double p = rng.uniform(-1.0 + 1e-9, 1.0 - 1e-9);
    const double x = sf::erf_inv(p);
    worst = std::max(worst, std::fabs(std::erf(x) - p));
    CHECK(sf::erf_inv(-p) == doctest::Approx(-x).epsilon(1e-15));
  }
  CHECK(worst <= 1e-12);
}

TEST_CASE("owen_t special values") {
  CHECK(sf::owen_t(0.0, 1.0) == doctest::Approx(0.125).epsilon(1e-15));
  CHECK(sf::owen_t(1.7, 0.0) == 0.0);
  CHECK(sf::owen_t(0.5, 2.0) == doctest::Approx(0.14158060365397839).epsilon(1e-12));
  CHECK_THROWS_AS(sf::owen_t(std::nan(""), 1.0), qp::ValidationError);
}

TEST_CASE("owen_t symmetries hold to 1e-14") {
  qptest::Rng rng(17);
  for (int i = 0; i < 500; ++i) {
    const double h = rng.uniform(-6.0, 6.0);
    const double a = rng.uniform(-10.0, 10.0);
    CHECK(std::fabs(sf::owen_t(h, a) - sf::owen_t(-h, a)) <= 1e-14);
    CHECK(std::fabs(sf::owen_t(h, -a) + sf::owen_t(h, a)) <= 1e-14);
    CHECK(std::fabs(sf::owen_t(0.0, a) - std::atan(a) / (2.0 * 3.14159265358979323846)) <=
          1e-14);
  }
}

TEST_CASE("owen_t matches quadrature on the 50x50 grid") {
  double worst = 0.0;
  for (int i = 0; i < 50; ++i) {
    const double h = -5.0 + 10.0 * i / 49.0;
    for (int j = 0; j < 50; ++j) {
      const double a = -10.0 + 20.0 * j / 49.0;
      const auto integrand = [h](double x) {
        return std::exp(-0.5 * (1.0 + x * x) * h * h) / (1.0 + x * x);
      };
      const double lo = std::min(0.0, a), hi = std::max(0.0, a);
      double ref = qptest::integrate(integrand, lo, hi, 1e-13) /
                   (2.0 * 3.14159265358979323846);
      if (a < 0.0) ref = -ref;
      worst = std::max(worst, std::fabs(sf::owen_t(h, a) - ref));
    }
  }
  CHECK(worst <= 1e-10);
}

TEST_CASE("gamma_upper closed forms and quadrature") {
  CHECK(sf::gamma_upper(1.0, 0.0) == doctest::Approx(1.0).epsilon(1e-15));
  for (double z : {0.1, 0.9, 3.7, 12.0}) {
    CHECK(sf::gamma_upper(1.0, z) == doctest::Approx(std::exp(-z)).epsilon(1e-13));
  }
  CHECK(sf::gamma_upper(2.5, 1.3) == doctest::Approx(1.0121136007032034).epsilon(1e-13));
  // direct quadrature reference for a handful of (a, z)
  qptest::Rng rng(7);
  for (int i = 0; i < 20; ++i) {
    const double a = rng.uniform(0.2, 8.0);
    const double z = rng.uniform(0.0, 9.0);
    const auto integrand = [a](double t) { return std::pow(t, a - 1.0) * std::exp(-t); };
    const double ref = qptest::integrate(integrand, z == 0.0 ? 1e-280 : z,
                                         z + 80.0 + 10.0 * a, 1e-13);
    CHECK(sf::gamma_upper(a, z) == doctest::Approx(ref).epsilon(1e-11));
  }
  CHECK_THROWS_AS(sf::gamma_upper(0.0, 1.0), qp::ValidationError);
  CHECK_THROWS_AS(sf::gamma_upper(1.0, -0.5), qp::ValidationError);
}

TEST_CASE("gamma upper plus lower equals Gamma(a)") {
  qptest::Rng rng(11);
  for (int i = 0; i < 200; ++i) {
    const double a = rng.uniform(0.1, 20.0);
    const double z = rng.uniform(0.0, 30.0);
    const double total = sf::gamma_upper(a, z) + sf::gamma_lower(a, z);
    CHECK(total == doctest::Approx(std::tgamma(a)).epsilon(1e-12));
  }
}

TEST_CASE("hyp1f1 terminating series") {
  CHECK(sf::hyp1f1_terminating(0, 0.5, -3.1) == 1.0);
  for (double x : {-2.0, -0.3, 0.7}) {
    CHECK(sf::hyp1f1_terminating(1, 0.5, x) ==
          doctest::Approx(1.0 - 2.0 * x).epsilon(1e-14));
  }
  CHECK(sf::hyp1f1_terminating(3, 0.5, -1.7) ==
        doctest::Approx(25.380266666666667).epsilon(1e-14));
  // term-by-term with exact rational Pochhammer ratios: for y=3, b=1/2 the
  // coefficients (-3)_k / (1/2)_k / k! are -6, 4, -8/15 at k=1..3
  {
    const double x = -1.7;
    const double sum = 1.0 - 6.0 * x + 4.0 * x * x - (8.0 / 15.0) * x * x * x;
    CHECK(sf::hyp1f1_terminating(3, 0.5, -1.7) == doctest::Approx(sum).epsilon(1e-15));
  }
  CHECK_THROWS_AS(sf::hyp1f1_terminating(3, -1.0, 0.5), qp::ValidationError);
  CHECK_THROWS_AS(sf::hyp1f1_terminating(-1, 0.5, 0.5), qp::ValidationError);
}

TEST_CASE("hyp1f1 consistent with the tilted normalizer integral") {
  // Z = alpha^{y+1/2} Gamma(y+1/2) 1F1(-y; 1/2; -h/(2 var)) / (sqrt(2 pi var) y! e^h)
  // against direct quadrature of f^{2y} e^{-f^2} N(f | mu, var).
  qptest::Rng rng(23);
  for (int i = 0; i < 25; ++i) {
    const int y = rng.uniform_int(0, 10);
    const double var = rng.uniform(0.1, 2.0);
    const double x = rng.uniform(-20.0, -1e-3);
    const double mu = std::sqrt(-x * 2.0 * var * (1.0 + 2.0 * var));
    const double alpha = 2.0 * var / (1.0 + 2.0 * var);
    const double h = mu * mu / (1.0 + 2.0 * var);
    double log_fact = 0.0;
    for (int k = 2; k <= y; ++k) log_fact += std::log(static_cast<double>(k));
    // fold the un-scaling into the integrand so the quadrature works at O(1)
    const double log_scale = log_fact + h +
                             0.5 * std::log(2.0 * 3.14159265358979323846 * var) -
                             (y + 0.5) * std::log(alpha) - std::lgamma(y + 0.5);
    const auto integrand = [&](double f) {
      return qptest::poisson_sq_lik(f, y) * qptest::phi((f - mu) / std::sqrt(var)) /
             std::sqrt(var) * std::exp(log_scale);
    };
    const double lo = qptest::poisson_support_lo(mu, var, y);
    const double hi = qptest::poisson_support_hi(mu, var, y);
    const double coarse = qptest::integrate(integrand, lo, hi, 1e-4);
    const double f11_ref =
        coarse * qptest::integrate([&](double f) { return integrand(f) / coarse; }, lo,
                                   hi, 1e-12);
    CHECK(sf::hyp1f1_terminating(y, 0.5, x) == doctest::Approx(f11_ref).epsilon(1e-9));
  }
}

TEST_CASE("standard normal pdf and cdf") {
  CHECK(sf::std_normal_cdf(0.0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(sf::std_normal_cdf(1.0) == doctest::Approx(0.84134474606854295).epsilon(1e-15));
  CHECK(sf::std_normal_cdf(45.0) == 1.0);
  CHECK(sf::std_normal_cdf(-45.0) == 0.0);
  CHECK(sf::std_normal_pdf(0.0) == doctest::Approx(0.39894228040143268).epsilon(1e-15));
}

TEST_CASE("log normal cdf is stable into the far tail") {
  CHECK(sf::log_std_normal_cdf(-10.0) ==
        doctest::Approx(-53.2312851505124706).epsilon(1e-13));
  CHECK(sf::log_std_normal_cdf(-25.0) ==
        doctest::Approx(-316.639408008020259).epsilon(1e-13));
  CHECK(sf::log_std_normal_cdf(-37.5) ==
        doctest::Approx(-707.668989317507191).epsilon(1e-13));
  CHECK(sf::log_std_normal_cdf(-40.0) ==
        doctest::Approx(-804.608442013753788).epsilon(1e-13));
  // agrees with the direct form where erfc has full precision
  for (double x = -30.0; x <= 5.0; x += 0.37) {
    const double direct = std::log(0.5 * std::erfc(-x / 1.4142135623730950488));
    CHECK(sf::log_std_normal_cdf(x) == doctest::Approx(direct).epsilon(1e-12));
  }
}

TEST_CASE("hazard ratio matches pdf/cdf where both are stable") {
  for (double x = -15.0; x <= 3.0; x += 0.61) {
    const double direct = sf::std_normal_pdf(x) / sf::std_normal_cdf(x);
    CHECK(sf::std_normal_hazard_neg(x) == doctest::Approx(direct).epsilon(1e-12));
  }
  // deep tail: ratio ~ |x| + 1/|x|
  const double r = sf::std_normal_hazard_neg(-50.0);
  CHECK(r == doctest::Approx(50.0 + 1.0 / 50.0).epsilon(1e-3));
}
