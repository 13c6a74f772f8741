#include "qp/special_functions.hpp"

#include <cmath>
#include <string>

#include "qp/errors.hpp"

namespace qp::special {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kTwoPi = 2.0 * kPi;
constexpr double kSqrt2 = 1.41421356237309504880;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
constexpr double kTwoOverSqrtPi = 1.12837916709551257390;

void require_finite(double x, const char* name) {
  if (!std::isfinite(x)) {
    throw qp::ValidationError(std::string(name) + " must be finite");
  }
}

// Rational Chebyshev approximations for inverse erf from Blair, Edwards and
// Johnson, Math. Comp. 30 (1976). Max relative error ~4.5e-8; used only as
// the starting point for Newton refinement below.
double erf_inv_estimate(double x) {
  const double ax = std::fabs(x);
  if (ax <= 0.75) {
    static const double p[] = {-13.0959967422, 26.785225760, -9.289057635};
    static const double q[] = {-12.0749426297, 30.960614529, -17.149977991, 1.0};
    const double t = x * x - 0.75 * 0.75;
    return x * (p[0] + t * (p[1] + t * p[2])) /
           (q[0] + t * (q[1] + t * (q[2] + t * q[3])));
  }
  if (ax <= 0.9375) {
    static const double p[] = {-0.12402565221, 1.0688059574, -1.9594556078, 0.4230581357};
    static const double q[] = {-0.08827697997, 0.8900743359, -2.1757031196, 1.0};
    const double t = x * x - 0.9375 * 0.9375;
    return x * (p[0] + t * (p[1] + t * (p[2] + t * p[3]))) /
           (q[0] + t * (q[1] + t * (q[2] + t * q[3])));
  }
  static const double p[] = {0.1550470003116, 1.382719649631, 0.690969348887,
                             -1.128081391617, 0.680544246825, -0.16444156791};
  static const double q[] = {0.155024849822, 1.385228141995, 1.0};
  const double t = 1.0 / std::sqrt(-std::log(1.0 - ax));
  return std::copysign(
      (p[0] / t + p[1] + t * (p[2] + t * (p[3] + t * (p[4] + t * p[5])))) /
          (q[0] + t * (q[1] + t * q[2])),
      x);
}

// Owen's T on the reduced domain h > 0, 0 < a <= 1. Term-wise integration of
// the expanded Gaussian factor: T = e^(-hh)/(2 pi) sum_m d_m I_m with
// hh = h^2/2, d_m = (-hh)^m / m!, and I_m = Int_0^a x^(2m)/(1+x^2) dx obtained
// from I_m = a^(2m-1)/(2m-1) - I_{m-1}, I_0 = atan(a). The e^(-hh) prefactor
// cancels the peak term growth, so absolute accuracy stays near 1e-16.
double owen_t_series(double h, double a) {
  const double hh = 0.5 * h * h;
  double integral = std::atan(a);  // I_m
  double d = 1.0;                  // d_m
  double sum = integral;
  double apow = 1.0 / a;           // a^(2m-1)
  const double a2 = a * a;
  for (int m = 1; m < 500; ++m) {
    apow *= a2;
    integral = apow / (2.0 * m - 1.0) - integral;
    d *= -hh / m;
    sum += d * integral;
    if (m > hh && std::fabs(d) < 1e-19) break;
  }
  return std::exp(-hh) * sum / kTwoPi;
}

double owen_t_reduced(double h, double a) {
  // h >= 0, a >= 0 here.
  if (a == 0.0) return 0.0;
  if (h == 0.0) return std::atan(a) / kTwoPi;
  if (h >= 10.0) return 0.0;  // T(h,a) <= e^(-h^2/2) atan(a) / (2 pi) < 2e-23
  if (a <= 1.0) return owen_t_series(h, a);
  // T(h,a) = Phi(h)/2 + Phi(ah)/2 - Phi(h) Phi(ah) - T(ah, 1/a)   (a > 0)
  const double ah = a * h;
  const double ph = std_normal_cdf(h);
  const double pah = std_normal_cdf(ah);
  return 0.5 * ph + 0.5 * pah - ph * pah - owen_t_reduced(ah, 1.0 / a);
}

}  // namespace

double erf_inv(double p) {
  if (std::isnan(p)) throw qp::ValidationError("erf_inv: NaN argument");
  if (!(std::fabs(p) < 1.0)) {
    throw qp::ValidationError("erf_inv: argument must satisfy |p| < 1");
  }
  if (p == 0.0) return 0.0;
  double x = erf_inv_estimate(p);
  // Two Newton steps: x -= (erf(x) - p) / erf'(x), erf'(x) = 2/sqrt(pi) e^(-x^2).
  for (int i = 0; i < 2; ++i) {
    const double err = std::erf(x) - p;
    x -= err / (kTwoOverSqrtPi * std::exp(-x * x));
  }
  return x;
}

double owen_t(double h, double a) {
  require_finite(h, "owen_t: h");
  if (std::isnan(a)) throw qp::ValidationError("owen_t: a is NaN");
  // T(-h, a) = T(h, a); T(h, -a) = -T(h, a). Infinite a is allowed as a limit.
  const double sign = a < 0.0 ? -1.0 : 1.0;
  const double aa = std::fabs(a);
  const double hh = std::fabs(h);
  if (std::isinf(aa)) {
    // T(h, inf) = Phi(-|h|) / 2
    return sign * 0.5 * std_normal_cdf(-hh);
  }
  return sign * owen_t_reduced(hh, aa);
}

double gamma_upper(double a, double z) {
  require_finite(a, "gamma_upper: a");
  require_finite(z, "gamma_upper: z");
  if (a <= 0.0) throw qp::ValidationError("gamma_upper: requires a > 0");
  if (z < 0.0) throw qp::ValidationError("gamma_upper: requires z >= 0");
  if (z == 0.0) return std::tgamma(a);

  const double log_prefix = a * std::log(z) - z - std::lgamma(a);
  if (z < a + 1.0) {
    // Regularized lower series P(a,z), then Gamma(a,z) = Gamma(a) (1 - P).
    double term = 1.0 / a;
    double sum = term;
    for (int n = 1; n < 1000; ++n) {
      term *= z / (a + n);
      sum += term;
      if (term < sum * 1e-17) break;
    }
    const double p_reg = sum * std::exp(log_prefix);
    return std::tgamma(a) * (1.0 - p_reg);
  }
  // Continued fraction for Q(a,z) (modified Lentz).
  constexpr double tiny = 1e-300;
  double b = z + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double f = d;
  for (int i = 1; i < 1000; ++i) {
    const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    f *= delta;
    if (std::fabs(delta - 1.0) < 1e-16) break;
  }
  const double q_reg = std::exp(log_prefix) * f;
  return std::tgamma(a) * q_reg;
}

double gamma_lower(double a, double z) {
  return std::tgamma(a) - gamma_upper(a, z);
}

double hyp1f1_terminating(int y, double b, double x) {
  if (y < 0) throw qp::ValidationError("hyp1f1_terminating: requires y >= 0");
  require_finite(b, "hyp1f1_terminating: b");
  require_finite(x, "hyp1f1_terminating: x");
  if (b <= 0.0 && b == std::floor(b) && b >= -static_cast<double>(y)) {
    throw qp::ValidationError(
        "hyp1f1_terminating: b is a nonpositive integer >= -y");
  }
  // term_{k+1} = term_k * (-y + k) x / ((b + k)(k + 1))
  double term = 1.0;
  double sum = 1.0;
  for (int k = 0; k < y; ++k) {
    term *= (static_cast<double>(-y + k) * x) / ((b + k) * (k + 1.0));
    sum += term;
  }
  return sum;
}

double std_normal_pdf(double x) {
  return kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

double std_normal_cdf(double x) {
  return 0.5 * std::erfc(-x / kSqrt2);
}

double log_std_normal_cdf(double x) {
  if (x > -1.0) {
    return std::log1p(-0.5 * std::erfc(x / kSqrt2));
  }
  if (x > -37.0) {
    // erfc keeps full precision down to ~1e-308 here.
    return std::log(0.5 * std::erfc(-x / kSqrt2));
  }
  // Mills-ratio asymptotics: Phi(x) = phi(x)/|x| (1 - 1/x^2 + 3/x^4 - ...).
  const double inv_x2 = 1.0 / (x * x);
  double series = 0.0;
  double term = 1.0;
  for (int k = 1; k <= 10; ++k) {
    term *= -(2.0 * k - 1.0) * inv_x2;
    series += term;
  }
  return -0.5 * x * x - 0.5 * std::log(kTwoPi) - std::log(-x) + std::log1p(series);
}

double std_normal_hazard_neg(double x) {
  // phi(x)/Phi(x); direct ratio is fine until Phi underflows.
  if (x > -20.0) return std_normal_pdf(x) / std_normal_cdf(x);
  return std::exp(-0.5 * x * x - 0.5 * std::log(kTwoPi) - log_std_normal_cdf(x));
}

}  // namespace qp::special
