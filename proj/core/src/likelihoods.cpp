#include "qp/likelihoods.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "qp/errors.hpp"
#include "qp/quadrature.hpp"
#include "qp/special_functions.hpp"

namespace qp {

namespace {

namespace sf = qp::special;

constexpr double kPi = 3.14159265358979323846;
constexpr double kLogTwoPi = 1.83787706640934548356;

double log_normal_pdf(double f, double mean, double var) {
  const double d = f - mean;
  return -0.5 * (kLogTwoPi + std::log(var)) - 0.5 * d * d / var;
}

// eta correction of the closed-form probit CDF.
double eta_term(double h, double k) {
  if (h * k > 0.0 || (h * k == 0.0 && h + k >= 0.0)) return 0.0;
  return -0.5;
}

double sign_of(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

// Phi2(b1, b2; rho) = P(W <= b1, V <= b2), standard bivariate normal, for
// b1 << 0 and rho <= 0: integrate w over (-inf, b1] against the conditional
// normal CDF, in log space. Both factors increase toward w = b1, so the
// integrand peaks at the endpoint and decays on scale 1/|b1|.
//
// A sigma* projection evaluates the tilted CDF a few hundred times for one
// cavity, so the w-nodes and their log phi(w) weights are cached per (b1,
// rho) with a fixed composite Kronrod rule over the decay profile.
struct BvnTailRule {
  static constexpr int kPanels = 4;
  static constexpr int kNodes = 15 * kPanels;
  double b1 = std::numeric_limits<double>::quiet_NaN();
  double rho = 0.0;
  double w[kNodes];
  double log_weight_phi[kNodes];  // log(quad weight * phi(w_i))

  void rebuild(double b1_new, double rho_new) {
    b1 = b1_new;
    rho = rho_new;
    const double inv_rate = 1.0 / std::max(1.0, std::fabs(b1));
    const double edges[kPanels + 1] = {0.0, 3.0 * inv_rate, 8.0 * inv_rate,
                                       18.0 * inv_rate, 50.0 * inv_rate};
    int idx = 0;
    for (int p = 0; p < kPanels; ++p) {
      const double c = 0.5 * (edges[p] + edges[p + 1]);
      const double half = 0.5 * (edges[p + 1] - edges[p]);
      for (int j = 0; j < 8; ++j) {
        for (int sign = -1; sign <= 1; sign += 2) {
          if (j == 7 && sign == 1) continue;  // center node once
          const double t = c + sign * half * qp::detail::kGk15Nodes[j];
          const double wt = half * qp::detail::kGk15KronrodW[j];
          const double wi = b1 - t;
          w[idx] = wi;
          log_weight_phi[idx] = std::log(wt) - 0.5 * kLogTwoPi - 0.5 * wi * wi;
          ++idx;
        }
      }
    }
  }

  double evaluate(double b2) const {
    const double s = std::sqrt(std::max(1.0 - rho * rho, 1e-300));
    double log_peak = -std::numeric_limits<double>::infinity();
    // peak sits at the endpoint node (t smallest); use it to scale the sum
    const double endpoint = -0.5 * kLogTwoPi - 0.5 * b1 * b1 +
                            sf::log_std_normal_cdf((b2 - rho * b1) / s);
    log_peak = endpoint;
    double acc = 0.0;
    for (int i = 0; i < kNodes; ++i) {
      const double lg = log_weight_phi[i] +
                        sf::log_std_normal_cdf((b2 - rho * w[i]) / s) - log_peak;
      acc += std::exp(lg);
    }
    return std::exp(log_peak) * acc;
  }
};

double bvn_cdf_tail(double b1, double b2, double rho) {
  thread_local BvnTailRule rule;
  if (rule.b1 != b1 || rule.rho != rho) rule.rebuild(b1, rho);
  return rule.evaluate(b2);
}

// Generic quadrature path over a log-density log_lik(f) + log N(f | cavity).
// The scale is probed on a coarse grid so the exponentials stay in range even
// when the peak sits far from the cavity mean.
template <class LogLik>
double probe_log_scale(const CavityParams& cavity, const LogLik& log_lik, double lo,
                       double hi) {
  double best = -std::numeric_limits<double>::infinity();
  constexpr int kProbes = 65;
  for (int i = 0; i < kProbes; ++i) {
    const double f = lo + (hi - lo) * i / (kProbes - 1.0);
    best = std::max(best, log_lik(f) + log_normal_pdf(f, cavity.mean, cavity.var));
  }
  return best;
}

template <class LogLik>
TiltedMoments quadrature_moments(const CavityParams& cavity, const LogLik& log_lik,
                                 double lo, double hi) {
  const double log_scale = probe_log_scale(cavity, log_lik, lo, hi);
  const auto fz = [&](double f) {
    return std::exp(log_lik(f) + log_normal_pdf(f, cavity.mean, cavity.var) - log_scale);
  };
  const double z0 = integrate(fz, lo, hi, 1e-13, 4000).value;
  const auto fm = [&](double f) { return f * fz(f); };
  const double m1 = integrate(fm, lo, hi, 1e-13 * std::max(1.0, std::fabs(cavity.mean)),
                              4000)
                        .value /
                    z0;
  const auto fv = [&](double f) {
    const double d = f - m1;
    return d * d * fz(f);
  };
  const double v = integrate(fv, lo, hi, 1e-13, 4000).value / z0;
  TiltedMoments out;
  out.log_z = std::log(z0) + log_scale;
  out.mean = m1;
  out.var = v;
  out.used_quadrature = true;
  return out;
}

template <class LogLik>
double quadrature_cdf(double x, const CavityParams& cavity, const LogLik& log_lik,
                      double lo, double hi) {
  if (x <= lo) return 0.0;
  const double log_scale = probe_log_scale(cavity, log_lik, lo, hi);
  const auto fz = [&](double f) {
    return std::exp(log_lik(f) + log_normal_pdf(f, cavity.mean, cavity.var) - log_scale);
  };
  const double z0 = integrate(fz, lo, hi, 1e-13, 4000).value;
  if (x >= hi) return 1.0;
  const double num = integrate(fz, lo, x, 1e-13, 4000).value;
  return std::clamp(num / z0, 0.0, 1.0);
}

}  // namespace

void CavityParams::validate() const {
  if (!std::isfinite(mean) || !std::isfinite(var) || !(var > 0.0)) {
    throw ValidationError("CavityParams: mean must be finite and var > 0");
  }
}

Observation Observation::binary_label(int y) {
  Observation o{Task::binary, y};
  o.validate();
  return o;
}

Observation Observation::count(int y) {
  Observation o{Task::count, y};
  o.validate();
  return o;
}

void Observation::validate() const {
  if (task == Task::binary) {
    if (value != 1 && value != -1) {
      throw ValidationError("Observation: binary label must be -1 or +1");
    }
  } else if (value < 0) {
    throw ValidationError("Observation: count must be a nonnegative integer");
  }
}

// ---------------------------------------------------------------------------
// probit
// ---------------------------------------------------------------------------

TiltedMoments probit_tilted_moments(const CavityParams& cavity, int y) {
  cavity.validate();
  Observation::binary_label(y);
  const double s = std::sqrt(1.0 + cavity.var);
  const double z = y * cavity.mean / s;
  const double ratio = sf::std_normal_hazard_neg(z);  // N(z) / Phi(z)
  TiltedMoments out;
  out.log_z = sf::log_std_normal_cdf(z);
  out.mean = cavity.mean + cavity.var * y * ratio / s;
  // d2/dmu2 log Z = -ratio (z + ratio) / (1 + var)
  const double d2 = -ratio * (z + ratio) / (1.0 + cavity.var);
  out.var = cavity.var + cavity.var * cavity.var * d2;
  return out;
}

double probit_tilted_cdf(double x, const CavityParams& cavity, int y) {
  cavity.validate();
  Observation::binary_label(y);
  if (!std::isfinite(x)) {
    if (std::isnan(x)) throw ValidationError("probit_tilted_cdf: x is NaN");
    return x > 0.0 ? 1.0 : 0.0;
  }
  const double mu = cavity.mean;
  const double sigma = std::sqrt(cavity.var);
  const double z = y * mu / std::sqrt(1.0 + cavity.var);

  // Special cases of the closed form.
  if (x == mu && mu == 0.0) {
    return 0.5 - (y / kPi) * std::atan(sigma);
  }
  const double k = mu / std::sqrt(cavity.var + 1.0);
  const double h = (x - mu) / sigma;
  const double rho = 1.0 / std::sqrt(1.0 + 1.0 / cavity.var);

  // The Owen-T arrangement sums O(1) terms that cancel down to Z*F(x); once Z
  // is tiny that costs all precision, so switch to a log-space bivariate
  // normal tail quadrature. The y = -1 case reduces to y = +1 by reflecting
  // f -> -f, which flips the cavity mean and the query point.
  if (z < -4.0) {
    if (y < 0) {
      const double flipped = probit_tilted_cdf(-x, CavityParams{-mu, cavity.var}, +1);
      return std::clamp(1.0 - flipped, 0.0, 1.0);
    }
    const double bvn = bvn_cdf_tail(k, h, -rho);
    const double log_zc = sf::log_std_normal_cdf(z);
    return std::clamp(bvn * std::exp(-log_zc), 0.0, 1.0);
  }

  const double inv_z = std::exp(-sf::log_std_normal_cdf(z));
  double bracket;
  if (x == mu) {  // mu != 0 here
    bracket = 0.25 - y * sign_of(k) * 0.25 + 0.5 * y * sf::std_normal_cdf(k) -
              y * sf::owen_t(k, sigma) + y * eta_term(0.0, k);
  } else if (mu == 0.0) {
    bracket = 0.5 * sf::std_normal_cdf(h) - y * sf::owen_t(h, sigma) + 0.25 * y -
              y * sign_of(h) * 0.25 + y * eta_term(h, 0.0);
  } else {
    const double root = std::sqrt(1.0 - rho * rho);
    const double a1 = (k + rho * h) / (h * root);
    const double a2 = (h + rho * k) / (k * root);
    bracket = 0.5 * sf::std_normal_cdf(h) - y * sf::owen_t(h, a1) +
              0.5 * y * sf::std_normal_cdf(k) - y * sf::owen_t(k, a2) +
              y * eta_term(h, k);
  }
  return std::clamp(bracket * inv_z, 0.0, 1.0);
}

void ProbitLikelihood::validate_observation(int y) const { Observation::binary_label(y); }

TiltedMoments ProbitLikelihood::tilted_moments(const CavityParams& cavity, int y) const {
  return probit_tilted_moments(cavity, y);
}

TiltedCdfValue ProbitLikelihood::tilted_cdf(double x, const CavityParams& cavity,
                                            int y) const {
  return {probit_tilted_cdf(x, cavity, y), false};
}

std::pair<double, double> Likelihood::support_hint(const CavityParams& cavity,
                                                   int /*y*/) const {
  const double sd = std::sqrt(cavity.var);
  return {cavity.mean - 12.0 * sd, cavity.mean + 12.0 * sd};
}

// ---------------------------------------------------------------------------
// Poisson with square link
// ---------------------------------------------------------------------------

namespace {

double poisson_log_lik(double f, int y) {
  const double g = f * f;
  if (y == 0) return -g;
  if (g == 0.0) return -std::numeric_limits<double>::infinity();
  return y * std::log(g) - g - std::lgamma(y + 1.0);
}

std::pair<double, double> poisson_support(const CavityParams& cavity, int y) {
  const double sd = std::sqrt(cavity.var);
  const double reach = std::sqrt(static_cast<double>(y)) + 9.0;
  const double lo = std::max(cavity.mean - 12.0 * sd, -reach);
  const double hi = std::min(cavity.mean + 12.0 * sd, reach);
  if (!(lo < hi)) return {-reach, reach};
  return {lo, hi};
}

// Support for the quadrature fallback. At large y the likelihood can drag the
// tilted peak to the edge of the cavity ball, so grow the bracket until the
// endpoints sit far below the probed peak.
std::pair<double, double> poisson_quad_support(const CavityParams& cavity, int y) {
  const double sd = std::sqrt(cavity.var);
  const double reach = std::sqrt(static_cast<double>(y)) + 9.0;
  double lo = std::min(cavity.mean - 12.0 * sd, -reach);
  double hi = std::max(cavity.mean + 12.0 * sd, reach);
  const auto log_tilted = [&](double f) {
    return poisson_log_lik(f, y) + log_normal_pdf(f, cavity.mean, cavity.var);
  };
  for (int round = 0; round < 40; ++round) {
    double peak = -std::numeric_limits<double>::infinity();
    for (int i = 0; i <= 128; ++i) {
      peak = std::max(peak, log_tilted(lo + (hi - lo) * i / 128.0));
    }
    const bool lo_ok = log_tilted(lo) < peak - 50.0;
    const bool hi_ok = log_tilted(hi) < peak - 50.0;
    if (lo_ok && hi_ok) break;
    const double grow = 0.25 * (hi - lo);
    if (!lo_ok) lo -= grow;
    if (!hi_ok) hi += grow;
  }
  return {lo, hi};
}

}  // namespace

TiltedMoments poisson_sq_tilted_moments(const CavityParams& cavity, int y) {
  cavity.validate();
  Observation::count(y);
  const double var = cavity.var;
  const double mu = cavity.mean;

  if (y > kPoissonClosedFormMaxCount) {
    const auto [qlo, qhi] = poisson_quad_support(cavity, y);
    return quadrature_moments(
        cavity, [y](double f) { return poisson_log_lik(f, y); }, qlo, qhi);
  }
  const auto [lo, hi] = poisson_support(cavity, y);

  const double denom = 1.0 + 2.0 * var;
  const double alpha = 2.0 * var / denom;
  const double h = mu * mu / denom;
  const double w = -h / (2.0 * var);
  const double f01 = sf::hyp1f1_terminating(y, 0.5, w);
  const double f13 = y >= 1 ? sf::hyp1f1_terminating(y - 1, 1.5, w) : 0.0;
  const double f25 = y >= 2 ? sf::hyp1f1_terminating(y - 2, 2.5, w) : 0.0;

  if (!(std::fabs(f01) > 1e-300)) {
    // Ratio denominators vanished; fall back to quadrature (flagged).
    return quadrature_moments(
        cavity, [y](double f) { return poisson_log_lik(f, y); }, lo, hi);
  }

  TiltedMoments out;
  out.log_z = (y + 0.5) * std::log(alpha) + std::lgamma(y + 0.5) + std::log(f01) -
              0.5 * std::log(2.0 * kPi * var) - std::lgamma(y + 1.0) - h;
  const double dlog = (y * f13 / (var * f01) - 1.0) * 2.0 * mu / denom;
  out.mean = var * dlog + mu;
  const double d2log =
      (y * f13 / (var * f01) - 1.0) * 2.0 / denom -
      (2.0 * (1.0 - y) * f25 / (3.0 * f01) + 2.0 * y * f13 * f13 / (f01 * f01)) *
          2.0 * mu * mu * y / (var * var * denom * denom);
  out.var = var * var * d2log + var;
  return out;
}

TiltedCdfValue poisson_sq_tilted_cdf_ex(double x, const CavityParams& cavity, int y) {
  cavity.validate();
  Observation::count(y);
  if (!std::isfinite(x)) {
    if (std::isnan(x)) throw ValidationError("poisson_sq_tilted_cdf: x is NaN");
    return {x > 0.0 ? 1.0 : 0.0, false};
  }
  const auto quad = [&]() -> TiltedCdfValue {
    const auto [qlo, qhi] = poisson_quad_support(cavity, y);
    return {quadrature_cdf(
                x, cavity, [y](double f) { return poisson_log_lik(f, y); }, qlo, qhi),
            true};
  };
  if (y > kPoissonClosedFormMaxCount) return quad();

  const double var = cavity.var;
  const double mu = cavity.mean;
  const double denom = 1.0 + 2.0 * var;
  const double alpha = 2.0 * var / denom;
  const double beta = mu / denom;
  const double w = -mu * mu / (2.0 * var * denom);
  const double f01 = sf::hyp1f1_terminating(y, 0.5, w);
  if (!(std::fabs(f01) > 1e-300)) return quad();

  // log A = -[(y + 1/2) log alpha + lgamma(y + 1/2) + log 1F1]
  const double log_a = -((y + 0.5) * std::log(alpha) + std::lgamma(y + 0.5) +
                         std::log(f01));
  const double t = (x - beta) * (x - beta) / alpha;
  const double sgn = sign_of(x - beta);
  // total saturation: every upper-gamma term vanished
  if (t >= 1000.0) return {sgn > 0.0 ? 1.0 : 0.0, false};

  double sum = 0.0;
  double max_abs_partial = 0.0;
  double binom = 1.0;  // C(2y, k)
  for (int k = 0; k <= 2 * y; ++k) {
    if (k > 0) binom *= static_cast<double>(2 * y - k + 1) / k;
    const double a_half = 0.5 * (k + 1);
    const double g_full = std::tgamma(a_half);
    const double g_upper = sf::gamma_upper(a_half, t);
    const double sign_pow = (k % 2 == 0) ? sgn : 1.0;  // sgn^(k+1)
    const double neg_pow = (k % 2 == 0) ? 1.0 : -1.0;  // (-1)^k
    const double term = binom * std::pow(beta, 2 * y - k) * std::pow(alpha, a_half) *
                        (neg_pow * g_full + sign_pow * (g_full - g_upper));
    sum += term;
    max_abs_partial = std::max(max_abs_partial, std::fabs(sum));
  }
  if (max_abs_partial > 1e12 * std::max(std::fabs(sum), 1e-300)) {
    // Catastrophic cancellation in the alternating sum.
    return quad();
  }
  const double value = 0.5 * std::exp(log_a) * sum;
  return {std::clamp(value, 0.0, 1.0), false};
}

double poisson_sq_tilted_cdf(double x, const CavityParams& cavity, int y) {
  return poisson_sq_tilted_cdf_ex(x, cavity, y).value;
}

void PoissonSquareLikelihood::validate_observation(int y) const { Observation::count(y); }

TiltedMoments PoissonSquareLikelihood::tilted_moments(const CavityParams& cavity,
                                                      int y) const {
  return poisson_sq_tilted_moments(cavity, y);
}

TiltedCdfValue PoissonSquareLikelihood::tilted_cdf(double x, const CavityParams& cavity,
                                                   int y) const {
  return poisson_sq_tilted_cdf_ex(x, cavity, y);
}

std::pair<double, double> PoissonSquareLikelihood::support_hint(
    const CavityParams& cavity, int y) const {
  return poisson_support(cavity, y);
}

}  // namespace qp
