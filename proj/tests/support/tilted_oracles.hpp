#ifndef QPROP_TESTS_TILTED_ORACLES_HPP
#define QPROP_TESTS_TILTED_ORACLES_HPP

// Brute-force tilted-distribution reference values (normalizer, moments, CDF)
// built on the Simpson oracle only.

#include <algorithm>
#include <cmath>

#include "support/oracles.hpp"

namespace qptest {

struct TiltedRef {
  double z = 0.0;
  double mean = 0.0;
  double var = 1.0;
};

namespace detail {

// Probe the density peak so adaptive Simpson works on an O(1) integrand even
// when the normalizer underflows the absolute tolerance.
template <class Dens>
inline double probe_scale(const Dens& dens, double lo, double hi) {
  double peak = 0.0;
  for (int i = 0; i <= 256; ++i) {
    peak = std::max(peak, dens(lo + (hi - lo) * i / 256.0));
  }
  return peak > 0.0 ? peak : 1.0;
}

}  // namespace detail

template <class LikFn>
inline TiltedRef tilted_reference(const LikFn& likelihood, double cav_mean,
                                  double cav_var, double lo, double hi,
                                  double tol = 1e-12) {
  const double sd = std::sqrt(cav_var);
  const auto raw = [&](double f) { return likelihood(f) * phi((f - cav_mean) / sd) / sd; };
  const double scale = detail::probe_scale(raw, lo, hi);
  const auto dens = [&](double f) { return raw(f) / scale; };
  TiltedRef ref;
  const double z_scaled = integrate(dens, lo, hi, tol);
  ref.z = z_scaled * scale;
  ref.mean = integrate([&](double f) { return f * dens(f); }, lo, hi, tol) / z_scaled;
  ref.var = integrate([&](double f) {
              const double d = f - ref.mean;
              return d * d * dens(f);
            }, lo, hi, tol) /
            z_scaled;
  return ref;
}

template <class LikFn>
inline double tilted_cdf_reference(const LikFn& likelihood, double cav_mean,
                                   double cav_var, double x, double lo, double hi,
                                   double tol = 1e-12) {
  const double sd = std::sqrt(cav_var);
  const auto raw = [&](double f) { return likelihood(f) * phi((f - cav_mean) / sd) / sd; };
  const double scale = detail::probe_scale(raw, lo, hi);
  const auto dens = [&](double f) { return raw(f) / scale; };
  const double z = integrate(dens, lo, hi, tol);
  if (x <= lo) return 0.0;
  if (x >= hi) return 1.0;
  return std::clamp(integrate(dens, lo, x, tol) / z, 0.0, 1.0);
}

inline double probit_lik(double f, int y) { return Phi(y * f); }

inline double poisson_sq_lik(double f, int y) {
  const double g = f * f;
  double log_fact = 0.0;
  for (int k = 2; k <= y; ++k) log_fact += std::log(static_cast<double>(k));
  if (y == 0) return std::exp(-g);
  if (g == 0.0) return 0.0;
  return std::exp(y * std::log(g) - g - log_fact);
}

inline double probit_support_lo(double mu, double var) { return mu - 14.0 * std::sqrt(var); }
inline double probit_support_hi(double mu, double var) { return mu + 14.0 * std::sqrt(var); }

inline double poisson_support_lo(double mu, double var, int y) {
  return std::max(mu - 14.0 * std::sqrt(var), -(std::sqrt(double(y)) + 10.0));
}
inline double poisson_support_hi(double mu, double var, int y) {
  return std::min(mu + 14.0 * std::sqrt(var), std::sqrt(double(y)) + 10.0);
}

}  // namespace qptest

#endif
