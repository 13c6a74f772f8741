#ifndef QPROP_TESTS_ORACLES_HPP
#define QPROP_TESTS_ORACLES_HPP

// Independent numerical oracles for the test suites. These deliberately avoid
// the library's quadrature and special-function code paths: integration is
// adaptive Simpson, the normal CDF comes straight from std::erfc.

#include <cmath>
#include <cstdint>

namespace qptest {

inline double phi(double x) { return std::exp(-0.5 * x * x) / 2.5066282746310005024; }
inline double Phi(double x) { return 0.5 * std::erfc(-x / 1.4142135623730950488); }

namespace detail {

template <class F>
double simpson_rec(const F& f, double a, double b, double fa, double fm, double fb,
                   double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (depth <= 0 || std::fabs(delta) <= 15.0 * tol) {
    return left + right + delta / 15.0;
  }
  return simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

}  // namespace detail

// Adaptive Simpson quadrature with absolute tolerance. Splits the interval in
// 32 panels up front so narrow features are not missed on wide domains.
template <class F>
double integrate(const F& f, double a, double b, double tol = 1e-12, int depth = 44) {
  if (!(a < b)) return 0.0;
  constexpr int kPanels = 32;
  const double h = (b - a) / kPanels;
  double total = 0.0;
  for (int p = 0; p < kPanels; ++p) {
    const double lo = a + p * h;
    const double hi = p == kPanels - 1 ? b : lo + h;
    const double m = 0.5 * (lo + hi);
    const double fa = f(lo), fm = f(m), fb = f(hi);
    const double whole = (hi - lo) / 6.0 * (fa + 4.0 * fm + fb);
    total += detail::simpson_rec(f, lo, hi, fa, fm, fb, whole, tol / kPanels, depth);
  }
  return total;
}

// Deterministic xorshift generator for reproducible random cases.
struct Rng {
  std::uint64_t state;
  explicit Rng(std::uint64_t seed) : state(seed * 2685821657736338717ULL + 1) {}

  std::uint64_t next() {
    state ^= state << 13;
    state ^= state >> 7;
    state ^= state << 17;
    return state;
  }
  double uniform(double lo, double hi) {
    return lo + (hi - lo) * ((next() >> 11) * 0x1.0p-53);
  }
  int uniform_int(int lo, int hi) {  // inclusive
    return lo + static_cast<int>(next() % std::uint64_t(hi - lo + 1));
  }
  double normal() {
    const double u1 = uniform(1e-16, 1.0);
    const double u2 = uniform(0.0, 1.0);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.2831853071795864769 * u2);
  }
};

}  // namespace qptest

#endif
