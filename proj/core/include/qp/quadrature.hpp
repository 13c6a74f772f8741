#ifndef QPROP_QUADRATURE_HPP
#define QPROP_QUADRATURE_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "qp/errors.hpp"

namespace qp {

struct QuadratureResult {
  double value = 0.0;
  double error_estimate = 0.0;
  int evaluations = 0;
  bool converged = false;
};

namespace detail {

// 15-point Kronrod / 7-point Gauss pair on [-1, 1] (QUADPACK constants).
inline constexpr double kGk15Nodes[8] = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144838258730, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.0};
inline constexpr double kGk15KronrodW[8] = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr double kGk15GaussW[4] = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

template <class F>
inline void gk15(const F& f, double lo, double hi, double* kronrod, double* err) {
  const double c = 0.5 * (lo + hi);
  const double half = 0.5 * (hi - lo);
  const double f_center = f(c);
  double result_gauss = kGk15GaussW[3] * f_center;
  double result_kronrod = kGk15KronrodW[7] * f_center;
  for (int j = 0; j < 7; ++j) {
    const double dx = half * kGk15Nodes[j];
    const double sum = f(c - dx) + f(c + dx);
    result_kronrod += kGk15KronrodW[j] * sum;
    if (j % 2 == 1) result_gauss += kGk15GaussW[j / 2] * sum;
  }
  *kronrod = result_kronrod * half;
  *err = std::fabs((result_kronrod - result_gauss) * half);
}

struct Segment {
  double lo, hi, value, error;
};

}  // namespace detail

// Adaptive Gauss-Kronrod integration of f over [lo, hi] to an absolute
// tolerance, seeded with an initial partition (interior breakpoints sorted or
// not, values outside (lo, hi) ignored). Bisects the segment with the largest
// error estimate until the summed estimate meets tol or max_segments is
// reached.
template <class F>
QuadratureResult integrate_with_breakpoints(const F& f, double lo, double hi,
                                            std::vector<double> breakpoints,
                                            double abs_tol, int max_segments = 2000) {
  QuadratureResult out;
  if (!(lo < hi)) {
    out.converged = true;
    return out;
  }
  std::sort(breakpoints.begin(), breakpoints.end());
  std::vector<detail::Segment> segs;
  segs.reserve(64);
  double cursor = lo;
  for (double b : breakpoints) {
    if (b <= cursor || b >= hi) continue;
    detail::Segment s{cursor, b, 0.0, 0.0};
    detail::gk15(f, s.lo, s.hi, &s.value, &s.error);
    out.evaluations += 15;
    segs.push_back(s);
    cursor = b;
  }
  {
    detail::Segment s{cursor, hi, 0.0, 0.0};
    detail::gk15(f, s.lo, s.hi, &s.value, &s.error);
    out.evaluations += 15;
    segs.push_back(s);
  }

  while (static_cast<int>(segs.size()) < max_segments) {
    double total_err = 0.0;
    std::size_t worst = 0;
    for (std::size_t i = 0; i < segs.size(); ++i) {
      total_err += segs[i].error;
      if (segs[i].error > segs[worst].error) worst = i;
    }
    if (total_err <= abs_tol) break;
    detail::Segment a = segs[worst];
    const double mid = 0.5 * (a.lo + a.hi);
    if (mid <= a.lo || mid >= a.hi) break;  // interval at floating point limit
    detail::Segment left{a.lo, mid, 0.0, 0.0}, right{mid, a.hi, 0.0, 0.0};
    detail::gk15(f, left.lo, left.hi, &left.value, &left.error);
    detail::gk15(f, right.lo, right.hi, &right.value, &right.error);
    out.evaluations += 30;
    segs[worst] = left;
    segs.push_back(right);
  }

  double total = 0.0, total_err = 0.0;
  for (const auto& seg : segs) {
    total += seg.value;
    total_err += seg.error;
  }
  out.value = total;
  out.error_estimate = total_err;
  out.converged = total_err <= abs_tol;
  return out;
}

template <class F>
QuadratureResult integrate(const F& f, double lo, double hi, double abs_tol,
                           int max_segments = 2000) {
  return integrate_with_breakpoints(f, lo, hi, {}, abs_tol, max_segments);
}

// As integrate(), but throws NumericalError when the tolerance is not met.
template <class F>
double integrate_or_throw(const F& f, double lo, double hi, double abs_tol,
                          int max_segments = 2000) {
  const QuadratureResult r = integrate(f, lo, hi, abs_tol, max_segments);
  if (!r.converged) {
    throw NumericalError("quadrature did not converge: error estimate " +
                         std::to_string(r.error_estimate) + " > tol " +
                         std::to_string(abs_tol) + " after " +
                         std::to_string(r.evaluations) + " evaluations");
  }
  return r.value;
}

}  // namespace qp

#endif
