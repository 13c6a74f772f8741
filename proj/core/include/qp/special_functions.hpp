#ifndef QPROP_SPECIAL_FUNCTIONS_HPP
#define QPROP_SPECIAL_FUNCTIONS_HPP

namespace qp::special {

// Inverse error function on (-1, 1). Rational initial guess refined with two
// Newton steps on erf; round-trips erf(erf_inv(p)) = p to better than 1e-12.
// Throws qp::ValidationError for |p| >= 1 or NaN.
double erf_inv(double p);

// Owen's T function, T(h, a) = 1/(2 pi) Int_0^a exp(-(1+x^2) h^2 / 2)/(1+x^2) dx.
// Any finite h, a. Absolute accuracy ~1e-14.
double owen_t(double h, double a);

// Upper incomplete gamma function Gamma(a, z) = Int_z^inf t^(a-1) e^(-t) dt,
// unnormalized, for a > 0, z >= 0.
double gamma_upper(double a, double z);

// Lower counterpart, gamma_lower(a, z) = Gamma(a) - gamma_upper(a, z).
double gamma_lower(double a, double z);

// Terminating confluent hypergeometric series 1F1(-y; b; x) for integer y >= 0,
// evaluated as the finite sum of y+1 terms with a running term ratio.
// Throws if b is a nonpositive integer >= -y (a Pochhammer denominator vanishes).
double hyp1f1_terminating(int y, double b, double x);

double std_normal_pdf(double x);
double std_normal_cdf(double x);

// log Phi(x), stable into the far left tail (uses a Mills-ratio expansion
// once erfc would lose precision).
double log_std_normal_cdf(double x);

// phi(x) / Phi(x), computed through logs so it stays finite for x << 0.
double std_normal_hazard_neg(double x);

}  // namespace qp::special

#endif
