#ifndef QPROP_LIKELIHOODS_HPP
#define QPROP_LIKELIHOODS_HPP

#include <utility>

namespace qp {

// Univariate cavity Gaussian q^{\i}(f) = N(f | mean, var).
struct CavityParams {
  double mean = 0.0;
  double var = 1.0;

  void validate() const;
};

enum class Task { binary, count };

// One observed response: label in {-1,+1} for binary tasks, count in N for
// count tasks.
struct Observation {
  Task task;
  int value;

  static Observation binary_label(int y);
  static Observation count(int y);
  void validate() const;
};

// Normalizer and first two moments of the tilted distribution
// p(y|f) q^{\i}(f) / Z. Moments come from log-derivative identities, so they
// stay usable far into the likelihood tail.
struct TiltedMoments {
  double log_z = 0.0;
  double mean = 0.0;
  double var = 1.0;
  bool used_quadrature = false;  // closed form gave way to the quadrature path
};

struct TiltedCdfValue {
  double value = 0.0;
  bool used_quadrature = false;
};

// --- probit likelihood p(y|f) = Phi(y f), y in {-1,+1} ---------------------

TiltedMoments probit_tilted_moments(const CavityParams& cavity, int y);
double probit_tilted_cdf(double x, const CavityParams& cavity, int y);

// --- Poisson likelihood with square link, p(y|f) = (f^2)^y e^{-f^2} / y! ----

TiltedMoments poisson_sq_tilted_moments(const CavityParams& cavity, int y);
TiltedCdfValue poisson_sq_tilted_cdf_ex(double x, const CavityParams& cavity, int y);
double poisson_sq_tilted_cdf(double x, const CavityParams& cavity, int y);

// Counts above this use the quadrature path only (factorial / Pochhammer
// range of the closed forms).
inline constexpr int kPoissonClosedFormMaxCount = 170;

// Polymorphic view used by the inference loop and the lookup tables, so test
// doubles (e.g. a Gaussian response) can ride the same machinery.
class Likelihood {
 public:
  virtual ~Likelihood() = default;

  virtual const char* name() const = 0;
  virtual Task task() const = 0;
  virtual void validate_observation(int y) const = 0;
  virtual TiltedMoments tilted_moments(const CavityParams& cavity, int y) const = 0;
  virtual TiltedCdfValue tilted_cdf(double x, const CavityParams& cavity, int y) const = 0;

  // Interval holding essentially all tilted mass; projections widen it as
  // needed until the CDF endpoints are resolved.
  virtual std::pair<double, double> support_hint(const CavityParams& cavity, int y) const;
};

class ProbitLikelihood final : public Likelihood {
 public:
  const char* name() const override { return "probit"; }
  Task task() const override { return Task::binary; }
  void validate_observation(int y) const override;
  TiltedMoments tilted_moments(const CavityParams& cavity, int y) const override;
  TiltedCdfValue tilted_cdf(double x, const CavityParams& cavity, int y) const override;
};

class PoissonSquareLikelihood final : public Likelihood {
 public:
  const char* name() const override { return "poisson_square"; }
  Task task() const override { return Task::count; }
  void validate_observation(int y) const override;
  TiltedMoments tilted_moments(const CavityParams& cavity, int y) const override;
  TiltedCdfValue tilted_cdf(double x, const CavityParams& cavity, int y) const override;
  std::pair<double, double> support_hint(const CavityParams& cavity, int y) const override;
};

}  // namespace qp

#endif
