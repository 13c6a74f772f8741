#ifndef QPROP_LOOKUP_TABLE_HPP
#define QPROP_LOOKUP_TABLE_HPP

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "qp/likelihoods.hpp"
#include "qp/projection.hpp"

namespace qp {

// Uniform grid axis. For the sigma axis the coordinates are log10(sigma).
struct GridAxis {
  double lo = 0.0;
  double hi = 1.0;
  std::uint32_t count = 2;

  double step() const { return (hi - lo) / (count - 1); }
  double at(std::uint32_t i) const { return lo + step() * i; }
  void validate() const;

  static GridAxis from_step(double lo, double hi, double step);
};

struct GridSpec {
  GridAxis mu;           // cavity mean, linear scale
  GridAxis log10_sigma;  // cavity standard deviation, log10 scale

  // mu in [-10, 10] step 1e-3, sigma in [0.1, 10] with log10 step 1e-3:
  // 20001 x 2001 nodes per observation slice.
  static GridSpec classification_default();
};

enum class TableLikelihood : std::uint8_t { probit = 1, poisson_square = 2 };

enum class SigmaSource { table, fallback_ep, fallback_direct };

struct InterpResult {
  double sigma_star = 0.0;
  SigmaSource source = SigmaSource::table;
};

// Precomputed sigma*(mu, sigma, y) with bilinear interpolation in
// (mu, log10 sigma). Failed nodes are stored as NaN sentinels.
struct SigmaLookupTable {
  TableLikelihood likelihood = TableLikelihood::probit;
  GridAxis mu_axis;
  GridAxis sigma_axis;  // log10 scale
  std::vector<int> y_values;
  std::vector<std::vector<double>> values;  // per slice, row-major [mu][sigma]
  std::array<std::uint8_t, 32> checksum{};  // set by save/load

  double at(std::size_t slice, std::uint32_t mu_idx, std::uint32_t sigma_idx) const {
    return values[slice][std::size_t(mu_idx) * sigma_axis.count + sigma_idx];
  }
  int slice_of(int y) const;  // -1 when y has no slice
};

struct PrecomputeReport {
  std::uint64_t nodes = 0;
  std::uint64_t failures = 0;
};

// Fills one slice per y in y_set with project_w2 results for the cavity grid.
// Deterministic for any parallelism degree. Throws NumericalError if the node
// failure rate reaches 1e-6.
SigmaLookupTable precompute_table(const Likelihood& lik, const std::vector<int>& y_set,
                                  const GridSpec& grid, int parallelism,
                                  PrecomputeReport* report = nullptr);

// Bilinear lookup for the cavity; out-of-range queries return the tilted
// standard deviation (the moment-matched value), NaN corners fall back to a
// direct projection.
InterpResult interp_sigma(const SigmaLookupTable& table, const Likelihood& lik,
                          const CavityParams& cavity, int y);

// Same, reusing tilted moments the caller already computed.
InterpResult interp_sigma_with_moments(const SigmaLookupTable& table,
                                       const Likelihood& lik, const CavityParams& cavity,
                                       int y, const TiltedMoments& tilted);

// Binary format: magic "QPLT", format version u16, likelihood id u8, slice
// count u16; per slice: y i32, mu axis (f64 lo, f64 hi, u32 count), log10
// sigma axis (f64 lo, f64 hi, u32 count), row-major f64 values; trailing
// 32-byte SHA-256 of everything before it. Little-endian throughout.
void save_table(const SigmaLookupTable& table, const std::string& path);
SigmaLookupTable load_table(const std::string& path);

std::string checksum_hex(const std::array<std::uint8_t, 32>& digest);

}  // namespace qp

#endif
