#ifndef QPROP_DETAIL_RNG_HPP
#define QPROP_DETAIL_RNG_HPP

#include <cstdint>
#include <vector>

namespace qp::detail {

// splitmix64: tiny, bit-stable across platforms. Used everywhere a seeded
// choice must reproduce exactly (fold permutations, event splits, orderings).
inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline double uniform01(std::uint64_t& state) {
  return (splitmix64(state) >> 11) * 0x1.0p-53;
}

// Fisher-Yates with explicit index mapping (std::shuffle is not portable
// bit-for-bit).
inline void shuffle_indices(std::vector<int>& idx, std::uint64_t seed) {
  std::uint64_t state = seed * 0x9e3779b97f4a7c15ULL + 0x2545f4914f6cdd1dULL;
  for (int i = static_cast<int>(idx.size()) - 1; i > 0; --i) {
    const int j = static_cast<int>(splitmix64(state) % std::uint64_t(i + 1));
    const int tmp = idx[i];
    idx[i] = idx[j];
    idx[j] = tmp;
  }
}

}  // namespace qp::detail

#endif
