#pragma once

// Seed derivation and random state generation.
//
// Every stochastic routine takes one explicit 64-bit seed. Independent
// streams are derived with derive_seed(base, stream, index), a SplitMix64
// finalizer applied to the base seed mixed with the stream tag and index.
// Derived seeds depend only on their arguments, so trial k of a Monte Carlo
// run draws the same numbers regardless of how many other trials run or in
// which order.

#include <cstdint>
#include <random>

#include "polarimeter/quantum.hpp"

namespace polarimeter {

using Rng = std::mt19937_64;

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Stream tags used by the library.
enum class SeedStream : std::uint64_t {
  record = 1,
  perturbation = 2,
  trial = 3,
  order = 4,
  state = 5,
};

inline constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream,
                                           std::uint64_t index = 0) noexcept {
  return splitmix64(splitmix64(base ^ splitmix64(stream)) + index);
}

inline constexpr std::uint64_t derive_seed(std::uint64_t base, SeedStream stream,
                                           std::uint64_t index = 0) noexcept {
  return derive_seed(base, static_cast<std::uint64_t>(stream), index);
}

/// Haar-random pure state.
inline PureState2Q random_pure_state(Rng& rng) {
  std::normal_distribution<double> g;
  Vector4c v;
  for (int k = 0; k < 4; ++k) v(k) = Complex{g(rng), g(rng)};
  return PureState2Q::normalized(v);
}

/// Random mixed state G G^dagger / Tr(G G^dagger) with G a 4 x rank complex
/// Ginibre matrix. rank = 4 gives the Hilbert-Schmidt measure.
inline DensityMatrix random_density_matrix(Rng& rng, int rank = 4) {
  if (rank < 1 || rank > 4) throw InvalidArgument("rank must be in [1, 4]");
  std::normal_distribution<double> g;
  Eigen::Matrix<Complex, 4, Eigen::Dynamic> ginibre(4, rank);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < rank; ++c) ginibre(r, c) = Complex{g(rng), g(rng)};
  Matrix4c m = ginibre * ginibre.adjoint();
  m = (0.5 * (m + m.adjoint())).eval();
  for (int k = 0; k < 4; ++k) m(k, k) = m(k, k).real();
  m /= m.trace().real();
  return DensityMatrix::from_matrix(m);
}

}  // namespace polarimeter
