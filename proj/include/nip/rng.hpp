#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>

namespace nip {

using Rng = std::mt19937_64;

/// Independent random stream keyed by a base seed and a tuple of tags
/// (epoch, batch, element, ...). Streams with different tags do not overlap
/// in practice, so parallel workers can each own one.
Rng make_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> tags = {});

// Uniform double in [0, 1) with 53 random bits.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Uniform integer in [0, n).
int uniform_int(Rng& rng, int n);

// Draws an index with probability proportional to weights (need not be
// normalized). All-zero weights fall back to a uniform draw.
int sample_categorical(std::span<const double> weights, Rng& rng);

}  // namespace nip
