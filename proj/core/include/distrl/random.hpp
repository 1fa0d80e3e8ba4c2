#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace distrl {

// All randomness in the library flows through explicitly seeded mt19937_64
// engines. Uniform doubles are produced by hand from the top 53 bits instead
// of std::uniform_real_distribution so that streams are identical across
// standard library implementations.
using Rng = std::mt19937_64;

// Uniform draw in [0, 1).
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Uniform draw in [lo, hi).
inline double uniform(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

// Uniform integer in [0, n).
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
  // Rejection sampling to avoid modulo bias.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t v = rng();
  while (v >= limit) v = rng();
  return v % n;
}

// Derives an independent stream from a base seed and a purpose tag, so that
// e.g. the Monte Carlo ground-truth stream is decoupled from the training
// stream of the same run. FNV-1a over the tag, mixed with the seed.
inline Rng make_stream(std::uint64_t seed, std::string_view tag) {
  std::uint64_t h = 1469598103934665603ULL;
  for (char c : tag) {
    h ^= static_cast<std::uint64_t>(static_cast<unsigned char>(c));
    h *= 1099511628211ULL;
  }
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
  return Rng(seq);
}

}  // namespace distrl
