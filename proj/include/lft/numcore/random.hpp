#pragma once

#include <cstdint>
#include <random>

namespace lft {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Generator for sub-stream `index` of `seed`; streams for different
/// indices do not depend on each other or on how many exist.
inline std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t index = 0) {
  return std::mt19937_64(splitmix64(splitmix64(seed) ^ splitmix64(index + 0x5851F42D4C957F2DULL)));
}

}  // namespace lft
