#pragma once

#include <cstdint>
#include <random>

namespace macdmp {

using Rng = std::mt19937_64;

// Mixes a base seed and a stream label into an independent seed (splitmix64
// finalizer), so that e.g. traffic and allocation draw from unrelated streams.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline Rng make_rng(std::uint64_t seed, std::uint64_t stream) {
  return Rng(derive_seed(seed, stream));
}

inline double standard_normal(Rng& rng) {
  return std::normal_distribution<double>(0.0, 1.0)(rng);
}

inline double uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

// Named stream labels shared across modules.
namespace streams {
inline constexpr std::uint64_t kLayout = 1;
inline constexpr std::uint64_t kTraffic = 2;
inline constexpr std::uint64_t kAllocation = 3;
inline constexpr std::uint64_t kPolicy = 4;
inline constexpr std::uint64_t kPlanner = 5;
inline constexpr std::uint64_t kTraining = 6;
inline constexpr std::uint64_t kInit = 7;
}  // namespace streams

}  // namespace macdmp
