#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace cdm {

using Rng = std::mt19937_64;

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}
}  // namespace detail

/// Mixes a master seed with a path of stream indices into an independent seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
  std::uint64_t h = detail::splitmix64(seed);
  for (std::uint64_t p : path) h = detail::splitmix64(h ^ detail::splitmix64(p + 0x51ed27ULL));
  return h;
}

inline Rng substream(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
  return Rng(derive_seed(seed, path));
}

// Stream tags keep the purposes of derived generators disjoint.
namespace stream {
inline constexpr std::uint64_t init = 1;
inline constexpr std::uint64_t shuffle = 2;
inline constexpr std::uint64_t noise = 3;
inline constexpr std::uint64_t probes = 4;
inline constexpr std::uint64_t sampler = 5;
inline constexpr std::uint64_t split = 6;
inline constexpr std::uint64_t dataset = 7;
inline constexpr std::uint64_t subsample = 8;
}  // namespace stream

}  // namespace cdm
