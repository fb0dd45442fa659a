#pragma once

#include <cstdint>
#include <random>

namespace propel {

// Every random draw in the library flows from one of these, seeded from the
// run's root seed. No wall-clock seeding anywhere.
using Rng = std::mt19937_64;

// splitmix64 finalizer; used to derive independent stream seeds from
// (seed, salt) pairs so parallel workers never share a stream.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline Rng make_rng(std::uint64_t seed, std::uint64_t salt = 0) {
  return Rng(mix_seed(seed, salt));
}

}  // namespace propel
