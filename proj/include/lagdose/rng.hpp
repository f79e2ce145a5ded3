#pragma once

#include <cstdint>
#include <random>

namespace lagdose {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Counter-based seed derivation: each (stream, index) pair gets an
// independent, reproducible seed regardless of evaluation order.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream,
                                 std::uint64_t index = 0) {
  std::uint64_t s = master;
  std::uint64_t z = splitmix64(s);
  s = z ^ (stream * 0xd6e8feb86659fd93ULL);
  z = splitmix64(s);
  s = z ^ (index * 0xa0761d6478bd642fULL);
  return splitmix64(s);
}

using Rng = std::mt19937_64;

}  // namespace lagdose
