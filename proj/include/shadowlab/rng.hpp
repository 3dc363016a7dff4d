#pragma once

#include <cstdint>
#include <random>

namespace shadowlab {

// splitmix64: cheap, well-distributed 64-bit mixer used to derive independent
// generator streams from (seed, index) pairs. Stream identity depends only on
// the pair, never on evaluation order, so parallel runs stay reproducible.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::mt19937_64 derive_stream(std::uint64_t seed, std::uint64_t index) {
  return std::mt19937_64(splitmix64(splitmix64(seed) ^ splitmix64(index + 1)));
}

}  // namespace shadowlab
