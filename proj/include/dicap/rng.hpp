#pragma once

#include <cstdint>
#include <random>

namespace dicap {

using Rng = std::mt19937_64;

/// splitmix64 finalizer; decorrelates derived seeds.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Derives an independent stream seed from a base seed and a stream index.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  return mix64(base ^ mix64(stream + 1));
}

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

}  // namespace dicap
