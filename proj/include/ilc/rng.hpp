#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace ilc {

// SplitMix64 finalizer; used to derive independent sub-streams from one seed.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t hash_label(std::string_view label) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : label) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Counter-based seed splitting: (seed, label, counter) -> child seed.
/// Children with different labels or counters are statistically independent,
/// so any sub-experiment can be replayed without running its siblings.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::string_view label,
                                    std::uint64_t counter = 0) {
  return mix64(mix64(seed ^ hash_label(label)) + counter);
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed, std::string_view label,
                    std::uint64_t counter = 0) {
  return Rng(derive_seed(seed, label, counter));
}

}  // namespace ilc
