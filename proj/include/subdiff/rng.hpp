#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace subdiff {

using Rng = std::mt19937_64;

// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// FNV-1a, used only to turn algorithm names into stream tags.
constexpr std::uint64_t hash_name(std::string_view name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Seed of the Monte Carlo stream for one (algorithm, run) pair:
/// mix64(mix64(mix64(master) ^ hash(algorithm)) ^ run).
constexpr std::uint64_t stream_seed(std::uint64_t master_seed,
                                    std::string_view algorithm,
                                    std::uint64_t run_index) {
  return mix64(mix64(mix64(master_seed) ^ hash_name(algorithm)) ^ run_index);
}

}  // namespace subdiff
