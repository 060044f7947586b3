#pragma once

#include <cstdint>
#include <random>

namespace tcode {

using Rng = std::mt19937_64;

/// splitmix64 finalizer.
inline constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Purposes get independent streams so that, e.g., changing the batch shape
/// never perturbs parameter initialization.
enum class Stream : std::uint64_t {
  init = 1,
  sampling = 2,
  triples = 3,
  evaluation = 4,
  references = 5,
  transition = 6,
};

/// Seed for draw `index` of stream `stream` under run seed `seed`.
inline constexpr std::uint64_t derive_seed(std::uint64_t seed, Stream stream, std::uint64_t index = 0) {
  return mix64(mix64(mix64(seed) ^ static_cast<std::uint64_t>(stream)) ^ index);
}

}  // namespace tcode
