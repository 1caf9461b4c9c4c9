#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace citriage {

/// Engine used for every seeded draw in the library.
using Rng = std::mt19937_64;

/// SplitMix64 finalizer. Used to derive independent seeds and as a
/// counter-based generator where a full engine would be too heavy.
[[nodiscard]] constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed for a named sub-stream of `seed`. Streams with different tags are
/// statistically independent.
[[nodiscard]] constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) noexcept {
  return splitmix64(seed ^ splitmix64(tag + 0x632be59bd9b4e019ULL));
}

/// Maps 64 random bits to [0, 1) using the top 53 bits.
[[nodiscard]] constexpr double unit_double(std::uint64_t bits) noexcept {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

/// Seeded 64-bit FNV-1a with a SplitMix finish. Stable across platforms and
/// runs, unlike std::hash.
[[nodiscard]] constexpr std::uint64_t stable_hash(std::string_view text, std::uint64_t seed) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL ^ splitmix64(seed);
  for (const char c : text) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return splitmix64(h);
}

/// Uniform index in [0, n). n must be positive.
[[nodiscard]] inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

}  // namespace citriage
