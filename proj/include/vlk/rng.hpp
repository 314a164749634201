#pragma once

#include <cstdint>

namespace vlk {

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Counter-based generator: the value of draw (a, b) under `seed` is a pure
/// function of the triple, so draws never depend on evaluation order.
constexpr std::uint64_t counter_hash(std::uint64_t seed, std::uint64_t a,
                                     std::uint64_t b) noexcept {
  return mix64(mix64(mix64(seed) ^ a) ^ (b * 0xD1B54A32D192ED03ULL));
}

/// Uniform double in [0, 1) from the top 53 bits of a hash.
constexpr double unit_double(std::uint64_t h) noexcept {
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

constexpr double counter_uniform(std::uint64_t seed, std::uint64_t a,
                                 std::uint64_t b) noexcept {
  return unit_double(counter_hash(seed, a, b));
}

}  // namespace vlk
