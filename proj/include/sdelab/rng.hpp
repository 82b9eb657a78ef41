#pragma once

#include <cstdint>

namespace sdelab {

/// SplitMix64 finaliser. A bijection on 64-bit words.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Counter-based Gaussian stream keyed on (seed, path, step).
///
///   h  = sm(sm(sm(seed) ^ path) ^ step)
///   u1 = ((sm(h) >> 11) + 1) * 2^-53                     in (0, 1]
///   u2 = (sm(h ^ 0xD1B54A32D192ED03) >> 11) * 2^-53      in [0, 1)
///   z  = sqrt(-2 ln u1) * cos(2 pi u2)
///
/// No state: any (path, step) can be drawn in any order on any thread.
std::uint64_t rng_key(std::uint64_t seed, std::uint64_t path, std::uint64_t step) noexcept;
double standard_normal(std::uint64_t seed, std::uint64_t path, std::uint64_t step) noexcept;

/// Uniforms underlying standard_normal, exposed for testing.
void rng_uniforms(std::uint64_t key, double& u1, double& u2) noexcept;

}  // namespace sdelab
