#include "sdelab/rng.hpp"

#include <cmath>
#include <numbers>

namespace sdelab {

std::uint64_t rng_key(std::uint64_t seed, std::uint64_t path, std::uint64_t step) noexcept {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ path);
  return splitmix64(h ^ step);
}

void rng_uniforms(std::uint64_t key, double& u1, double& u2) noexcept {
  constexpr double inv53 = 0x1.0p-53;
  u1 = static_cast<double>((splitmix64(key) >> 11) + 1) * inv53;
  u2 = static_cast<double>(splitmix64(key ^ 0xD1B54A32D192ED03ULL) >> 11) * inv53;
}

double standard_normal(std::uint64_t seed, std::uint64_t path, std::uint64_t step) noexcept {
  double u1, u2;
  rng_uniforms(rng_key(seed, path, step), u1, u2);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace sdelab
