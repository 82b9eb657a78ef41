#pragma once

#include <cmath>
#include <utility>

#include "sdelab/kernels.hpp"

namespace sdelab::detail {

template <class Visit>
void simulate_batch(const StepCoefficients& sc, std::uint64_t seed, std::size_t first_path, Visit&& visit) {
  const std::size_t n = sc.n;
  const std::size_t nn = n * n;
  std::vector<double> cur(nn * kLanes, 0.0), next(nn * kLanes);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t p = 0; p < kLanes; ++p) cur[(i * n + i) * kLanes + p] = 1.0;
  double dw[kLanes];
  const double sqrt_dt = std::sqrt(sc.dt);
  const auto& kt = kernels::active();

  visit(std::size_t{0}, static_cast<const double*>(cur.data()));
  for (std::size_t k = 0; k < sc.steps; ++k) {
    brownian_increments(seed, sc.key0 + static_cast<std::int64_t>(k), first_path, sqrt_dt, dw);
    kt.affine_apply(n, kLanes, sc.a_dt.data() + k * nn, sc.g.data() + k * nn, dw, cur.data(), next.data(), true);
    std::swap(cur, next);
    visit(k + 1, static_cast<const double*>(cur.data()));
  }
}

}  // namespace sdelab::detail
