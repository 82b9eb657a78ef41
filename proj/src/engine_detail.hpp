#pragma once

// Batch-level building blocks shared by the simulator and the Picard solvers.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "sdelab/coefficients.hpp"

namespace sdelab::detail {

inline constexpr std::size_t kLanes = 32;

/// A dt and G (or the perturbed versions) at the left end of every step.
struct StepCoefficients {
  std::size_t n = 0;
  std::size_t steps = 0;
  double s = 0.0;
  double dt = 0.0;
  std::int64_t key0 = 0;  // RNG step key of step 0
  std::vector<double> a_dt;  // [step][n*n]
  std::vector<double> g;     // [step][n*n]
};

StepCoefficients step_coefficients(const CoefficientSpec& spec, bool perturbed, double s, double dt,
                                   std::size_t steps);

std::int64_t step_key0(double s, double dt);

/// dw[p] = sqrt(dt) * z(seed, first_path + p, key) for p < kLanes.
void brownian_increments(std::uint64_t seed, std::int64_t key, std::size_t first_path, double sqrt_dt, double* dw);

/// Runs one lane batch from Phi = Id, calling visit(k, block) with the SoA
/// block after k steps, k = 0 .. steps.
template <class Visit>
void simulate_batch(const StepCoefficients& sc, std::uint64_t seed, std::size_t first_path, Visit&& visit);

}  // namespace sdelab::detail

#include "engine_detail_impl.hpp"
