#pragma once

#include <cstddef>

// Lane-batched kernels over structure-of-arrays matrix blocks.
//
// A "lane block" holds `lanes` independent n x n matrices, one per Monte Carlo
// path. Entry (i, j) of every lane is contiguous:
//   block[(i * n + j) * lanes + p]
// `lanes` must be a multiple of 4. Outputs never alias inputs unless stated.
//
// Every variant performs the same floating-point operations in the same
// order (no FMA), so results are bit-identical across ISAs.

namespace sdelab::kernels {

enum class Isa { Scalar, Avx2, Neon };

struct KernelTable {
  // out = [x +] sum_k (sa(i,k) + sb(i,k) * w[p]) * x(k,j)[p]
  // sa, sb are shared n x n row-major; w has one value per lane.
  void (*affine_apply)(std::size_t n, std::size_t lanes, const double* sa, const double* sb,
                       const double* w, const double* x, double* out, bool add_input);
  // out(i,j)[p] = sum_k s(i,k) * x(k,j)[p]
  void (*gemm_shared_lane)(std::size_t n, std::size_t lanes, const double* s, const double* x, double* out);
  // out(i,j)[p] = sum_k a(i,k)[p] * b(k,j)[p]
  void (*gemm_lane_lane)(std::size_t n, std::size_t lanes, const double* a, const double* b, double* out);
  // Elementwise over `count` doubles; out may alias a or b.
  void (*add)(std::size_t count, const double* a, const double* b, double* out);
  void (*sub)(std::size_t count, const double* a, const double* b, double* out);
  // x[p] = x[p] + (lam_dt * x[p] + c * dw[p])
  void (*affine_scalar_step)(std::size_t lanes, double lam_dt, double c, const double* dw, double* x);
};

const char* isa_name(Isa isa) noexcept;
bool isa_available(Isa isa) noexcept;

/// Best available ISA at startup, unless overridden.
Isa active_isa() noexcept;
/// Throws ArgumentError if the ISA is not available on this machine/build.
void set_active_isa(Isa isa);

const KernelTable& table(Isa isa);
const KernelTable& active();

namespace detail {
extern const KernelTable scalar_table;
#if defined(SDELAB_HAVE_AVX2)
extern const KernelTable avx2_table;
#endif
#if defined(SDELAB_HAVE_NEON)
extern const KernelTable neon_table;
#endif
}  // namespace detail

}  // namespace sdelab::kernels
