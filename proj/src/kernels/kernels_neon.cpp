#include <arm_neon.h>

#include "sdelab/kernels.hpp"

namespace sdelab::kernels::detail {
namespace {

// Two float64x2 registers per 4-lane step, mirroring the AVX2 loop shape.

void affine_apply(std::size_t n, std::size_t lanes, const double* sa, const double* sb, const double* w,
                  const double* x, double* out, bool add_input) {
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double* o = out + (i * n + j) * lanes;
      const double* xi = x + (i * n + j) * lanes;
      for (std::size_t p = 0; p < lanes; p += 2) {
        const float64x2_t wv = vld1q_f64(w + p);
        float64x2_t coef = vaddq_f64(vdupq_n_f64(sa[i * n]), vmulq_f64(vdupq_n_f64(sb[i * n]), wv));
        float64x2_t acc = vmulq_f64(coef, vld1q_f64(x + j * lanes + p));
        for (std::size_t k = 1; k < n; ++k) {
          coef = vaddq_f64(vdupq_n_f64(sa[i * n + k]), vmulq_f64(vdupq_n_f64(sb[i * n + k]), wv));
          acc = vaddq_f64(acc, vmulq_f64(coef, vld1q_f64(x + (k * n + j) * lanes + p)));
        }
        if (add_input) acc = vaddq_f64(vld1q_f64(xi + p), acc);
        vst1q_f64(o + p, acc);
      }
    }
  }
}

void gemm_shared_lane(std::size_t n, std::size_t lanes, const double* s, const double* x, double* out) {
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double* o = out + (i * n + j) * lanes;
      for (std::size_t p = 0; p < lanes; p += 2) {
        float64x2_t acc = vmulq_f64(vdupq_n_f64(s[i * n]), vld1q_f64(x + j * lanes + p));
        for (std::size_t k = 1; k < n; ++k)
          acc = vaddq_f64(acc, vmulq_f64(vdupq_n_f64(s[i * n + k]), vld1q_f64(x + (k * n + j) * lanes + p)));
        vst1q_f64(o + p, acc);
      }
    }
  }
}

void gemm_lane_lane(std::size_t n, std::size_t lanes, const double* a, const double* b, double* out) {
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double* o = out + (i * n + j) * lanes;
      for (std::size_t p = 0; p < lanes; p += 2) {
        float64x2_t acc = vmulq_f64(vld1q_f64(a + (i * n) * lanes + p), vld1q_f64(b + j * lanes + p));
        for (std::size_t k = 1; k < n; ++k)
          acc = vaddq_f64(acc, vmulq_f64(vld1q_f64(a + (i * n + k) * lanes + p),
                                         vld1q_f64(b + (k * n + j) * lanes + p)));
        vst1q_f64(o + p, acc);
      }
    }
  }
}

void add(std::size_t count, const double* a, const double* b, double* out) {
  std::size_t i = 0;
  for (; i + 2 <= count; i += 2) vst1q_f64(out + i, vaddq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  for (; i < count; ++i) out[i] = a[i] + b[i];
}

void sub(std::size_t count, const double* a, const double* b, double* out) {
  std::size_t i = 0;
  for (; i + 2 <= count; i += 2) vst1q_f64(out + i, vsubq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  for (; i < count; ++i) out[i] = a[i] - b[i];
}

void affine_scalar_step(std::size_t lanes, double lam_dt, double c, const double* dw, double* x) {
  const float64x2_t lv = vdupq_n_f64(lam_dt);
  const float64x2_t cv = vdupq_n_f64(c);
  for (std::size_t p = 0; p < lanes; p += 2) {
    const float64x2_t xv = vld1q_f64(x + p);
    const float64x2_t inc = vaddq_f64(vmulq_f64(lv, xv), vmulq_f64(cv, vld1q_f64(dw + p)));
    vst1q_f64(x + p, vaddq_f64(xv, inc));
  }
}

}  // namespace

const KernelTable neon_table = {affine_apply, gemm_shared_lane, gemm_lane_lane, add, sub, affine_scalar_step};

}  // namespace sdelab::kernels::detail
