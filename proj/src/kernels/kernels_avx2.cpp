#include <immintrin.h>

#include "sdelab/kernels.hpp"

namespace sdelab::kernels::detail {
namespace {

void affine_apply(std::size_t n, std::size_t lanes, const double* sa, const double* sb, const double* w,
                  const double* x, double* out, bool add_input) {
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double* o = out + (i * n + j) * lanes;
      const double* xi = x + (i * n + j) * lanes;
      for (std::size_t p = 0; p < lanes; p += 4) {
        const __m256d wv = _mm256_loadu_pd(w + p);
        __m256d coef = _mm256_add_pd(_mm256_set1_pd(sa[i * n]), _mm256_mul_pd(_mm256_set1_pd(sb[i * n]), wv));
        __m256d acc = _mm256_mul_pd(coef, _mm256_loadu_pd(x + j * lanes + p));
        for (std::size_t k = 1; k < n; ++k) {
          coef = _mm256_add_pd(_mm256_set1_pd(sa[i * n + k]), _mm256_mul_pd(_mm256_set1_pd(sb[i * n + k]), wv));
          acc = _mm256_add_pd(acc, _mm256_mul_pd(coef, _mm256_loadu_pd(x + (k * n + j) * lanes + p)));
        }
        if (add_input) acc = _mm256_add_pd(_mm256_loadu_pd(xi + p), acc);
        _mm256_storeu_pd(o + p, acc);
      }
    }
  }
}

void gemm_shared_lane(std::size_t n, std::size_t lanes, const double* s, const double* x, double* out) {
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double* o = out + (i * n + j) * lanes;
      for (std::size_t p = 0; p < lanes; p += 4) {
        __m256d acc = _mm256_mul_pd(_mm256_set1_pd(s[i * n]), _mm256_loadu_pd(x + j * lanes + p));
        for (std::size_t k = 1; k < n; ++k)
          acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_set1_pd(s[i * n + k]),
                                                 _mm256_loadu_pd(x + (k * n + j) * lanes + p)));
        _mm256_storeu_pd(o + p, acc);
      }
    }
  }
}

void gemm_lane_lane(std::size_t n, std::size_t lanes, const double* a, const double* b, double* out) {
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double* o = out + (i * n + j) * lanes;
      for (std::size_t p = 0; p < lanes; p += 4) {
        __m256d acc = _mm256_mul_pd(_mm256_loadu_pd(a + (i * n) * lanes + p), _mm256_loadu_pd(b + j * lanes + p));
        for (std::size_t k = 1; k < n; ++k)
          acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_loadu_pd(a + (i * n + k) * lanes + p),
                                                 _mm256_loadu_pd(b + (k * n + j) * lanes + p)));
        _mm256_storeu_pd(o + p, acc);
      }
    }
  }
}

void add(std::size_t count, const double* a, const double* b, double* out) {
  std::size_t i = 0;
  for (; i + 4 <= count; i += 4)
    _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < count; ++i) out[i] = a[i] + b[i];
}

void sub(std::size_t count, const double* a, const double* b, double* out) {
  std::size_t i = 0;
  for (; i + 4 <= count; i += 4)
    _mm256_storeu_pd(out + i, _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < count; ++i) out[i] = a[i] - b[i];
}

void affine_scalar_step(std::size_t lanes, double lam_dt, double c, const double* dw, double* x) {
  const __m256d lv = _mm256_set1_pd(lam_dt);
  const __m256d cv = _mm256_set1_pd(c);
  for (std::size_t p = 0; p < lanes; p += 4) {
    const __m256d xv = _mm256_loadu_pd(x + p);
    const __m256d inc = _mm256_add_pd(_mm256_mul_pd(lv, xv), _mm256_mul_pd(cv, _mm256_loadu_pd(dw + p)));
    _mm256_storeu_pd(x + p, _mm256_add_pd(xv, inc));
  }
}

}  // namespace

const KernelTable avx2_table = {affine_apply, gemm_shared_lane, gemm_lane_lane, add, sub, affine_scalar_step};

}  // namespace sdelab::kernels::detail
