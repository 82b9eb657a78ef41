#include "sdelab/kernels.hpp"

namespace sdelab::kernels::detail {
namespace {

void affine_apply(std::size_t n, std::size_t lanes, const double* sa, const double* sb, const double* w,
                  const double* x, double* out, bool add_input) {
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double* o = out + (i * n + j) * lanes;
      const double* xi = x + (i * n + j) * lanes;
      for (std::size_t p = 0; p < lanes; ++p) {
        double acc = (sa[i * n] + sb[i * n] * w[p]) * x[j * lanes + p];
        for (std::size_t k = 1; k < n; ++k)
          acc = acc + (sa[i * n + k] + sb[i * n + k] * w[p]) * x[(k * n + j) * lanes + p];
        o[p] = add_input ? xi[p] + acc : acc;
      }
    }
  }
}

void gemm_shared_lane(std::size_t n, std::size_t lanes, const double* s, const double* x, double* out) {
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double* o = out + (i * n + j) * lanes;
      for (std::size_t p = 0; p < lanes; ++p) {
        double acc = s[i * n] * x[j * lanes + p];
        for (std::size_t k = 1; k < n; ++k) acc = acc + s[i * n + k] * x[(k * n + j) * lanes + p];
        o[p] = acc;
      }
    }
  }
}

void gemm_lane_lane(std::size_t n, std::size_t lanes, const double* a, const double* b, double* out) {
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double* o = out + (i * n + j) * lanes;
      for (std::size_t p = 0; p < lanes; ++p) {
        double acc = a[(i * n) * lanes + p] * b[j * lanes + p];
        for (std::size_t k = 1; k < n; ++k) acc = acc + a[(i * n + k) * lanes + p] * b[(k * n + j) * lanes + p];
        o[p] = acc;
      }
    }
  }
}

void add(std::size_t count, const double* a, const double* b, double* out) {
  for (std::size_t i = 0; i < count; ++i) out[i] = a[i] + b[i];
}

void sub(std::size_t count, const double* a, const double* b, double* out) {
  for (std::size_t i = 0; i < count; ++i) out[i] = a[i] - b[i];
}

void affine_scalar_step(std::size_t lanes, double lam_dt, double c, const double* dw, double* x) {
  for (std::size_t p = 0; p < lanes; ++p) x[p] = x[p] + (lam_dt * x[p] + c * dw[p]);
}

}  // namespace

const KernelTable scalar_table = {affine_apply, gemm_shared_lane, gemm_lane_lane, add, sub, affine_scalar_step};

}  // namespace sdelab::kernels::detail
