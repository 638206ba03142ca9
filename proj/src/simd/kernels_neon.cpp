#include "gdp/simd/kernels.hpp"

#if defined(__aarch64__)
#include <arm_neon.h>

namespace gdp::simd {
namespace {

double dot_neon(const double* a, const double* b, std::size_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc0 = vfmaq_f64(acc0, vld1q_f64(a + i), vld1q_f64(b + i));
    acc1 = vfmaq_f64(acc1, vld1q_f64(a + i + 2), vld1q_f64(b + i + 2));
  }
  double s = vaddvq_f64(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy_neon(double alpha, const double* x, double* y, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), va, vld1q_f64(x + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void gemm_nn_neon(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                  double* c) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av != 0.0) axpy_neon(av, b + p * n, c + i * n, n);
    }
}

void gemm_nt_neon(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                  double* c) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) c[i * n + j] += dot_neon(a + i * k, b + j * k, k);
}

void gemm_tn_neon(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                  double* c) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av != 0.0) axpy_neon(av, b + i * n, c + p * n, n);
    }
}

}  // namespace

const KernelTable* neon_kernels() {
  static const KernelTable table{Isa::Neon, dot_neon, axpy_neon, gemm_nn_neon, gemm_nt_neon, gemm_tn_neon};
  return &table;
}

}  // namespace gdp::simd

#else

namespace gdp::simd {
const KernelTable* neon_kernels() { return nullptr; }
}  // namespace gdp::simd

#endif
