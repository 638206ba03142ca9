#include "gdp/simd/kernels.hpp"

namespace gdp::simd {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void gemm_nn_scalar(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                    double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_nt_scalar(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                    double* c) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) c[i * n + j] += dot_scalar(a + i * k, b + j * k, k);
}

void gemm_tn_scalar(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                    double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      double* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace

const KernelTable& scalar_kernels() {
  static const KernelTable table{Isa::Scalar, dot_scalar, axpy_scalar, gemm_nn_scalar, gemm_nt_scalar,
                                 gemm_tn_scalar};
  return table;
}

}  // namespace gdp::simd
