#pragma once

// Dense double-precision inner loops used by the autograd ops.
//
// Every kernel has a scalar reference implementation and, where the host
// supports it, a vectorized variant (AVX2+FMA on x86-64, NEON on AArch64).
// The active table is chosen once at startup; GDP_SIMD=scalar forces the
// reference path.

#include <cstddef>
#include <string_view>

namespace gdp::simd {

enum class Isa { Scalar, Avx2, Neon };

struct KernelTable {
  Isa isa;
  // sum_i a[i]*b[i]
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // C[m,n] += A[m,k] * B[k,n]   (row-major, dense)
  void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k,
                  const double* a, const double* b, double* c);
  // C[m,n] += A[m,k] * B[n,k]^T
  void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k,
                  const double* a, const double* b, double* c);
  // C[k,n] += A[m,k]^T * B[m,n]
  void (*gemm_tn)(std::size_t m, std::size_t n, std::size_t k,
                  const double* a, const double* b, double* c);
};

const KernelTable& scalar_kernels();
// Returns nullptr when the variant was not compiled in or the CPU lacks it.
const KernelTable* avx2_kernels();
const KernelTable* neon_kernels();

// The table selected for this process.
const KernelTable& active();

// Overrides the selection (tests and benchmarks).
void select(Isa isa);

std::string_view isa_name(Isa isa);

inline double dot(const double* a, const double* b, std::size_t n) { return active().dot(a, b, n); }
inline void axpy(double alpha, const double* x, double* y, std::size_t n) { active().axpy(alpha, x, y, n); }
inline void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c) {
  active().gemm_nn(m, n, k, a, b, c);
}
inline void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c) {
  active().gemm_nt(m, n, k, a, b, c);
}
inline void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c) {
  active().gemm_tn(m, n, k, a, b, c);
}

}  // namespace gdp::simd
