// Compiled with -mavx2 -mfma; only reached after a runtime CPU check.
#include "gdp/simd/kernels.hpp"

#if defined(__x86_64__) && defined(GDP_HAVE_AVX2)
#include <immintrin.h>

namespace gdp::simd {
namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

// Keeps a 1x16 strip of C in four registers across the whole k loop.
void gemm_nn_avx2(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                  double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    std::size_t j = 0;
    for (; j + 16 <= n; j += 16) {
      __m256d c0 = _mm256_loadu_pd(crow + j);
      __m256d c1 = _mm256_loadu_pd(crow + j + 4);
      __m256d c2 = _mm256_loadu_pd(crow + j + 8);
      __m256d c3 = _mm256_loadu_pd(crow + j + 12);
      for (std::size_t p = 0; p < k; ++p) {
        const __m256d av = _mm256_set1_pd(arow[p]);
        const double* brow = b + p * n + j;
        c0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(brow), c0);
        c1 = _mm256_fmadd_pd(av, _mm256_loadu_pd(brow + 4), c1);
        c2 = _mm256_fmadd_pd(av, _mm256_loadu_pd(brow + 8), c2);
        c3 = _mm256_fmadd_pd(av, _mm256_loadu_pd(brow + 12), c3);
      }
      _mm256_storeu_pd(crow + j, c0);
      _mm256_storeu_pd(crow + j + 4, c1);
      _mm256_storeu_pd(crow + j + 8, c2);
      _mm256_storeu_pd(crow + j + 12, c3);
    }
    for (; j + 4 <= n; j += 4) {
      __m256d c0 = _mm256_loadu_pd(crow + j);
      for (std::size_t p = 0; p < k; ++p)
        c0 = _mm256_fmadd_pd(_mm256_set1_pd(arow[p]), _mm256_loadu_pd(b + p * n + j), c0);
      _mm256_storeu_pd(crow + j, c0);
    }
    for (; j < n; ++j) {
      double s = crow[j];
      for (std::size_t p = 0; p < k; ++p) s += arow[p] * b[p * n + j];
      crow[j] = s;
    }
  }
}

void gemm_nt_avx2(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                  double* c) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) c[i * n + j] += dot_avx2(a + i * k, b + j * k, k);
}

void gemm_tn_avx2(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                  double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      axpy_avx2(av, brow, c + p * n, n);
    }
  }
}

}  // namespace

const KernelTable* avx2_kernels() {
  static const KernelTable table{Isa::Avx2, dot_avx2, axpy_avx2, gemm_nn_avx2, gemm_nt_avx2, gemm_tn_avx2};
  __builtin_cpu_init();
  if (!__builtin_cpu_supports("avx2") || !__builtin_cpu_supports("fma")) return nullptr;
  return &table;
}

}  // namespace gdp::simd

#else

namespace gdp::simd {
const KernelTable* avx2_kernels() { return nullptr; }
}  // namespace gdp::simd

#endif
