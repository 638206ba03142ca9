#include <array>
#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "gdp/simd/kernels.hpp"

using namespace gdp::simd;

namespace {

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

void check_close(const std::vector<double>& a, const std::vector<double>& b, double tol) {
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) <= tol * (1.0 + std::abs(a[i])));
}

std::vector<const KernelTable*> vector_tables() {
  std::vector<const KernelTable*> out;
  if (auto* t = avx2_kernels()) out.push_back(t);
  if (auto* t = neon_kernels()) out.push_back(t);
  return out;
}

}  // namespace

TEST_CASE("scalar kernels match hand values") {
  const auto& s = scalar_kernels();
  const double a[] = {1, 2, 3};
  const double b[] = {4, 5, 6};
  CHECK(s.dot(a, b, 3) == 32.0);
  double y[] = {1, 1, 1};
  s.axpy(2.0, a, y, 3);
  CHECK(y[2] == 7.0);
  // [1 2; 3 4] * [5 6; 7 8] = [19 22; 43 50]
  const double A[] = {1, 2, 3, 4}, B[] = {5, 6, 7, 8};
  double C[4] = {};
  s.gemm_nn(2, 2, 2, A, B, C);
  CHECK(C[0] == 19.0);
  CHECK(C[3] == 50.0);
  double D[4] = {};
  s.gemm_nt(2, 2, 2, A, B, D);  // A * B^T = [17 23; 39 53]
  CHECK(D[1] == 23.0);
  double E[4] = {};
  s.gemm_tn(2, 2, 2, A, B, E);  // A^T * B = [26 30; 38 44]
  CHECK(E[2] == 38.0);
}

TEST_CASE("vector kernels are equivalent to the scalar reference") {
  const auto tables = vector_tables();
  if (tables.empty()) MESSAGE("no vector ISA on this host; only the scalar path is exercised");
  std::mt19937_64 rng(7);
  const auto& ref = scalar_kernels();
  for (const KernelTable* t : tables) {
    CAPTURE(isa_name(t->isa));
    for (std::size_t n : {0u, 1u, 3u, 4u, 7u, 8u, 15u, 16u, 17u, 33u, 100u}) {
      auto a = random_vec(n, rng), b = random_vec(n, rng);
      CHECK(std::abs(t->dot(a.data(), b.data(), n) - ref.dot(a.data(), b.data(), n)) < 1e-12);
      auto y1 = random_vec(n, rng);
      auto y2 = y1;
      t->axpy(0.37, a.data(), y1.data(), n);
      ref.axpy(0.37, a.data(), y2.data(), n);
      check_close(y1, y2, 1e-14);
    }
    const std::array<std::array<std::size_t, 3>, 6> sizes{{{1, 1, 1}, {3, 5, 7}, {4, 16, 9}, {5, 21, 3}, {17, 33, 12}, {2, 64, 64}}};
    for (auto [m, n, k] : sizes) {
      CAPTURE(m);
      CAPTURE(n);
      CAPTURE(k);
      auto A = random_vec(m * k, rng), B = random_vec(k * n, rng), Bt = random_vec(n * k, rng), A2 = random_vec(m * n, rng);
      auto c0 = random_vec(m * n, rng);
      auto c1 = c0;
      t->gemm_nn(m, n, k, A.data(), B.data(), c0.data());
      ref.gemm_nn(m, n, k, A.data(), B.data(), c1.data());
      check_close(c0, c1, 1e-12);
      auto d0 = random_vec(m * n, rng);
      auto d1 = d0;
      t->gemm_nt(m, n, k, A.data(), Bt.data(), d0.data());
      ref.gemm_nt(m, n, k, A.data(), Bt.data(), d1.data());
      check_close(d0, d1, 1e-12);
      auto e0 = random_vec(k * n, rng);
      auto e1 = e0;
      t->gemm_tn(m, n, k, A.data(), A2.data(), e0.data());
      ref.gemm_tn(m, n, k, A.data(), A2.data(), e1.data());
      check_close(e0, e1, 1e-12);
    }
  }
}

TEST_CASE("dispatch can be forced to the scalar path and back") {
  const Isa original = active().isa;
  select(Isa::Scalar);
  CHECK(active().isa == Isa::Scalar);
  select(original);
  CHECK(active().isa == original);
}
