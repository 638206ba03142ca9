#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "gdp/simd/kernels.hpp"

namespace gdp::simd {
namespace {

const KernelTable* pick_default() {
  if (const char* env = std::getenv("GDP_SIMD"); env != nullptr && std::string(env) == "scalar")
    return &scalar_kernels();
  if (const KernelTable* t = avx2_kernels()) return t;
  if (const KernelTable* t = neon_kernels()) return t;
  return &scalar_kernels();
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> table{pick_default()};
  return table;
}

}  // namespace

const KernelTable& active() { return *current().load(std::memory_order_relaxed); }

void select(Isa isa) {
  const KernelTable* t = nullptr;
  switch (isa) {
    case Isa::Scalar: t = &scalar_kernels(); break;
    case Isa::Avx2: t = avx2_kernels(); break;
    case Isa::Neon: t = neon_kernels(); break;
  }
  if (t == nullptr) throw std::runtime_error("SIMD variant not available: " + std::string(isa_name(isa)));
  current().store(t, std::memory_order_relaxed);
}

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::Scalar: return "scalar";
    case Isa::Avx2: return "avx2";
    case Isa::Neon: return "neon";
  }
  return "unknown";
}

}  // namespace gdp::simd
