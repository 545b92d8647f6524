#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "headprune/kernels.hpp"

namespace headprune::kernels {
namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
  return __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}

const KernelTable* initial_table() {
  // HEADPRUNE_ISA=scalar forces the reference path.
  const char* forced = std::getenv("HEADPRUNE_ISA");
  if (forced != nullptr && std::string(forced) == "scalar") return &scalar_table();
  if (avx2_table() != nullptr && cpu_has_avx2()) return avx2_table();
  return &scalar_table();
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> table{initial_table()};
  return table;
}

}  // namespace

bool isa_available(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return true;
    case Isa::avx2:
      return avx2_table() != nullptr && cpu_has_avx2();
  }
  return false;
}

Isa active_isa() { return active().isa; }

void set_isa(Isa isa) {
  if (!isa_available(isa))
    throw std::invalid_argument("kernel ISA not available: " + std::string(isa_name(isa)));
  current().store(isa == Isa::avx2 ? avx2_table() : &scalar_table());
}

std::string_view isa_name(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

const KernelTable& active() { return *current().load(std::memory_order_relaxed); }

void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n, bool accumulate) {
  const KernelTable& t = active();
  for (std::size_t i = 0; i < m; ++i) {
    double* row = c + i * n;
    if (!accumulate) std::fill(row, row + n, 0.0);
    const double* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) t.axpy(arow[p], b + p * n, row, n);
  }
}

void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n, bool accumulate) {
  const KernelTable& t = active();
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* row = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double d = t.dot(arow, b + j * k, k);
      row[j] = accumulate ? row[j] + d : d;
    }
  }
}

void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n, bool accumulate) {
  const KernelTable& t = active();
  if (!accumulate) std::fill(c, c + m * n, 0.0);
  for (std::size_t p = 0; p < k; ++p) {
    const double* arow = a + p * m;
    const double* brow = b + p * n;
    for (std::size_t i = 0; i < m; ++i) t.axpy(arow[i], brow, c + i * n, n);
  }
}

}  // namespace headprune::kernels
