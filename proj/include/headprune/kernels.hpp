#pragma once
// Dense double-precision inner loops with a scalar reference path and an AVX2
// path selected at runtime. Every AVX2 kernel reproduces the scalar kernel's
// operation order, so both paths are bit-identical.

#include <cstddef>
#include <string_view>

namespace headprune::kernels {

enum class Isa { scalar, avx2 };

struct KernelTable {
  Isa isa;
  // 4-lane striped reduction: lane i%4 over full blocks, then
  // ((l0 + l1) + (l2 + l3)), then the tail added in order.
  double (*dot)(const double* a, const double* b, std::size_t n);
  double (*sum)(const double* a, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // out = a + b, out = a * b, out = alpha * a (out may alias an input)
  void (*add)(const double* a, const double* b, double* out, std::size_t n);
  void (*mul)(const double* a, const double* b, double* out, std::size_t n);
  void (*scale)(double alpha, const double* a, double* out, std::size_t n);
  // One bias-corrected Adam update over a contiguous buffer.
  void (*adam)(double* param, const double* grad, double* m, double* v,
               std::size_t n, double lr, double beta1, double beta2,
               double eps, double bias1, double bias2);
};

const KernelTable& scalar_table();
// nullptr when the binary was built without AVX2 support.
const KernelTable* avx2_table();

bool isa_available(Isa isa);
Isa active_isa();
// Throws std::invalid_argument if the ISA is not available on this machine.
void set_isa(Isa isa);
std::string_view isa_name(Isa isa);

const KernelTable& active();

inline double dot(const double* a, const double* b, std::size_t n) { return active().dot(a, b, n); }
inline double sum(const double* a, std::size_t n) { return active().sum(a, n); }
inline void axpy(double alpha, const double* x, double* y, std::size_t n) { active().axpy(alpha, x, y, n); }
inline void add(const double* a, const double* b, double* out, std::size_t n) { active().add(a, b, out, n); }
inline void mul(const double* a, const double* b, double* out, std::size_t n) { active().mul(a, b, out, n); }
inline void scale(double alpha, const double* a, double* out, std::size_t n) { active().scale(alpha, a, out, n); }

// Row-major GEMM variants built on dot/axpy. When accumulate is false the
// output is overwritten.
//   nn: C[m,n] (+)= A[m,k] * B[k,n]
//   nt: C[m,n] (+)= A[m,k] * B[n,k]^T
//   tn: C[m,n] (+)= A[k,m]^T * B[k,n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n, bool accumulate);
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n, bool accumulate);
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n, bool accumulate);

}  // namespace headprune::kernels
