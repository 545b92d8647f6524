// Compiled with -mavx2 (no FMA: fused products would break bit-equivalence
// with the scalar path).
#include <immintrin.h>

#include "headprune/kernels.hpp"

namespace headprune::kernels {
namespace {

double horizontal(__m256d acc) {
  alignas(32) double lane[4];
  _mm256_store_pd(lane, acc);
  return (lane[0] + lane[1]) + (lane[2] + lane[3]);
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  const std::size_t blocks = n / 4 * 4;
  for (std::size_t i = 0; i < blocks; i += 4) {
    const __m256d prod = _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
    acc = _mm256_add_pd(acc, prod);
  }
  double total = horizontal(acc);
  for (std::size_t i = blocks; i < n; ++i) total += a[i] * b[i];
  return total;
}

double sum_avx2(const double* a, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  const std::size_t blocks = n / 4 * 4;
  for (std::size_t i = 0; i < blocks; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(a + i));
  double total = horizontal(acc);
  for (std::size_t i = blocks; i < n; ++i) total += a[i];
  return total;
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  const std::size_t blocks = n / 4 * 4;
  for (std::size_t i = 0; i < blocks; i += 4) {
    const __m256d prod = _mm256_mul_pd(va, _mm256_loadu_pd(x + i));
    _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), prod));
  }
  for (std::size_t i = blocks; i < n; ++i) y[i] += alpha * x[i];
}

void add_avx2(const double* a, const double* b, double* out, std::size_t n) {
  const std::size_t blocks = n / 4 * 4;
  for (std::size_t i = 0; i < blocks; i += 4)
    _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (std::size_t i = blocks; i < n; ++i) out[i] = a[i] + b[i];
}

void mul_avx2(const double* a, const double* b, double* out, std::size_t n) {
  const std::size_t blocks = n / 4 * 4;
  for (std::size_t i = 0; i < blocks; i += 4)
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (std::size_t i = blocks; i < n; ++i) out[i] = a[i] * b[i];
}

void scale_avx2(double alpha, const double* a, double* out, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  const std::size_t blocks = n / 4 * 4;
  for (std::size_t i = 0; i < blocks; i += 4)
    _mm256_storeu_pd(out + i, _mm256_mul_pd(va, _mm256_loadu_pd(a + i)));
  for (std::size_t i = blocks; i < n; ++i) out[i] = alpha * a[i];
}

void adam_avx2(double* param, const double* grad, double* m, double* v, std::size_t n,
               double lr, double beta1, double beta2, double eps, double bias1, double bias2) {
  const double one_minus_b1 = 1.0 - beta1;
  const double one_minus_b2 = 1.0 - beta2;
  const __m256d vb1 = _mm256_set1_pd(beta1);
  const __m256d vb2 = _mm256_set1_pd(beta2);
  const __m256d vc1 = _mm256_set1_pd(one_minus_b1);
  const __m256d vc2 = _mm256_set1_pd(one_minus_b2);
  const __m256d vbias1 = _mm256_set1_pd(bias1);
  const __m256d vbias2 = _mm256_set1_pd(bias2);
  const __m256d vlr = _mm256_set1_pd(lr);
  const __m256d veps = _mm256_set1_pd(eps);
  const std::size_t blocks = n / 4 * 4;
  for (std::size_t i = 0; i < blocks; i += 4) {
    const __m256d g = _mm256_loadu_pd(grad + i);
    const __m256d mi = _mm256_add_pd(_mm256_mul_pd(vb1, _mm256_loadu_pd(m + i)),
                                     _mm256_mul_pd(vc1, g));
    const __m256d vi = _mm256_add_pd(_mm256_mul_pd(vb2, _mm256_loadu_pd(v + i)),
                                     _mm256_mul_pd(vc2, _mm256_mul_pd(g, g)));
    _mm256_storeu_pd(m + i, mi);
    _mm256_storeu_pd(v + i, vi);
    const __m256d m_hat = _mm256_div_pd(mi, vbias1);
    const __m256d v_hat = _mm256_div_pd(vi, vbias2);
    const __m256d step = _mm256_div_pd(_mm256_mul_pd(vlr, m_hat),
                                       _mm256_add_pd(_mm256_sqrt_pd(v_hat), veps));
    _mm256_storeu_pd(param + i, _mm256_sub_pd(_mm256_loadu_pd(param + i), step));
  }
  if (blocks < n) {
    scalar_table().adam(param + blocks, grad + blocks, m + blocks, v + blocks, n - blocks, lr,
                        beta1, beta2, eps, bias1, bias2);
  }
}

}  // namespace

const KernelTable* avx2_table() {
  static const KernelTable table{Isa::avx2, dot_avx2,  sum_avx2,   axpy_avx2,
                                 add_avx2,  mul_avx2,  scale_avx2, adam_avx2};
  return &table;
}

}  // namespace headprune::kernels
