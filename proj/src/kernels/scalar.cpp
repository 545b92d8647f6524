#include <cmath>

#include "headprune/kernels.hpp"

namespace headprune::kernels {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double lane[4] = {0.0, 0.0, 0.0, 0.0};
  const std::size_t blocks = n / 4 * 4;
  for (std::size_t i = 0; i < blocks; i += 4) {
    lane[0] += a[i] * b[i];
    lane[1] += a[i + 1] * b[i + 1];
    lane[2] += a[i + 2] * b[i + 2];
    lane[3] += a[i + 3] * b[i + 3];
  }
  double total = (lane[0] + lane[1]) + (lane[2] + lane[3]);
  for (std::size_t i = blocks; i < n; ++i) total += a[i] * b[i];
  return total;
}

double sum_scalar(const double* a, std::size_t n) {
  double lane[4] = {0.0, 0.0, 0.0, 0.0};
  const std::size_t blocks = n / 4 * 4;
  for (std::size_t i = 0; i < blocks; i += 4) {
    lane[0] += a[i];
    lane[1] += a[i + 1];
    lane[2] += a[i + 2];
    lane[3] += a[i + 3];
  }
  double total = (lane[0] + lane[1]) + (lane[2] + lane[3]);
  for (std::size_t i = blocks; i < n; ++i) total += a[i];
  return total;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void add_scalar(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void mul_scalar(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void scale_scalar(double alpha, const double* a, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = alpha * a[i];
}

void adam_scalar(double* param, const double* grad, double* m, double* v, std::size_t n,
                 double lr, double beta1, double beta2, double eps, double bias1,
                 double bias2) {
  const double one_minus_b1 = 1.0 - beta1;
  const double one_minus_b2 = 1.0 - beta2;
  for (std::size_t i = 0; i < n; ++i) {
    const double g = grad[i];
    m[i] = beta1 * m[i] + one_minus_b1 * g;
    v[i] = beta2 * v[i] + one_minus_b2 * (g * g);
    const double m_hat = m[i] / bias1;
    const double v_hat = v[i] / bias2;
    param[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
  }
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable table{Isa::scalar, dot_scalar,   sum_scalar,   axpy_scalar,
                                 add_scalar,  mul_scalar,   scale_scalar, adam_scalar};
  return table;
}

}  // namespace headprune::kernels
