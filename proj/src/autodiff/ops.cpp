#include <algorithm>
#include <cmath>
#include <numbers>

#include "headprune/autodiff.hpp"
#include "headprune/kernels.hpp"

namespace headprune::ad {
namespace {

[[noreturn]] void mismatch(OpKind kind, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op_name(kind)) + ": shape mismatch " + shape_string(a) + " vs " +
                   shape_string(b));
}

void require_rank(OpKind kind, const Tensor& t, std::size_t rank) {
  if (t.rank() != rank)
    throw ShapeError(std::string(op_name(kind)) + ": expected rank " + std::to_string(rank) +
                     ", got shape " + shape_string(t.shape));
}

Tape& tape_of(Var a) {
  if (a.tape() == nullptr) throw std::invalid_argument("operation on an unbound Var");
  return *a.tape();
}

void same_tape(Var a, Var b) {
  if (a.tape() != b.tape()) throw std::invalid_argument("operands live on different tapes");
}

constexpr double kMaskedLogit = -1e30;

}  // namespace

Var matmul(Var a, Var b) {
  same_tape(a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  require_rank(OpKind::matmul, x, 2);
  require_rank(OpKind::matmul, y, 2);
  if (x.dim(1) != y.dim(0)) mismatch(OpKind::matmul, x.shape, y.shape);
  const std::size_t m = x.dim(0), k = x.dim(1), n = y.dim(1);
  Tensor out({m, n});
  kernels::gemm_nn(x.data.data(), y.data.data(), out.data.data(), m, k, n, false);
  const std::size_t ia = a.id(), ib = b.id();
  return tape_of(a).record(OpKind::matmul, {ia, ib}, std::move(out),
                           [ia, ib, m, k, n](Tape& t, std::size_t self) {
                             const double* dc = t.grad(self).data();
                             if (double* da = t.accumulate(ia))
                               kernels::gemm_nt(dc, t.value(ib).data.data(), da, m, n, k, true);
                             if (double* db = t.accumulate(ib))
                               kernels::gemm_tn(t.value(ia).data.data(), dc, db, k, m, n, true);
                           });
}

Var add(Var a, Var b) {
  same_tape(a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  if (x.shape != y.shape) mismatch(OpKind::add, x.shape, y.shape);
  Tensor out(x.shape);
  kernels::add(x.data.data(), y.data.data(), out.data.data(), out.size());
  const std::size_t ia = a.id(), ib = b.id();
  return tape_of(a).record(OpKind::add, {ia, ib}, std::move(out), [ia, ib](Tape& t, std::size_t self) {
    const auto& dc = t.grad(self);
    if (double* da = t.accumulate(ia)) kernels::add(da, dc.data(), da, dc.size());
    if (double* db = t.accumulate(ib)) kernels::add(db, dc.data(), db, dc.size());
  });
}

Var add_bias(Var a, Var bias) {
  same_tape(a, bias);
  const Tensor& x = a.value();
  const Tensor& b = bias.value();
  require_rank(OpKind::add_bias, x, 2);
  require_rank(OpKind::add_bias, b, 1);
  if (x.dim(1) != b.dim(0)) mismatch(OpKind::add_bias, x.shape, b.shape);
  const std::size_t m = x.dim(0), n = x.dim(1);
  Tensor out(x.shape);
  for (std::size_t i = 0; i < m; ++i)
    kernels::add(x.data.data() + i * n, b.data.data(), out.data.data() + i * n, n);
  const std::size_t ia = a.id(), ib = bias.id();
  return tape_of(a).record(OpKind::add_bias, {ia, ib}, std::move(out),
                           [ia, ib, m, n](Tape& t, std::size_t self) {
                             const double* dc = t.grad(self).data();
                             if (double* da = t.accumulate(ia)) kernels::add(da, dc, da, m * n);
                             if (double* db = t.accumulate(ib))
                               for (std::size_t i = 0; i < m; ++i) kernels::add(db, dc + i * n, db, n);
                           });
}

Var mul(Var a, Var b) {
  same_tape(a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  if (x.shape != y.shape) mismatch(OpKind::mul, x.shape, y.shape);
  Tensor out(x.shape);
  kernels::mul(x.data.data(), y.data.data(), out.data.data(), out.size());
  const std::size_t ia = a.id(), ib = b.id();
  return tape_of(a).record(OpKind::mul, {ia, ib}, std::move(out), [ia, ib](Tape& t, std::size_t self) {
    const auto& dc = t.grad(self);
    const std::size_t n = dc.size();
    std::vector<double> tmp(n);
    if (double* da = t.accumulate(ia)) {
      kernels::mul(dc.data(), t.value(ib).data.data(), tmp.data(), n);
      kernels::add(da, tmp.data(), da, n);
    }
    if (double* db = t.accumulate(ib)) {
      kernels::mul(dc.data(), t.value(ia).data.data(), tmp.data(), n);
      kernels::add(db, tmp.data(), db, n);
    }
  });
}

Var scale(Var a, double c) {
  const Tensor& x = a.value();
  Tensor out(x.shape);
  kernels::scale(c, x.data.data(), out.data.data(), out.size());
  const std::size_t ia = a.id();
  return tape_of(a).record(OpKind::scale, {ia}, std::move(out), [ia, c](Tape& t, std::size_t self) {
    const auto& dc = t.grad(self);
    if (double* da = t.accumulate(ia)) kernels::axpy(c, dc.data(), da, dc.size());
  });
}

Var relu(Var a) {
  const Tensor& x = a.value();
  Tensor out(x.shape);
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = x.data[i] > 0.0 ? x.data[i] : 0.0;
  const std::size_t ia = a.id();
  return tape_of(a).record(OpKind::relu, {ia}, std::move(out), [ia](Tape& t, std::size_t self) {
    const auto& dc = t.grad(self);
    const auto& x = t.value(ia).data;
    if (double* da = t.accumulate(ia))
      for (std::size_t i = 0; i < dc.size(); ++i)
        if (x[i] > 0.0) da[i] += dc[i];
  });
}

Var gelu(Var a) {
  constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double kA = 0.044715;
  const Tensor& x = a.value();
  Tensor out(x.shape);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = x.data[i];
    out.data[i] = 0.5 * v * (1.0 + std::tanh(kC * (v + kA * v * v * v)));
  }
  const std::size_t ia = a.id();
  return tape_of(a).record(OpKind::gelu, {ia}, std::move(out), [ia](Tape& t, std::size_t self) {
    const auto& dc = t.grad(self);
    const auto& x = t.value(ia).data;
    double* da = t.accumulate(ia);
    if (da == nullptr) return;
    for (std::size_t i = 0; i < dc.size(); ++i) {
      const double v = x[i];
      const double th = std::tanh(kC * (v + kA * v * v * v));
      const double d = 0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * kC * (1.0 + 3.0 * kA * v * v);
      da[i] += dc[i] * d;
    }
  });
}

Var softmax_rows(Var a) {
  const Tensor& x = a.value();
  if (x.rank() == 0 || x.size() == 0) throw ShapeError("softmax_rows: empty input " + shape_string(x.shape));
  const std::size_t n = x.shape.back();
  const std::size_t rows = x.size() / n;
  Tensor out(x.shape);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.data.data() + r * n;
    double* o = out.data.data() + r * n;
    const double mx = *std::max_element(in, in + n);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      o[j] = std::exp(in[j] - mx);
      total += o[j];
    }
    for (std::size_t j = 0; j < n; ++j) o[j] /= total;
  }
  const std::size_t ia = a.id();
  return tape_of(a).record(OpKind::softmax_rows, {ia}, std::move(out),
                           [ia, rows, n](Tape& t, std::size_t self) {
                             double* da = t.accumulate(ia);
                             if (da == nullptr) return;
                             const double* dy = t.grad(self).data();
                             const double* y = t.value(self).data.data();
                             for (std::size_t r = 0; r < rows; ++r) {
                               const double* yr = y + r * n;
                               const double* dyr = dy + r * n;
                               const double inner = kernels::dot(yr, dyr, n);
                               for (std::size_t j = 0; j < n; ++j)
                                 da[r * n + j] += yr[j] * (dyr[j] - inner);
                             }
                           });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  same_tape(x, gamma);
  same_tape(x, beta);
  const Tensor& in = x.value();
  require_rank(OpKind::layer_norm, in, 2);
  const std::size_t m = in.dim(0), n = in.dim(1);
  if (gamma.value().shape != Shape{n}) mismatch(OpKind::layer_norm, in.shape, gamma.value().shape);
  if (beta.value().shape != Shape{n}) mismatch(OpKind::layer_norm, in.shape, beta.value().shape);
  Tensor out(in.shape);
  std::vector<double> xhat(m * n);
  std::vector<double> rstd(m);
  const double* g = gamma.value().data.data();
  const double* b = beta.value().data.data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = in.data.data() + i * n;
    const double mean = kernels::sum(row, n) / static_cast<double>(n);
    double* xh = xhat.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) xh[j] = row[j] - mean;
    const double var = kernels::dot(xh, xh, n) / static_cast<double>(n);
    rstd[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      xh[j] *= rstd[i];
      out.data[i * n + j] = g[j] * xh[j] + b[j];
    }
  }
  const std::size_t ix = x.id(), ig = gamma.id(), ib = beta.id();
  return tape_of(x).record(
      OpKind::layer_norm, {ix, ig, ib}, std::move(out),
      [ix, ig, ib, m, n, xhat = std::move(xhat), rstd = std::move(rstd)](Tape& t, std::size_t self) {
        const double* dy = t.grad(self).data();
        const double* g = t.value(ig).data.data();
        if (double* dg = t.accumulate(ig))
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) dg[j] += dy[i * n + j] * xhat[i * n + j];
        if (double* db = t.accumulate(ib))
          for (std::size_t i = 0; i < m; ++i) kernels::add(db, dy + i * n, db, n);
        double* dx = t.accumulate(ix);
        if (dx == nullptr) return;
        std::vector<double> dxhat(n);
        const double inv_n = 1.0 / static_cast<double>(n);
        for (std::size_t i = 0; i < m; ++i) {
          const double* xh = xhat.data() + i * n;
          kernels::mul(dy + i * n, g, dxhat.data(), n);
          const double mean_d = kernels::sum(dxhat.data(), n) * inv_n;
          const double mean_dx = kernels::dot(dxhat.data(), xh, n) * inv_n;
          for (std::size_t j = 0; j < n; ++j)
            dx[i * n + j] += rstd[i] * (dxhat[j] - mean_d - xh[j] * mean_dx);
        }
      });
}

Var embed_gather(Var table, std::span<const int> ids) {
  const Tensor& tab = table.value();
  require_rank(OpKind::embed_gather, tab, 2);
  const std::size_t vocab = tab.dim(0), d = tab.dim(1);
  std::vector<int> rows(ids.begin(), ids.end());
  Tensor out({rows.size(), d});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || static_cast<std::size_t>(rows[i]) >= vocab)
      throw ShapeError("embed_gather: id " + std::to_string(rows[i]) + " out of range for table " +
                       shape_string(tab.shape));
    std::copy_n(tab.data.data() + rows[i] * d, d, out.data.data() + i * d);
  }
  const std::size_t it = table.id();
  return tape_of(table).record(OpKind::embed_gather, {it}, std::move(out),
                               [it, d, rows = std::move(rows)](Tape& t, std::size_t self) {
                                 double* dt = t.accumulate(it);
                                 if (dt == nullptr) return;
                                 const double* dy = t.grad(self).data();
                                 for (std::size_t i = 0; i < rows.size(); ++i)
                                   kernels::add(dt + rows[i] * d, dy + i * d, dt + rows[i] * d, d);
                               });
}

Var dropout(Var a, double rate, Mode mode, std::mt19937_64& rng) {
  if (!(rate >= 0.0 && rate < 1.0))
    throw std::invalid_argument("dropout: rate must lie in [0,1), got " + std::to_string(rate));
  if (mode == Mode::eval || rate == 0.0) return a;
  const Tensor& x = a.value();
  const double keep = 1.0 - rate;
  const double inv_keep = 1.0 / keep;
  std::vector<double> mask(x.size());
  for (double& m : mask) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    m = u < keep ? inv_keep : 0.0;
  }
  Tensor out(x.shape);
  kernels::mul(x.data.data(), mask.data(), out.data.data(), out.size());
  const std::size_t ia = a.id();
  return tape_of(a).record(OpKind::dropout, {ia}, std::move(out),
                           [ia, mask = std::move(mask)](Tape& t, std::size_t self) {
                             double* da = t.accumulate(ia);
                             if (da == nullptr) return;
                             const auto& dc = t.grad(self);
                             for (std::size_t i = 0; i < dc.size(); ++i) da[i] += dc[i] * mask[i];
                           });
}

Var split_heads(Var x, std::size_t batch, std::size_t seq, std::size_t heads) {
  const Tensor& in = x.value();
  require_rank(OpKind::split_heads, in, 2);
  if (heads == 0 || in.dim(0) != batch * seq || in.dim(1) % heads != 0)
    mismatch(OpKind::split_heads, in.shape, Shape{batch * seq, heads});
  const std::size_t d = in.dim(1), dh = d / heads;
  Tensor out({batch * heads, seq, dh});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t s = 0; s < seq; ++s)
      for (std::size_t h = 0; h < heads; ++h)
        std::copy_n(in.data.data() + (b * seq + s) * d + h * dh, dh,
                    out.data.data() + ((b * heads + h) * seq + s) * dh);
  const std::size_t ix = x.id();
  return tape_of(x).record(OpKind::split_heads, {ix}, std::move(out),
                           [ix, batch, seq, heads, d, dh](Tape& t, std::size_t self) {
                             double* dx = t.accumulate(ix);
                             if (dx == nullptr) return;
                             const double* dy = t.grad(self).data();
                             for (std::size_t b = 0; b < batch; ++b)
                               for (std::size_t s = 0; s < seq; ++s)
                                 for (std::size_t h = 0; h < heads; ++h)
                                   kernels::add(dx + (b * seq + s) * d + h * dh,
                                                dy + ((b * heads + h) * seq + s) * dh,
                                                dx + (b * seq + s) * d + h * dh, dh);
                           });
}

Var merge_heads(Var x, std::size_t batch, std::size_t heads) {
  const Tensor& in = x.value();
  require_rank(OpKind::merge_heads, in, 3);
  if (in.dim(0) != batch * heads) mismatch(OpKind::merge_heads, in.shape, Shape{batch, heads});
  const std::size_t seq = in.dim(1), dh = in.dim(2), d = heads * dh;
  Tensor out({batch * seq, d});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t s = 0; s < seq; ++s)
        std::copy_n(in.data.data() + ((b * heads + h) * seq + s) * dh, dh,
                    out.data.data() + (b * seq + s) * d + h * dh);
  const std::size_t ix = x.id();
  return tape_of(x).record(OpKind::merge_heads, {ix}, std::move(out),
                           [ix, batch, seq, heads, d, dh](Tape& t, std::size_t self) {
                             double* dx = t.accumulate(ix);
                             if (dx == nullptr) return;
                             const double* dy = t.grad(self).data();
                             for (std::size_t b = 0; b < batch; ++b)
                               for (std::size_t h = 0; h < heads; ++h)
                                 for (std::size_t s = 0; s < seq; ++s)
                                   kernels::add(dx + ((b * heads + h) * seq + s) * dh,
                                                dy + (b * seq + s) * d + h * dh,
                                                dx + ((b * heads + h) * seq + s) * dh, dh);
                           });
}

Var bmm(Var a, Var b) {
  same_tape(a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  require_rank(OpKind::bmm, x, 3);
  require_rank(OpKind::bmm, y, 3);
  if (x.dim(0) != y.dim(0) || x.dim(2) != y.dim(1)) mismatch(OpKind::bmm, x.shape, y.shape);
  const std::size_t g = x.dim(0), m = x.dim(1), k = x.dim(2), n = y.dim(2);
  Tensor out({g, m, n});
  for (std::size_t i = 0; i < g; ++i)
    kernels::gemm_nn(x.data.data() + i * m * k, y.data.data() + i * k * n,
                     out.data.data() + i * m * n, m, k, n, false);
  const std::size_t ia = a.id(), ib = b.id();
  return tape_of(a).record(OpKind::bmm, {ia, ib}, std::move(out),
                           [ia, ib, g, m, k, n](Tape& t, std::size_t self) {
                             const double* dc = t.grad(self).data();
                             if (double* da = t.accumulate(ia)) {
                               const double* y = t.value(ib).data.data();
                               for (std::size_t i = 0; i < g; ++i)
                                 kernels::gemm_nt(dc + i * m * n, y + i * k * n, da + i * m * k, m, n, k, true);
                             }
                             if (double* db = t.accumulate(ib)) {
                               const double* x = t.value(ia).data.data();
                               for (std::size_t i = 0; i < g; ++i)
                                 kernels::gemm_tn(x + i * m * k, dc + i * m * n, db + i * k * n, k, m, n, true);
                             }
                           });
}

Var bmm_nt(Var a, Var b) {
  same_tape(a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  require_rank(OpKind::bmm_nt, x, 3);
  require_rank(OpKind::bmm_nt, y, 3);
  if (x.dim(0) != y.dim(0) || x.dim(2) != y.dim(2)) mismatch(OpKind::bmm_nt, x.shape, y.shape);
  const std::size_t g = x.dim(0), m = x.dim(1), k = x.dim(2), n = y.dim(1);
  Tensor out({g, m, n});
  for (std::size_t i = 0; i < g; ++i)
    kernels::gemm_nt(x.data.data() + i * m * k, y.data.data() + i * n * k,
                     out.data.data() + i * m * n, m, k, n, false);
  const std::size_t ia = a.id(), ib = b.id();
  return tape_of(a).record(OpKind::bmm_nt, {ia, ib}, std::move(out),
                           [ia, ib, g, m, k, n](Tape& t, std::size_t self) {
                             const double* dc = t.grad(self).data();
                             if (double* da = t.accumulate(ia)) {
                               const double* y = t.value(ib).data.data();
                               for (std::size_t i = 0; i < g; ++i)
                                 kernels::gemm_nn(dc + i * m * n, y + i * n * k, da + i * m * k, m, n, k, true);
                             }
                             if (double* db = t.accumulate(ib)) {
                               const double* x = t.value(ia).data.data();
                               for (std::size_t i = 0; i < g; ++i)
                                 kernels::gemm_tn(dc + i * m * n, x + i * m * k, db + i * n * k, n, m, k, true);
                             }
                           });
}

Var mask_keys(Var scores, std::span<const unsigned char> key_valid, std::size_t heads) {
  const Tensor& in = scores.value();
  require_rank(OpKind::mask_keys, in, 3);
  const std::size_t groups = in.dim(0), rows = in.dim(1), seq = in.dim(2);
  if (heads == 0 || groups % heads != 0 || key_valid.size() != groups / heads * seq)
    mismatch(OpKind::mask_keys, in.shape, Shape{key_valid.size(), heads});
  std::vector<unsigned char> valid(key_valid.begin(), key_valid.end());
  Tensor out = in;
  for (std::size_t gi = 0; gi < groups; ++gi) {
    const unsigned char* v = valid.data() + (gi / heads) * seq;
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < seq; ++j)
        if (!v[j]) out.data[(gi * rows + r) * seq + j] = kMaskedLogit;
  }
  const std::size_t is = scores.id();
  return tape_of(scores).record(
      OpKind::mask_keys, {is}, std::move(out),
      [is, groups, rows, seq, heads, valid = std::move(valid)](Tape& t, std::size_t self) {
        double* ds = t.accumulate(is);
        if (ds == nullptr) return;
        const double* dy = t.grad(self).data();
        for (std::size_t gi = 0; gi < groups; ++gi) {
          const unsigned char* v = valid.data() + (gi / heads) * seq;
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < seq; ++j) {
              const std::size_t idx = (gi * rows + r) * seq + j;
              if (v[j]) ds[idx] += dy[idx];
            }
        }
      });
}

Var head_gate(Var x, std::span<const double> gates) {
  const Tensor& in = x.value();
  require_rank(OpKind::head_gate, in, 3);
  const std::size_t heads = gates.size();
  if (heads == 0 || in.dim(0) % heads != 0) mismatch(OpKind::head_gate, in.shape, Shape{heads});
  const std::size_t block = in.dim(1) * in.dim(2);
  std::vector<double> g(gates.begin(), gates.end());
  Tensor out(in.shape);
  for (std::size_t gi = 0; gi < in.dim(0); ++gi)
    kernels::scale(g[gi % heads], in.data.data() + gi * block, out.data.data() + gi * block, block);
  const std::size_t ix = x.id();
  const std::size_t groups = in.dim(0);
  return tape_of(x).record(OpKind::head_gate, {ix}, std::move(out),
                           [ix, groups, block, g = std::move(g)](Tape& t, std::size_t self) {
                             double* dx = t.accumulate(ix);
                             if (dx == nullptr) return;
                             const double* dy = t.grad(self).data();
                             for (std::size_t gi = 0; gi < groups; ++gi)
                               kernels::axpy(g[gi % g.size()], dy + gi * block, dx + gi * block, block);
                           });
}

Var select_rows(Var x, std::size_t stride) {
  const Tensor& in = x.value();
  require_rank(OpKind::select_rows, in, 2);
  if (stride == 0 || in.dim(0) % stride != 0) mismatch(OpKind::select_rows, in.shape, Shape{stride});
  const std::size_t rows = in.dim(0) / stride, d = in.dim(1);
  Tensor out({rows, d});
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n(in.data.data() + r * stride * d, d, out.data.data() + r * d);
  const std::size_t ix = x.id();
  return tape_of(x).record(OpKind::select_rows, {ix}, std::move(out),
                           [ix, rows, stride, d](Tape& t, std::size_t self) {
                             double* dx = t.accumulate(ix);
                             if (dx == nullptr) return;
                             const double* dy = t.grad(self).data();
                             for (std::size_t r = 0; r < rows; ++r)
                               kernels::add(dx + r * stride * d, dy + r * d, dx + r * stride * d, d);
                           });
}

namespace {

// Row-wise log-softmax.
std::vector<double> log_softmax(const Tensor& logits) {
  const std::size_t rows = logits.dim(0), n = logits.dim(1);
  std::vector<double> out(rows * n);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* z = logits.data.data() + r * n;
    const double mx = *std::max_element(z, z + n);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) total += std::exp(z[j] - mx);
    const double lse = mx + std::log(total);
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] = z[j] - lse;
  }
  return out;
}

}  // namespace

Var cross_entropy(Var logits, std::span<const int> labels) {
  const Tensor& z = logits.value();
  require_rank(OpKind::cross_entropy, z, 2);
  const std::size_t rows = z.dim(0), n = z.dim(1);
  if (rows == 0 || labels.size() != rows)
    mismatch(OpKind::cross_entropy, z.shape, Shape{labels.size()});
  std::vector<int> lab(labels.begin(), labels.end());
  for (int l : lab)
    if (l < 0 || static_cast<std::size_t>(l) >= n)
      throw std::invalid_argument("cross_entropy: label " + std::to_string(l) + " outside [0, " +
                                  std::to_string(n) + ")");
  std::vector<double> logp = log_softmax(z);
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) total -= logp[r * n + lab[r]];
  Tensor out({1}, total / static_cast<double>(rows));
  const std::size_t il = logits.id();
  return tape_of(logits).record(
      OpKind::cross_entropy, {il}, std::move(out),
      [il, rows, n, lab = std::move(lab), logp = std::move(logp)](Tape& t, std::size_t self) {
        double* dz = t.accumulate(il);
        if (dz == nullptr) return;
        const double g = t.grad(self)[0] / static_cast<double>(rows);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < n; ++j) {
            const double p = std::exp(logp[r * n + j]);
            dz[r * n + j] += g * (p - (static_cast<std::size_t>(lab[r]) == j ? 1.0 : 0.0));
          }
      });
}

Var mean_entropy(Var logits) {
  const Tensor& z = logits.value();
  require_rank(OpKind::mean_entropy, z, 2);
  const std::size_t rows = z.dim(0), n = z.dim(1);
  if (rows == 0) throw ShapeError("mean_entropy: empty batch");
  std::vector<double> logp = log_softmax(z);
  std::vector<double> entropy(rows, 0.0);
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < n; ++j) entropy[r] -= std::exp(logp[r * n + j]) * logp[r * n + j];
    total += entropy[r];
  }
  Tensor out({1}, total / static_cast<double>(rows));
  const std::size_t il = logits.id();
  return tape_of(logits).record(
      OpKind::mean_entropy, {il}, std::move(out),
      [il, rows, n, logp = std::move(logp), entropy = std::move(entropy)](Tape& t, std::size_t self) {
        double* dz = t.accumulate(il);
        if (dz == nullptr) return;
        const double g = t.grad(self)[0] / static_cast<double>(rows);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < n; ++j) {
            const double lp = logp[r * n + j];
            dz[r * n + j] -= g * std::exp(lp) * (lp + entropy[r]);
          }
      });
}

Var sum(Var a) {
  const Tensor& x = a.value();
  Tensor out({1}, kernels::sum(x.data.data(), x.size()));
  const std::size_t ia = a.id();
  return tape_of(a).record(OpKind::sum, {ia}, std::move(out), [ia](Tape& t, std::size_t self) {
    double* da = t.accumulate(ia);
    if (da == nullptr) return;
    const double g = t.grad(self)[0];
    const std::size_t n = t.value(ia).size();
    for (std::size_t i = 0; i < n; ++i) da[i] += g;
  });
}

Var grouped_norms(std::span<const Var> mats, std::size_t groups, NormKind kind) {
  if (mats.empty() || groups == 0) throw ShapeError("grouped_norms: no inputs");
  Tape& tape = tape_of(mats.front());
  std::vector<std::size_t> ids;
  for (const Var& v : mats) {
    same_tape(mats.front(), v);
    const Tensor& w = v.value();
    require_rank(OpKind::grouped_norms, w, 2);
    if (w.dim(1) % groups != 0) mismatch(OpKind::grouped_norms, w.shape, Shape{groups});
    ids.push_back(v.id());
  }
  Tensor out({groups});
  for (std::size_t id : ids) {
    const Tensor& w = tape.value(id);
    const std::size_t rows = w.dim(0), cols = w.dim(1), width = cols / groups;
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) {
        const double x = w.data[r * cols + c];
        out.data[c / width] += kind == NormKind::l1 ? std::abs(x) : x * x;
      }
  }
  if (kind == NormKind::l2)
    for (double& x : out.data) x = std::sqrt(x);
  std::vector<double> norms = out.data;
  return tape.record(OpKind::grouped_norms, ids, std::move(out),
                     [ids, groups, kind, norms = std::move(norms)](Tape& t, std::size_t self) {
                       const double* dy = t.grad(self).data();
                       for (std::size_t id : ids) {
                         double* dw = t.accumulate(id);
                         if (dw == nullptr) continue;
                         const Tensor& w = t.value(id);
                         const std::size_t rows = w.dim(0), cols = w.dim(1), width = cols / groups;
                         for (std::size_t r = 0; r < rows; ++r)
                           for (std::size_t c = 0; c < cols; ++c) {
                             const double x = w.data[r * cols + c];
                             const std::size_t g = c / width;
                             double d = 0.0;
                             if (kind == NormKind::l1) {
                               d = x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
                             } else if (norms[g] > 0.0) {
                               d = x / norms[g];
                             }
                             dw[r * cols + c] += dy[g] * d;
                           }
                       }
                     });
}

}  // namespace headprune::ad
