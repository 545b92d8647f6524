#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "headprune/eval.hpp"
#include "headprune/kernels.hpp"

namespace headprune::eval {

namespace {

double norm(const std::vector<double>& v) { return std::sqrt(kernels::dot(v.data(), v.data(), v.size())); }

void remove_component(std::vector<double>& v, const std::vector<double>& u) {
  const double c = kernels::dot(v.data(), u.data(), v.size());
  kernels::axpy(-c, u.data(), v.data(), v.size());
}

// Deterministic start vector with a component along every axis.
std::vector<double> start_vector(std::size_t d) {
  std::vector<double> v(d);
  for (std::size_t i = 0; i < d; ++i) v[i] = 1.0 + 0.01 * static_cast<double>(i);
  return v;
}

}  // namespace

PcaResult pca_2d(std::span<const double> rows, std::size_t n, std::size_t d, std::size_t iterations, double tol) {
  if (n == 0 || d == 0 || rows.size() != n * d) throw std::invalid_argument("pca_2d: shape mismatch");
  std::vector<double> x(rows.begin(), rows.end());
  for (std::size_t j = 0; j < d; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += x[i * d + j];
    mean /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) x[i * d + j] -= mean;
  }
  // Covariance [d, d].
  std::vector<double> cov(d * d, 0.0);
  kernels::gemm_tn(x.data(), x.data(), cov.data(), d, n, d, false);
  for (double& c : cov) c /= static_cast<double>(n);
  double total = 0.0;
  for (std::size_t j = 0; j < d; ++j) total += cov[j * d + j];

  PcaResult out;
  out.coords.assign(n, {0.0, 0.0});
  const double floor = 1e-12 * std::max(1.0, total);
  if (!(total > floor)) {
    out.degenerate = true;
    std::vector<double> e0(d, 0.0), e1(d, 0.0);
    e0[0] = 1.0;
    if (d > 1) e1[1] = 1.0;
    out.directions = {e0, e1};
    return out;
  }

  std::vector<double> work = cov;
  for (int k = 0; k < 2; ++k) {
    std::vector<double> v = start_vector(d);
    if (k == 1) remove_component(v, out.directions[0]);
    double nv = norm(v);
    if (nv == 0.0) {
      v.assign(d, 0.0);
      v[d > 1 ? 1 : 0] = 1.0;
      if (k == 1) remove_component(v, out.directions[0]);
      nv = norm(v);
    }
    for (double& e : v) e /= nv;
    std::vector<double> w(d);
    for (std::size_t it = 0; it < iterations; ++it) {
      for (std::size_t r = 0; r < d; ++r) w[r] = kernels::dot(&work[r * d], v.data(), d);
      if (k == 1) remove_component(w, out.directions[0]);
      const double nw = norm(w);
      if (nw <= floor) break;  // remaining variance is nil; keep the orthogonal start
      double delta = 0.0;
      for (std::size_t r = 0; r < d; ++r) {
        const double next = w[r] / nw;
        delta += (next - v[r]) * (next - v[r]);
        v[r] = next;
      }
      if (std::sqrt(delta) < tol) break;
    }
    for (std::size_t r = 0; r < d; ++r) w[r] = kernels::dot(&cov[r * d], v.data(), d);
    const double lambda = std::max(0.0, kernels::dot(v.data(), w.data(), d));
    out.explained[k] = std::min(1.0, lambda / total);
    for (std::size_t r = 0; r < d; ++r)
      for (std::size_t c = 0; c < d; ++c) work[r * d + c] -= lambda * v[r] * v[c];
    out.directions[k] = v;
  }
  if (out.explained[1] > out.explained[0]) out.explained[1] = out.explained[0];
  for (std::size_t i = 0; i < n; ++i)
    for (int k = 0; k < 2; ++k) out.coords[i][k] = kernels::dot(&x[i * d], out.directions[k].data(), d);
  // Re-center so column means vanish to rounding.
  for (int k = 0; k < 2; ++k) {
    double mean = 0.0;
    for (const auto& c : out.coords) mean += c[k];
    mean /= static_cast<double>(n);
    for (auto& c : out.coords) c[k] -= mean;
  }
  return out;
}

Projection2D embedding_projection(const model::EncoderModel& model, std::span<const data::Example> examples) {
  if (examples.size() < 3) throw std::invalid_argument("embedding_projection: need at least 3 examples");
  const std::size_t d = model.config().model_dim;
  std::vector<double> rows;
  rows.reserve(examples.size() * d);
  for (std::size_t i = 0; i < examples.size(); i += 64) {
    const auto chunk = examples.subspan(i, std::min<std::size_t>(64, examples.size() - i));
    const model::ForwardOutput f = model.forward(model::make_batch(chunk));
    rows.insert(rows.end(), f.cls_embedding.data.begin(), f.cls_embedding.data.end());
  }
  PcaResult pca = pca_2d(rows, examples.size(), d);
  Projection2D p;
  p.coords = std::move(pca.coords);
  p.explained = pca.explained;
  p.directions = std::move(pca.directions);
  p.degenerate = pca.degenerate;
  for (const data::Example& ex : examples) {
    p.labels.push_back(ex.label);
    p.poisoned.push_back(ex.poisoned ? 1 : 0);
    p.triggers.push_back(ex.trigger);
  }
  return p;
}

std::string projection_csv(const Projection2D& p) {
  std::string out = "x,y,label,poisoned,trigger_kind\n";
  char buf[160];
  for (std::size_t i = 0; i < p.coords.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%d,%d,", p.coords[i][0], p.coords[i][1], p.labels[i],
                  static_cast<int>(p.poisoned[i]));
    out += buf;
    out += data::to_string(p.triggers[i]);
    out += '\n';
  }
  return out;
}

}  // namespace headprune::eval
