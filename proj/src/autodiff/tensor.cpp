#include <cmath>
#include <sstream>

#include "headprune/autodiff.hpp"

namespace headprune::ad {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? "," : "") << shape[i];
  out << ']';
  return out.str();
}

Tensor::Tensor(Shape s, double fill) : shape(std::move(s)), data(shape_size(shape), fill) {}

Tensor::Tensor(Shape s, std::vector<double> values) : shape(std::move(s)), data(std::move(values)) {
  if (shape_size(shape) != data.size())
    throw ShapeError("tensor: shape " + shape_string(shape) + " does not match " +
                     std::to_string(data.size()) + " values");
}

bool Tensor::all_finite() const {
  for (double x : data)
    if (!std::isfinite(x)) return false;
  return true;
}

Parameter::Parameter(std::string n, Tensor v)
    : name(std::move(n)), value(std::move(v)), grad(value.size(), 0.0) {}

void Parameter::zero_grad() { grad.assign(value.size(), 0.0); }

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::constant: return "constant";
    case OpKind::parameter: return "parameter";
    case OpKind::matmul: return "matmul";
    case OpKind::add: return "add";
    case OpKind::add_bias: return "add_bias";
    case OpKind::mul: return "mul";
    case OpKind::scale: return "scale";
    case OpKind::relu: return "relu";
    case OpKind::gelu: return "gelu";
    case OpKind::softmax_rows: return "softmax_rows";
    case OpKind::layer_norm: return "layer_norm";
    case OpKind::embed_gather: return "embed_gather";
    case OpKind::dropout: return "dropout";
    case OpKind::split_heads: return "split_heads";
    case OpKind::merge_heads: return "merge_heads";
    case OpKind::bmm: return "bmm";
    case OpKind::bmm_nt: return "bmm_nt";
    case OpKind::mask_keys: return "mask_keys";
    case OpKind::head_gate: return "head_gate";
    case OpKind::select_rows: return "select_rows";
    case OpKind::cross_entropy: return "cross_entropy";
    case OpKind::mean_entropy: return "mean_entropy";
    case OpKind::sum: return "sum";
    case OpKind::grouped_norms: return "grouped_norms";
    case OpKind::custom: return "custom";
  }
  return "unknown";
}

}  // namespace headprune::ad
