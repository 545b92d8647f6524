#include <stdexcept>

#include "headprune/autodiff.hpp"
#include "headprune/kernels.hpp"

namespace headprune::ad {

const Tensor& Var::value() const { return tape_->value(id_); }
const std::vector<double>& Var::grad() const { return tape_->grad(id_); }

Var Tape::constant(Tensor value) {
  Node node;
  node.kind = OpKind::constant;
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(Parameter& p) {
  if (p.grad.size() != p.value.size()) p.zero_grad();
  Node node;
  node.kind = OpKind::parameter;
  node.param = &p;
  node.requires_grad = true;
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::view(const Tensor& external) {
  Node node;
  node.kind = OpKind::constant;
  node.external = &external;
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(OpKind kind, std::vector<std::size_t> inputs, Tensor value, BackwardFn backward) {
  const std::size_t id = nodes_.size();
  bool needs = false;
  for (std::size_t in : inputs) {
    if (in >= id) throw std::logic_error("tape: input node does not precede its consumer");
    needs = needs || nodes_[in].requires_grad;
  }
  if (!value.all_finite())
    throw std::runtime_error(std::string(op_name(kind)) + ": produced a non-finite value");
  Node node;
  node.kind = kind;
  node.inputs = std::move(inputs);
  node.value = std::move(value);
  node.requires_grad = needs;
  if (needs) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, id);
}

const Tensor& Tape::value(std::size_t id) const {
  const Node& node = nodes_.at(id);
  if (node.param != nullptr) return node.param->value;
  return node.external != nullptr ? *node.external : node.value;
}

const std::vector<double>& Tape::grad(std::size_t id) const { return nodes_.at(id).grad; }

double* Tape::accumulate(std::size_t id) {
  Node& node = nodes_.at(id);
  if (!node.requires_grad) return nullptr;
  if (node.grad.empty()) node.grad.assign(value(id).size(), 0.0);
  return node.grad.data();
}

void Tape::backward(Var loss, double scale) {
  if (loss.tape() != this) throw std::invalid_argument("backward: loss belongs to another tape");
  const std::size_t root = loss.id();
  if (value(root).size() != 1)
    throw ShapeError("backward: loss must be scalar, got shape " + shape_string(value(root).shape));
  for (Node& node : nodes_) node.grad.clear();
  if (!nodes_[root].requires_grad) return;
  // Propagate a unit seed and apply the scale once at the end, so the
  // gradients of c*loss are exactly c times those of loss.
  nodes_[root].grad.assign(1, 1.0);
  for (std::size_t i = root + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (node.grad.empty()) continue;
    if (node.param != nullptr) {
      std::vector<double>& g = node.param->grad;
      if (scale == 1.0) {
        kernels::add(g.data(), node.grad.data(), g.data(), node.grad.size());
      } else {
        for (std::size_t k = 0; k < node.grad.size(); ++k) g[k] += scale * node.grad[k];
      }
    } else if (node.backward) {
      node.backward(*this, i);
    }
  }
  if (scale != 1.0)
    for (Node& node : nodes_)
      for (double& v : node.grad) v *= scale;
}

void Tape::clear() { nodes_.clear(); }

}  // namespace headprune::ad
