#pragma once
// Define-by-run reverse-mode differentiation over dense row-major double
// tensors. A Tape records one forward pass; backward() walks it in reverse
// append order.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace headprune::ad {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

struct Tensor {
  Shape shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(Shape s, double fill = 0.0);
  Tensor(Shape s, std::vector<double> values);

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }
  bool all_finite() const;
};

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A learnable tensor. grad accumulates across backward() calls until
// zero_grad().
struct Parameter {
  std::string name;
  Tensor value;
  std::vector<double> grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v);
  void zero_grad();
};

enum class OpKind {
  constant,
  parameter,
  matmul,
  add,
  add_bias,
  mul,
  scale,
  relu,
  gelu,
  softmax_rows,
  layer_norm,
  embed_gather,
  dropout,
  split_heads,
  merge_heads,
  bmm,
  bmm_nt,
  mask_keys,
  head_gate,
  select_rows,
  cross_entropy,
  mean_entropy,
  sum,
  grouped_norms,
  custom,
};

std::string_view op_name(OpKind kind);

class Tape;

// Handle to a tape node. Cheap to copy; valid until the tape is cleared.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor& value() const;
  const Shape& shape() const { return value().shape; }
  std::size_t id() const { return id_; }
  Tape* tape() const { return tape_; }
  // Gradient buffer after backward(); empty when nothing flowed here.
  const std::vector<double>& grad() const;

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

enum class Mode { train, eval };

class Tape {
 public:
  // Receives the tape and the node's own id; reads the node's grad and
  // accumulates into its inputs via accumulate().
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var parameter(Parameter& p);
  // Read-only leaf referencing a tensor that must outlive the tape.
  Var view(const Tensor& external);
  Var record(OpKind kind, std::vector<std::size_t> inputs, Tensor value, BackwardFn backward);

  // Seeds d(loss)/d(loss) = scale and propagates to every reachable node;
  // parameter leaves add their gradient into Parameter::grad.
  void backward(Var loss, double scale = 1.0);
  void clear();
  std::size_t size() const { return nodes_.size(); }

  const Tensor& value(std::size_t id) const;
  const std::vector<double>& grad(std::size_t id) const;
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  OpKind kind(std::size_t id) const { return nodes_.at(id).kind; }
  const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_.at(id).inputs; }
  // Zero-initialised gradient buffer of an input node, or nullptr when that
  // node does not require a gradient.
  double* accumulate(std::size_t id);

 private:
  struct Node {
    OpKind kind = OpKind::constant;
    std::vector<std::size_t> inputs;
    Tensor value;
    Parameter* param = nullptr;
    const Tensor* external = nullptr;
    std::vector<double> grad;
    BackwardFn backward;
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
};

// Primitive operations. Shape mismatches throw ShapeError naming the op and
// both shapes.
Var matmul(Var a, Var b);                  // [m,k] x [k,n]
Var add(Var a, Var b);                     // same shape
Var add_bias(Var a, Var bias);             // [m,n] + [n]
Var mul(Var a, Var b);                     // elementwise
Var scale(Var a, double c);
Var relu(Var a);
Var gelu(Var a);                           // tanh approximation
Var softmax_rows(Var a);                   // over the last dimension
Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);
Var embed_gather(Var table, std::span<const int> ids);
// Inverted dropout. Eval mode (or rate 0) returns the input node itself.
Var dropout(Var a, double rate, Mode mode, std::mt19937_64& rng);
Var split_heads(Var x, std::size_t batch, std::size_t seq, std::size_t heads);  // [B*S,H*dh] -> [B*H,S,dh]
Var merge_heads(Var x, std::size_t batch, std::size_t heads);                   // [B*H,S,dh] -> [B*S,H*dh]
Var bmm(Var a, Var b);                     // [G,m,k] x [G,k,n]
Var bmm_nt(Var a, Var b);                  // [G,m,k] x [G,n,k]^T
// scores [B*H,S,S]; key_valid [B*S] (1 = real token). Invalid keys get a
// large negative logit so softmax assigns them exactly zero weight.
Var mask_keys(Var scores, std::span<const unsigned char> key_valid, std::size_t heads);
// x [B*H,S,dh]; multiplies head h's block by gates[h].
Var head_gate(Var x, std::span<const double> gates);
Var select_rows(Var x, std::size_t stride);  // rows 0, stride, 2*stride, ...
Var cross_entropy(Var logits, std::span<const int> labels);  // mean over batch
Var mean_entropy(Var logits);                                 // mean softmax entropy
Var sum(Var a);

enum class NormKind { l1, l2 };
// Each input is [rows, groups*width]; output [groups] holds the L1 or L2
// norm of the concatenation of every input's column block g.
Var grouped_norms(std::span<const Var> mats, std::size_t groups, NormKind kind);

struct AdamConfig {
  double lr = 2e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig hyper;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::uint64_t step_count = 0;

  static AdamState for_parameters(std::span<Parameter* const> params, AdamConfig hyper);
};

// One Adam update with bias correction using each parameter's grad.
void adam_step(std::span<Parameter* const> params, AdamState& state);

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-5;
  // Denominator floor for the relative error |a - n| / max(|a|, |n|, floor).
  // Below it the check is absolute: structurally zero gradients (key bias)
  // see ~1e-11 of finite-difference rounding noise.
  double floor = 1e-5;
};

struct GradCheckReport {
  bool passed = false;
  std::size_t checked = 0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double worst_rel_error = 0.0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

using LossBuilder = std::function<Var(Tape&)>;

// Compares every analytic gradient entry of params with central finite
// differences of the scalar returned by build. Throws std::runtime_error if
// two evaluations at the same point disagree.
GradCheckReport grad_check(std::span<Parameter* const> params, const LossBuilder& build,
                           const GradCheckOptions& options = {});

}  // namespace headprune::ad
