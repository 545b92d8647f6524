#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "headprune/kernels.hpp"
#include "headprune/model.hpp"

namespace headprune::model {
namespace {

ad::Parameter glorot(std::string name, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  ad::Tensor t({fan_in, fan_out});
  for (double& x : t.data) x = (2.0 * uniform01(rng) - 1.0) * limit;
  return ad::Parameter(std::move(name), std::move(t));
}

ad::Parameter gaussian(std::string name, std::size_t rows, std::size_t cols, double stddev, Rng& rng) {
  ad::Tensor t({rows, cols});
  for (double& x : t.data) x = standard_normal(rng) * stddev;
  return ad::Parameter(std::move(name), std::move(t));
}

ad::Parameter filled(std::string name, std::size_t n, double value) {
  return ad::Parameter(std::move(name), ad::Tensor({n}, value));
}

}  // namespace

void ModelConfig::validate() const {
  if (num_layers < 1) throw std::invalid_argument("model config: num_layers must be >= 1");
  if (heads_per_layer < 2) throw std::invalid_argument("model config: heads_per_layer must be >= 2");
  if (model_dim == 0 || model_dim % heads_per_layer != 0)
    throw std::invalid_argument("model config: model_dim " + std::to_string(model_dim) +
                                " is not divisible by heads_per_layer " + std::to_string(heads_per_layer));
  if (ff_dim == 0 || vocab_size == 0 || max_seq_len == 0)
    throw std::invalid_argument("model config: ff_dim, vocab_size and max_seq_len must be positive");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
    throw std::invalid_argument("model config: dropout_rate must lie in [0,1)");
  if (num_classes != 2) throw std::invalid_argument("model config: only binary classification is supported");
}

HeadMask::HeadMask(std::size_t layers, std::size_t heads)
    : layers_(layers), heads_(heads), bits_(layers * heads, 1) {}

bool HeadMask::active(HeadId id) const {
  if (id.layer >= layers_ || id.head >= heads_) throw std::out_of_range("head id out of range");
  return bits_[id.layer * heads_ + id.head] != 0;
}

void HeadMask::set(HeadId id, bool on) {
  if (id.layer >= layers_ || id.head >= heads_)
    throw std::out_of_range("head (" + std::to_string(id.layer) + "," + std::to_string(id.head) +
                            ") out of range for " + std::to_string(layers_) + "x" + std::to_string(heads_));
  bits_[id.layer * heads_ + id.head] = on ? 1 : 0;
}

std::size_t HeadMask::active_in_layer(std::size_t layer) const {
  return static_cast<std::size_t>(
      std::count(bits_.begin() + layer * heads_, bits_.begin() + (layer + 1) * heads_, 1));
}

std::size_t HeadMask::pruned_count() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), 0));
}

HeadSet HeadMask::pruned() const {
  HeadSet out;
  for (std::size_t l = 0; l < layers_; ++l)
    for (std::size_t h = 0; h < heads_; ++h)
      if (!bits_[l * heads_ + h]) out.insert({l, h});
  return out;
}

std::vector<double> HeadMask::gates(std::size_t layer) const {
  std::vector<double> g(heads_);
  for (std::size_t h = 0; h < heads_; ++h) g[h] = bits_[layer * heads_ + h] ? 1.0 : 0.0;
  return g;
}

EncoderModel EncoderModel::init(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  const std::size_t d = config.model_dim, ff = config.ff_dim;
  EncoderModel m;
  m.config_ = config;
  m.mask_ = HeadMask(config.num_layers, config.heads_per_layer);
  m.tok_emb_ = gaussian("embeddings.token", config.vocab_size, d, 1.0, rng);
  m.pos_emb_ = gaussian("embeddings.position", config.max_seq_len, d, 0.1, rng);
  m.emb_ln_gamma_ = filled("embeddings.norm.gamma", d, 1.0);
  m.emb_ln_beta_ = filled("embeddings.norm.beta", d, 0.0);
  for (std::size_t l = 0; l < config.num_layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    LayerParams lp;
    lp.wq = glorot(p + "attention.query.weight", d, d, rng);
    lp.wk = glorot(p + "attention.key.weight", d, d, rng);
    lp.wv = glorot(p + "attention.value.weight", d, d, rng);
    lp.wo = glorot(p + "attention.output.weight", d, d, rng);
    lp.bq = filled(p + "attention.query.bias", d, 0.0);
    lp.bk = filled(p + "attention.key.bias", d, 0.0);
    lp.bv = filled(p + "attention.value.bias", d, 0.0);
    lp.bo = filled(p + "attention.output.bias", d, 0.0);
    lp.ln1_gamma = filled(p + "attention.norm.gamma", d, 1.0);
    lp.ln1_beta = filled(p + "attention.norm.beta", d, 0.0);
    lp.w1 = glorot(p + "ffn.in.weight", d, ff, rng);
    lp.b1 = filled(p + "ffn.in.bias", ff, 0.0);
    lp.w2 = glorot(p + "ffn.out.weight", ff, d, rng);
    lp.b2 = filled(p + "ffn.out.bias", d, 0.0);
    lp.ln2_gamma = filled(p + "ffn.norm.gamma", d, 1.0);
    lp.ln2_beta = filled(p + "ffn.norm.beta", d, 0.0);
    m.layers_.push_back(std::move(lp));
  }
  m.cls_w_ = glorot("classifier.weight", d, config.num_classes, rng);
  m.cls_b_ = filled("classifier.bias", config.num_classes, 0.0);
  return m;
}

std::vector<ad::Parameter*> EncoderModel::parameters() {
  std::vector<ad::Parameter*> out{&tok_emb_, &pos_emb_, &emb_ln_gamma_, &emb_ln_beta_};
  for (LayerParams& lp : layers_) {
    for (ad::Parameter* p : {&lp.wq, &lp.bq, &lp.wk, &lp.bk, &lp.wv, &lp.bv, &lp.wo, &lp.bo,
                             &lp.ln1_gamma, &lp.ln1_beta, &lp.w1, &lp.b1, &lp.w2, &lp.b2,
                             &lp.ln2_gamma, &lp.ln2_beta})
      out.push_back(p);
  }
  out.push_back(&cls_w_);
  out.push_back(&cls_b_);
  return out;
}

std::vector<const ad::Parameter*> EncoderModel::parameters() const {
  auto mutable_params = const_cast<EncoderModel*>(this)->parameters();
  return {mutable_params.begin(), mutable_params.end()};
}

std::size_t EncoderModel::parameter_count() const {
  std::size_t n = 0;
  for (const ad::Parameter* p : parameters()) n += p->value.size();
  return n;
}

std::size_t EncoderModel::parameter_count(const ModelConfig& c) {
  const std::size_t d = c.model_dim, ff = c.ff_dim;
  const std::size_t per_layer = 4 * d * d + 4 * d + 2 * d + d * ff + ff + ff * d + d + 2 * d;
  return c.vocab_size * d + c.max_seq_len * d + 2 * d + c.num_layers * per_layer +
         d * c.num_classes + c.num_classes;
}

TokenBatch make_batch(std::span<const data::Example> examples) {
  if (examples.empty()) throw std::invalid_argument("make_batch: empty batch");
  TokenBatch b;
  b.batch = examples.size();
  for (const data::Example& ex : examples) b.seq = std::max(b.seq, ex.length());
  if (b.seq == 0) throw std::invalid_argument("make_batch: example without tokens");
  b.ids.assign(b.batch * b.seq, data::Vocab::kPad);
  b.valid.assign(b.batch * b.seq, 0);
  for (std::size_t i = 0; i < b.batch; ++i) {
    const std::size_t len = examples[i].length();
    for (std::size_t s = 0; s < len; ++s) {
      b.ids[i * b.seq + s] = examples[i].tokens[s];
      b.valid[i * b.seq + s] = 1;
    }
    b.labels.push_back(examples[i].label);
  }
  return b;
}

ad::Var EncoderModel::forward(ad::Tape& tape, const TokenBatch& batch, ad::Mode mode, Rng* rng,
                              bool trainable, ForwardOutput* extras) {
  return forward_impl(tape, batch, mode, rng, trainable, extras);
}

ForwardOutput EncoderModel::forward(const TokenBatch& batch, ad::Mode mode, std::uint64_t dropout_seed) const {
  ad::Tape tape;
  Rng rng(dropout_seed);
  ForwardOutput out;
  forward_impl(tape, batch, mode, &rng, false, &out);
  return out;
}

ad::Var EncoderModel::forward_impl(ad::Tape& tape, const TokenBatch& batch, ad::Mode mode, Rng* rng,
                                   bool trainable, ForwardOutput* extras) const {
  const ModelConfig& c = config_;
  if (batch.batch == 0 || batch.seq == 0) throw std::invalid_argument("forward: empty batch");
  if (batch.seq > c.max_seq_len)
    throw std::invalid_argument("forward: sequence length " + std::to_string(batch.seq) +
                                " exceeds max_seq_len " + std::to_string(c.max_seq_len));
  if (batch.ids.size() != batch.batch * batch.seq || batch.valid.size() != batch.ids.size())
    throw std::invalid_argument("forward: malformed token batch");
  for (std::size_t l = 0; l < c.num_layers; ++l)
    if (mask_.active_in_layer(l) == 0)
      throw std::invalid_argument("forward: every head of layer " + std::to_string(l) + " is masked");
  Rng fallback(0);
  Rng& drop_rng = rng != nullptr ? *rng : fallback;
  if (mode == ad::Mode::train && rng == nullptr && c.dropout_rate > 0.0)
    throw std::invalid_argument("forward: train mode needs a dropout generator");

  auto P = [&](const ad::Parameter& p) {
    return trainable ? tape.parameter(const_cast<ad::Parameter&>(p)) : tape.view(p.value);
  };
  const std::size_t B = batch.batch, S = batch.seq, H = c.heads_per_layer, dh = c.head_dim();
  const double rate = c.dropout_rate;

  std::vector<int> positions(B * S);
  for (std::size_t i = 0; i < B * S; ++i) positions[i] = static_cast<int>(i % S);
  ad::Var x = ad::add(ad::embed_gather(P(tok_emb_), batch.ids), ad::embed_gather(P(pos_emb_), positions));
  x = ad::layer_norm(x, P(emb_ln_gamma_), P(emb_ln_beta_));
  x = ad::dropout(x, rate, mode, drop_rng);

  if (extras != nullptr) extras->per_head_cls_norm = ad::Tensor({B, c.num_layers, H});
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
  for (std::size_t l = 0; l < c.num_layers; ++l) {
    const LayerParams& lp = layers_[l];
    ad::Var q = ad::split_heads(ad::add_bias(ad::matmul(x, P(lp.wq)), P(lp.bq)), B, S, H);
    ad::Var k = ad::split_heads(ad::add_bias(ad::matmul(x, P(lp.wk)), P(lp.bk)), B, S, H);
    ad::Var v = ad::split_heads(ad::add_bias(ad::matmul(x, P(lp.wv)), P(lp.bv)), B, S, H);
    ad::Var scores = ad::mask_keys(ad::scale(ad::bmm_nt(q, k), inv_sqrt_dh), batch.valid, H);
    ad::Var probs = ad::dropout(ad::softmax_rows(scores), rate, mode, drop_rng);
    const std::vector<double> gates = mask_.gates(l);
    ad::Var ctx = ad::head_gate(ad::bmm(probs, v), gates);
    if (extras != nullptr) {
      const auto& cv = ctx.value().data;
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t h = 0; h < H; ++h) {
          const double* row = cv.data() + (b * H + h) * S * dh;
          extras->per_head_cls_norm.data[(b * c.num_layers + l) * H + h] =
              std::sqrt(kernels::dot(row, row, dh));
        }
    }
    ad::Var attn = ad::add_bias(ad::matmul(ad::merge_heads(ctx, B, H), P(lp.wo)), P(lp.bo));
    attn = ad::dropout(attn, rate, mode, drop_rng);
    x = ad::layer_norm(ad::add(x, attn), P(lp.ln1_gamma), P(lp.ln1_beta));
    ad::Var hidden = ad::gelu(ad::add_bias(ad::matmul(x, P(lp.w1)), P(lp.b1)));
    ad::Var ff = ad::add_bias(ad::matmul(hidden, P(lp.w2)), P(lp.b2));
    ff = ad::dropout(ff, rate, mode, drop_rng);
    x = ad::layer_norm(ad::add(x, ff), P(lp.ln2_gamma), P(lp.ln2_beta));
  }
  ad::Var cls = ad::select_rows(x, S);
  ad::Var logits = ad::add_bias(ad::matmul(cls, P(cls_w_)), P(cls_b_));
  if (extras != nullptr) {
    extras->cls_embedding = cls.value();
    extras->logits = logits.value();
  }
  return logits;
}

void EncoderModel::zero_masked_grads() {
  const std::size_t d = config_.model_dim, dh = config_.head_dim();
  for (const HeadId id : mask_.pruned()) {
    LayerParams& lp = layers_[id.layer];
    const std::size_t c0 = id.head * dh;
    for (ad::Parameter* w : {&lp.wq, &lp.wk, &lp.wv}) {
      if (w->grad.size() != w->value.size()) w->zero_grad();
      for (std::size_t r = 0; r < d; ++r) std::fill_n(w->grad.begin() + r * d + c0, dh, 0.0);
    }
    for (ad::Parameter* b : {&lp.bq, &lp.bk, &lp.bv}) {
      if (b->grad.size() != b->value.size()) b->zero_grad();
      std::fill_n(b->grad.begin() + c0, dh, 0.0);
    }
    if (lp.wo.grad.size() != lp.wo.value.size()) lp.wo.zero_grad();
    std::fill_n(lp.wo.grad.begin() + c0 * d, dh * d, 0.0);
  }
}

void apply_head_mask(EncoderModel& model, const HeadSet& heads, bool allow_empty_layer) {
  HeadMask next = model.head_mask();
  for (const HeadId id : heads) next.set(id, false);
  if (!allow_empty_layer)
    for (std::size_t l = 0; l < next.layers(); ++l)
      if (next.active_in_layer(l) == 0)
        throw std::invalid_argument("apply_head_mask: masking would leave layer " + std::to_string(l) +
                                    " without an active head");
  model.head_mask() = next;
}

Predictions predict(const EncoderModel& model, std::span<const data::Example> examples, std::size_t batch_size) {
  if (examples.empty()) throw std::invalid_argument("predict: empty dataset");
  Predictions out;
  out.labels.reserve(examples.size());
  for (std::size_t start = 0; start < examples.size(); start += batch_size) {
    const std::size_t n = std::min(batch_size, examples.size() - start);
    const ForwardOutput fwd = model.forward(make_batch(examples.subspan(start, n)));
    for (std::size_t i = 0; i < n; ++i) {
      const double z0 = fwd.logits.data[2 * i], z1 = fwd.logits.data[2 * i + 1];
      out.labels.push_back(z1 > z0 ? 1 : 0);
      out.logits.push_back(z0);
      out.logits.push_back(z1);
    }
  }
  return out;
}

double accuracy(const EncoderModel& model, std::span<const data::Example> examples) {
  const Predictions p = predict(model, examples);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < examples.size(); ++i) correct += p.labels[i] == examples[i].label ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(examples.size());
}

}  // namespace headprune::model
