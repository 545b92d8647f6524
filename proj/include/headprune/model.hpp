#pragma once
// Transformer encoder binary classifier with a per-head {0,1} mask.

#include <compare>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <vector>

#include "headprune/autodiff.hpp"
#include "headprune/data.hpp"
#include "headprune/random.hpp"

namespace headprune::model {

struct ModelConfig {
  std::size_t num_layers = 2;
  std::size_t heads_per_layer = 4;
  std::size_t model_dim = 32;
  std::size_t ff_dim = 64;
  std::size_t vocab_size = 111;
  std::size_t max_seq_len = 24;
  double dropout_rate = 0.1;
  std::size_t num_classes = 2;

  std::size_t head_dim() const { return model_dim / heads_per_layer; }
  // Throws std::invalid_argument describing the first violated constraint.
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

struct HeadId {
  std::size_t layer = 0;
  std::size_t head = 0;
  auto operator<=>(const HeadId&) const = default;
};

using HeadSet = std::set<HeadId>;

class HeadMask {
 public:
  HeadMask() = default;
  HeadMask(std::size_t layers, std::size_t heads);

  std::size_t layers() const { return layers_; }
  std::size_t heads() const { return heads_; }
  bool active(HeadId id) const;
  void set(HeadId id, bool active);
  std::size_t active_in_layer(std::size_t layer) const;
  std::size_t pruned_count() const;
  HeadSet pruned() const;
  // Gate values for one layer: 1.0 for active heads, 0.0 for masked ones.
  std::vector<double> gates(std::size_t layer) const;
  bool operator==(const HeadMask&) const = default;

 private:
  std::size_t layers_ = 0, heads_ = 0;
  std::vector<unsigned char> bits_;
};

struct LayerParams {
  ad::Parameter wq, wk, wv, wo;  // [d, d]; head h owns columns h*dh..(h+1)*dh of q/k/v and rows of o
  ad::Parameter bq, bk, bv, bo;  // [d]
  ad::Parameter ln1_gamma, ln1_beta;
  ad::Parameter w1, b1, w2, b2;  // [d, ff], [ff], [ff, d], [d]
  ad::Parameter ln2_gamma, ln2_beta;
};

// Token ids trimmed to the longest sequence in the batch, plus key validity.
struct TokenBatch {
  std::size_t batch = 0;
  std::size_t seq = 0;
  std::vector<int> ids;                // [batch*seq]
  std::vector<unsigned char> valid;    // [batch*seq]
  std::vector<int> labels;             // [batch]
};

TokenBatch make_batch(std::span<const data::Example> examples);

struct ForwardOutput {
  ad::Tensor logits;             // [B, 2]
  ad::Tensor cls_embedding;      // [B, d]
  ad::Tensor per_head_cls_norm;  // [B, L, H]
};

class EncoderModel {
 public:
  // Deterministic in (config, seed); all heads active.
  static EncoderModel init(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  const HeadMask& head_mask() const { return mask_; }
  HeadMask& head_mask() { return mask_; }

  LayerParams& layer(std::size_t l) { return layers_.at(l); }
  const LayerParams& layer(std::size_t l) const { return layers_.at(l); }

  // Stable order; names are unique and used by checkpoints.
  std::vector<ad::Parameter*> parameters();
  std::vector<const ad::Parameter*> parameters() const;
  std::size_t parameter_count() const;
  static std::size_t parameter_count(const ModelConfig& config);

  // Builds the forward graph on tape. Parameters enter as trainable leaves
  // when trainable is set, otherwise as read-only views. extras, when given,
  // receives CLS embeddings and per-head CLS norms.
  ad::Var forward(ad::Tape& tape, const TokenBatch& batch, ad::Mode mode, Rng* rng, bool trainable,
                  ForwardOutput* extras = nullptr);
  ForwardOutput forward(const TokenBatch& batch, ad::Mode mode = ad::Mode::eval,
                        std::uint64_t dropout_seed = 0) const;

  // Zeroes gradients of masked heads' q/k/v columns, biases and o rows.
  void zero_masked_grads();

 private:
  friend EncoderModel load_checkpoint(const std::filesystem::path& path);
  ad::Var forward_impl(ad::Tape& tape, const TokenBatch& batch, ad::Mode mode, Rng* rng,
                       bool trainable, ForwardOutput* extras) const;

  ModelConfig config_;
  HeadMask mask_;
  ad::Parameter tok_emb_, pos_emb_, emb_ln_gamma_, emb_ln_beta_;
  std::vector<LayerParams> layers_;
  ad::Parameter cls_w_, cls_b_;
};

// Masks the listed heads. Out-of-range ids throw std::out_of_range; leaving
// a layer without an active head throws std::invalid_argument unless
// allow_empty_layer is set.
void apply_head_mask(EncoderModel& model, const HeadSet& heads, bool allow_empty_layer = false);

// Eval-mode argmax predictions and logits over a dataset.
struct Predictions {
  std::vector<int> labels;
  std::vector<double> logits;  // [n, 2]
};
Predictions predict(const EncoderModel& model, std::span<const data::Example> examples,
                    std::size_t batch_size = 64);
double accuracy(const EncoderModel& model, std::span<const data::Example> examples);

struct EntropyRegularization {
  double weight = 0.1;
  std::size_t first_epoch = 0;  // inclusive
  std::size_t last_epoch = 1;   // exclusive
};

struct SparsityRegularization {
  double l1 = 0.0;
  double l2 = 0.0;
};

struct TrainConfig {
  std::size_t epochs = 3;
  std::size_t batch_size = 32;
  double learning_rate = 2e-5;
  std::uint64_t seed = 0;
  std::optional<EntropyRegularization> entropy;
  std::optional<SparsityRegularization> sparsity;

  void validate() const;
};

struct TrainHistory {
  std::vector<double> val_accuracy;  // one per epoch
  std::vector<double> train_loss;    // mean batch loss per epoch
};

// Adam fine-tuning with cross-entropy plus the optional regularizers.
// Masked heads receive no update.
TrainHistory fine_tune(EncoderModel& model, std::span<const data::Example> train,
                       std::span<const data::Example> val, const TrainConfig& config);

// lambda1 * sum_{l,h} ||W_h||_1 + lambda2 * sum_{l,h} ||W_h||_2 where W_h is
// the concatenation of head h's key, query and value columns.
ad::Var head_sparsity_penalty(ad::Tape& tape, std::span<const ad::Var> queries,
                              std::span<const ad::Var> keys, std::span<const ad::Var> values,
                              std::size_t heads, const SparsityRegularization& reg);
double head_sparsity_penalty(const EncoderModel& model, const SparsityRegularization& reg);

// Checkpoint: 8-byte magic, u32 version, u64 header length, JSON header,
// little-endian f64 payload in manifest order.
inline constexpr char kCheckpointMagic[9] = "HPRUNECK";
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const EncoderModel& model, const std::filesystem::path& path);
EncoderModel load_checkpoint(const std::filesystem::path& path);

}  // namespace headprune::model
