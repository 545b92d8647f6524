#pragma once
// Attention-head pruning defenses and fine-tuning baselines. Every strategy
// maps a possibly backdoored model M_p to a defended model plus an audit
// trace, seeing only clean defender data.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "headprune/model.hpp"
#include "headprune/scoring.hpp"

namespace headprune::defense {

enum class Strategy {
  gradient_prune,
  layerwise_prune,
  sparsify_then_prune,
  randomized_ensemble,
  rl_prune,
  bayesian_prune,
  ft,
  fth,
  meft,
};

std::string_view to_string(Strategy s);
Strategy strategy_from_string(std::string_view name);
bool is_baseline(Strategy s);

struct DefenseConfig {
  double tau = 0.85;                 // validation accuracy threshold
  std::size_t step = 1;              // heads pruned per step
  double epsilon = 0.1;              // RL exploration probability
  std::size_t ensemble_size = 5;
  double ensemble_prune_fraction = 0.3;
  double rate_min = 0.2;             // layer-wise rate of the first layer
  double rate_max = 0.8;             // layer-wise rate of the last layer
  double l1 = 1e-3;
  double l2 = 1e-3;
  std::size_t mc_passes = 8;
  std::uint64_t seed = 0;
  std::size_t score_batch_size = 32;
  std::size_t ensemble_retries = 3;
  double fth_learning_rate = 5e-5;
  double meft_entropy_weight = 0.1;
  std::size_t meft_epochs = 1;

  void validate() const;
  bool operator==(const DefenseConfig&) const = default;
};

nlohmann::json to_json(const DefenseConfig& c);
DefenseConfig defense_config_from_json(const nlohmann::json& j);

struct PruneStep {
  std::size_t t = 0;
  std::vector<model::HeadId> heads;
  double val_accuracy = 0.0;
  bool backtracked = false;
  bool operator==(const PruneStep&) const = default;
};

struct PruneTrace {
  std::string strategy;
  double initial_val_accuracy = 0.0;
  std::vector<PruneStep> steps;
  model::HeadSet final_headset;
  nlohmann::json config;
  std::vector<std::string> warnings;
  bool operator==(const PruneTrace&) const = default;
};

nlohmann::json to_json(const PruneTrace& trace);
PruneTrace trace_from_json(const nlohmann::json& j);

// Structural checks on a trace; returns the violated properties (empty when
// sound): disjoint steps, at most one (terminal) backtrack, accuracies in
// [0,1], final headset equal to the union of kept steps, and no emptied layer.
std::vector<std::string> check_trace(const PruneTrace& trace, std::size_t layers, std::size_t heads);

struct DefenseResult {
  model::EncoderModel model;
  PruneTrace trace;
};

// Mean-logit ensemble of independently pruned and fine-tuned members.
class Ensemble {
 public:
  Ensemble() = default;
  Ensemble(std::vector<model::EncoderModel> members, std::vector<std::uint64_t> seeds);

  const std::vector<model::EncoderModel>& members() const { return members_; }
  const std::vector<std::uint64_t>& seeds() const { return seeds_; }
  std::size_t size() const { return members_.size(); }
  // [n, 2] mean of member logits.
  std::vector<double> logits(std::span<const data::Example> examples) const;
  std::vector<int> predict(std::span<const data::Example> examples) const;

 private:
  std::vector<model::EncoderModel> members_;
  std::vector<std::uint64_t> seeds_;
};

struct EnsembleResult {
  Ensemble ensemble;
  std::vector<PruneTrace> traces;
};

// Shared loop: prune the next `step` heads of order (skipping any that would
// empty a layer), evaluate on val, and stop with a backtrack of the whole
// step as soon as accuracy drops below tau.
PruneTrace prune_with_backtracking(const model::EncoderModel& scored, std::span<const data::Example> val,
                                   std::span<const model::HeadId> order, double tau, std::size_t step);

DefenseResult gradient_prune(const model::EncoderModel& mp, std::span<const data::Example> train,
                             std::span<const data::Example> val, const DefenseConfig& cfg,
                             const model::TrainConfig& train_cfg);
DefenseResult layerwise_prune(const model::EncoderModel& mp, std::span<const data::Example> train,
                              std::span<const data::Example> val, const DefenseConfig& cfg,
                              const model::TrainConfig& train_cfg);
DefenseResult sparsify_then_prune(const model::EncoderModel& mp, std::span<const data::Example> train,
                                  std::span<const data::Example> val, const DefenseConfig& cfg,
                                  const model::TrainConfig& train_cfg);
EnsembleResult randomized_ensemble(const model::EncoderModel& mp, std::span<const data::Example> train,
                                   std::span<const data::Example> val, const DefenseConfig& cfg,
                                   const model::TrainConfig& train_cfg);
// Explicit member seeds (one per member) instead of ones derived from cfg.seed.
EnsembleResult randomized_ensemble(const model::EncoderModel& mp, std::span<const data::Example> train,
                                   std::span<const data::Example> val, const DefenseConfig& cfg,
                                   const model::TrainConfig& train_cfg, std::span<const std::uint64_t> member_seeds);
DefenseResult rl_prune(const model::EncoderModel& mp, std::span<const data::Example> train,
                       std::span<const data::Example> val, const DefenseConfig& cfg,
                       const model::TrainConfig& train_cfg);
DefenseResult bayesian_prune(const model::EncoderModel& mp, std::span<const data::Example> train,
                             std::span<const data::Example> val, const DefenseConfig& cfg,
                             const model::TrainConfig& train_cfg);
// FT, FTH or MEFT.
DefenseResult baseline(const model::EncoderModel& mp, std::span<const data::Example> train,
                       std::span<const data::Example> val, Strategy kind, const DefenseConfig& cfg,
                       const model::TrainConfig& train_cfg);

// Any strategy behind one interface: one model, or K ensemble members whose
// mean logits form the prediction. One trace per model.
struct Outcome {
  std::vector<model::EncoderModel> models;
  std::vector<PruneTrace> traces;

  // Largest final headset among the traces.
  std::size_t heads_pruned() const;
  std::vector<double> logits(std::span<const data::Example> examples) const;
  std::vector<int> predict(std::span<const data::Example> examples) const;
};

Outcome run_strategy(Strategy s, const model::EncoderModel& mp, std::span<const data::Example> train,
                     std::span<const data::Example> val, const DefenseConfig& cfg,
                     const model::TrainConfig& train_cfg);

// Per-layer prune counts: floor(r_l * H) with r_l interpolated linearly from
// rate_min (first layer) to rate_max (last layer), capped at H - 1.
std::vector<std::size_t> layer_prune_counts(std::size_t layers, std::size_t heads, double rate_min,
                                            double rate_max);

// One epsilon-greedy choice: uniform over candidates with probability
// epsilon, otherwise the minimum-score candidate (ties by (layer, head)).
model::HeadId epsilon_greedy_select(std::span<const model::HeadId> candidates,
                                    const scoring::ImportanceTable& scores, double epsilon, Rng& rng);

// Active heads whose removal keeps at least one active head in their layer.
std::vector<model::HeadId> prunable_heads(const model::HeadMask& mask);

}  // namespace headprune::defense
