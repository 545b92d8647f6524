#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "headprune/defense.hpp"

namespace headprune::defense {

namespace {

// Unpruned accuracy below tau: nothing may be pruned.
PruneTrace refused_trace(Strategy s, const DefenseConfig& cfg, double acc) {
  PruneTrace trace;
  trace.strategy = std::string(to_string(s));
  trace.initial_val_accuracy = acc;
  trace.config = to_json(cfg);
  trace.warnings.push_back("initial validation accuracy " + std::to_string(acc) + " below tau " +
                           std::to_string(cfg.tau) + "; model left unpruned");
  return trace;
}

model::EncoderModel fine_tuned(const model::EncoderModel& base, std::span<const data::Example> train,
                               std::span<const data::Example> val, const model::TrainConfig& tc) {
  model::EncoderModel m = base;
  model::fine_tune(m, train, val, tc);
  return m;
}

// The headset goes onto the original M_p, then one fine-tune.
model::EncoderModel finish(const model::EncoderModel& mp, const model::HeadSet& heads,
                           std::span<const data::Example> train, std::span<const data::Example> val,
                           const model::TrainConfig& tc) {
  model::EncoderModel mc = mp;
  model::apply_head_mask(mc, heads);
  model::fine_tune(mc, train, val, tc);
  return mc;
}

void require_val(std::span<const data::Example> val, const char* who) {
  if (val.empty()) throw std::invalid_argument(std::string(who) + ": empty validation set");
}

DefenseResult ordered_prune(Strategy s, const model::EncoderModel& mp, std::span<const data::Example> train,
                            std::span<const data::Example> val, const DefenseConfig& cfg,
                            const model::TrainConfig& tc) {
  model::EncoderModel fp = fine_tuned(mp, train, val, tc);
  const double acc0 = model::accuracy(fp, val);
  if (acc0 < cfg.tau) return {std::move(fp), refused_trace(s, cfg, acc0)};

  scoring::ImportanceTable table;
  if (s == Strategy::bayesian_prune) {
    scoring::McOptions mc;
    mc.passes = cfg.mc_passes;
    mc.seed = cfg.seed;
    table = scoring::mc_dropout_uncertainty(fp, val, mc);
  } else {
    table = scoring::gradient_importance(fp, train, cfg.score_batch_size);
  }
  const std::vector<model::HeadId> order = scoring::ascending_order(table);
  PruneTrace trace = prune_with_backtracking(fp, val, order, cfg.tau, cfg.step);
  trace.strategy = std::string(to_string(s));
  trace.config = to_json(cfg);
  return {finish(mp, trace.final_headset, train, val, tc), std::move(trace)};
}

}  // namespace

std::vector<model::HeadId> prunable_heads(const model::HeadMask& mask) {
  std::vector<model::HeadId> out;
  for (std::size_t l = 0; l < mask.layers(); ++l) {
    if (mask.active_in_layer(l) < 2) continue;
    for (std::size_t h = 0; h < mask.heads(); ++h)
      if (mask.active({l, h})) out.push_back({l, h});
  }
  return out;
}

PruneTrace prune_with_backtracking(const model::EncoderModel& scored, std::span<const data::Example> val,
                                   std::span<const model::HeadId> order, double tau, std::size_t step) {
  require_val(val, "prune_with_backtracking");
  if (step < 1) throw std::invalid_argument("prune_with_backtracking: step must be >= 1");
  model::EncoderModel work = scored;
  model::HeadMask& mask = work.head_mask();
  PruneTrace trace;
  trace.initial_val_accuracy = model::accuracy(work, val);
  trace.final_headset = mask.pruned();

  std::size_t next = 0;
  while (next < order.size()) {
    std::vector<model::HeadId> batch;
    while (next < order.size() && batch.size() < step) {
      const model::HeadId id = order[next++];
      if (!mask.active(id) || mask.active_in_layer(id.layer) < 2) continue;  // survivor cap
      mask.set(id, false);
      batch.push_back(id);
    }
    if (batch.empty()) break;
    PruneStep rec;
    rec.t = trace.steps.size();
    rec.heads = batch;
    rec.val_accuracy = model::accuracy(work, val);
    if (rec.val_accuracy < tau) {
      rec.backtracked = true;
      for (const model::HeadId& id : batch) mask.set(id, true);
      trace.steps.push_back(std::move(rec));
      break;
    }
    trace.steps.push_back(std::move(rec));
  }
  trace.final_headset = mask.pruned();
  return trace;
}

DefenseResult gradient_prune(const model::EncoderModel& mp, std::span<const data::Example> train,
                             std::span<const data::Example> val, const DefenseConfig& cfg,
                             const model::TrainConfig& train_cfg) {
  cfg.validate();
  require_val(val, "gradient_prune");
  return ordered_prune(Strategy::gradient_prune, mp, train, val, cfg, train_cfg);
}

DefenseResult sparsify_then_prune(const model::EncoderModel& mp, std::span<const data::Example> train,
                                  std::span<const data::Example> val, const DefenseConfig& cfg,
                                  const model::TrainConfig& train_cfg) {
  cfg.validate();
  require_val(val, "sparsify_then_prune");
  model::TrainConfig tc = train_cfg;
  tc.sparsity = model::SparsityRegularization{cfg.l1, cfg.l2};
  return ordered_prune(Strategy::sparsify_then_prune, mp, train, val, cfg, tc);
}

DefenseResult bayesian_prune(const model::EncoderModel& mp, std::span<const data::Example> train,
                             std::span<const data::Example> val, const DefenseConfig& cfg,
                             const model::TrainConfig& train_cfg) {
  cfg.validate();
  require_val(val, "bayesian_prune");
  if (cfg.mc_passes < 2) throw std::invalid_argument("bayesian_prune: mc_passes must be >= 2");
  if (!(mp.config().dropout_rate > 0.0))
    throw std::invalid_argument("bayesian_prune: dropout_rate must be > 0 for an uncertainty signal");
  return ordered_prune(Strategy::bayesian_prune, mp, train, val, cfg, train_cfg);
}

std::vector<std::size_t> layer_prune_counts(std::size_t layers, std::size_t heads, double rate_min,
                                            double rate_max) {
  if (layers == 0) throw std::invalid_argument("layer_prune_counts: need at least one layer");
  std::vector<std::size_t> counts(layers, 0);
  if (heads == 0) return counts;
  for (std::size_t l = 0; l < layers; ++l) {
    const double r = layers == 1 ? rate_min
                                 : rate_min + (rate_max - rate_min) * static_cast<double>(l) /
                                                  static_cast<double>(layers - 1);
    const auto n = static_cast<std::size_t>(std::floor(r * static_cast<double>(heads) + 1e-9));
    counts[l] = std::min(n, heads - 1);
  }
  return counts;
}

DefenseResult layerwise_prune(const model::EncoderModel& mp, std::span<const data::Example> train,
                              std::span<const data::Example> val, const DefenseConfig& cfg,
                              const model::TrainConfig& train_cfg) {
  cfg.validate();
  require_val(val, "layerwise_prune");
  model::EncoderModel fp = fine_tuned(mp, train, val, train_cfg);
  const scoring::ImportanceTable table = scoring::activation_variance(fp, val);
  const std::size_t L = mp.config().num_layers, H = mp.config().heads_per_layer;
  const std::vector<std::size_t> counts = layer_prune_counts(L, H, cfg.rate_min, cfg.rate_max);

  PruneTrace trace;
  trace.strategy = std::string(to_string(Strategy::layerwise_prune));
  trace.config = to_json(cfg);
  trace.initial_val_accuracy = model::accuracy(fp, val);
  const std::vector<model::HeadId> order = scoring::ascending_order(table);
  model::HeadMask& mask = fp.head_mask();
  for (std::size_t l = 0; l < L; ++l) {
    PruneStep rec;
    for (const model::HeadId& id : order) {
      if (rec.heads.size() >= counts[l]) break;
      if (id.layer != l || !mask.active(id) || mask.active_in_layer(l) < 2) continue;
      mask.set(id, false);
      rec.heads.push_back(id);
    }
    if (rec.heads.empty()) continue;
    rec.t = trace.steps.size();
    rec.val_accuracy = model::accuracy(fp, val);
    trace.steps.push_back(std::move(rec));
  }
  trace.final_headset = mask.pruned();
  return {finish(mp, trace.final_headset, train, val, train_cfg), std::move(trace)};
}

model::HeadId epsilon_greedy_select(std::span<const model::HeadId> candidates,
                                    const scoring::ImportanceTable& scores, double epsilon, Rng& rng) {
  if (candidates.empty()) throw std::invalid_argument("epsilon_greedy_select: no candidates");
  // The draw happens even at epsilon 0 so the stream does not depend on epsilon.
  const double u = uniform01(rng);
  if (u < epsilon) return candidates[uniform_index(rng, candidates.size())];
  model::HeadId best = candidates.front();
  for (const model::HeadId& id : candidates) {
    const double a = scores.at(id), b = scores.at(best);
    if (a < b || (a == b && id < best)) best = id;
  }
  return best;
}

DefenseResult rl_prune(const model::EncoderModel& mp, std::span<const data::Example> train,
                       std::span<const data::Example> val, const DefenseConfig& cfg,
                       const model::TrainConfig& train_cfg) {
  cfg.validate();
  require_val(val, "rl_prune");
  model::EncoderModel fp = fine_tuned(mp, train, val, train_cfg);
  const double acc0 = model::accuracy(fp, val);
  if (acc0 < cfg.tau) return {std::move(fp), refused_trace(Strategy::rl_prune, cfg, acc0)};
  const scoring::ImportanceTable table = scoring::activation_variance(fp, val);

  PruneTrace trace;
  trace.strategy = std::string(to_string(Strategy::rl_prune));
  trace.config = to_json(cfg);
  trace.initial_val_accuracy = acc0;
  Rng rng(mix_seed(cfg.seed, 0x524c));
  model::HeadMask& mask = fp.head_mask();
  for (;;) {
    const std::vector<model::HeadId> candidates = prunable_heads(mask);
    if (candidates.empty()) break;
    const model::HeadId id = epsilon_greedy_select(candidates, table, cfg.epsilon, rng);
    mask.set(id, false);
    PruneStep rec;
    rec.t = trace.steps.size();
    rec.heads = {id};
    rec.val_accuracy = model::accuracy(fp, val);
    if (rec.val_accuracy < cfg.tau) {
      rec.backtracked = true;
      mask.set(id, true);
      trace.steps.push_back(std::move(rec));
      break;
    }
    trace.steps.push_back(std::move(rec));
  }
  trace.final_headset = mask.pruned();
  return {finish(mp, trace.final_headset, train, val, train_cfg), std::move(trace)};
}

DefenseResult baseline(const model::EncoderModel& mp, std::span<const data::Example> train,
                       std::span<const data::Example> val, Strategy kind, const DefenseConfig& cfg,
                       const model::TrainConfig& train_cfg) {
  if (!is_baseline(kind))
    throw std::invalid_argument("baseline: '" + std::string(to_string(kind)) + "' is not a baseline");
  model::TrainConfig tc = train_cfg;
  if (kind == Strategy::fth) tc.learning_rate = cfg.fth_learning_rate;
  if (kind == Strategy::meft)
    tc.entropy = model::EntropyRegularization{cfg.meft_entropy_weight, 0, cfg.meft_epochs};
  PruneTrace trace;
  trace.strategy = std::string(to_string(kind));
  trace.config = to_json(cfg);
  require_val(val, "baseline");
  trace.initial_val_accuracy = model::accuracy(mp, val);
  return {fine_tuned(mp, train, val, tc), std::move(trace)};
}

}  // namespace headprune::defense
