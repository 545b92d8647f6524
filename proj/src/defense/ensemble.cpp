#include <algorithm>
#include <cmath>
#include <future>
#include <stdexcept>

#include "headprune/defense.hpp"

namespace headprune::defense {

Ensemble::Ensemble(std::vector<model::EncoderModel> members, std::vector<std::uint64_t> seeds)
    : members_(std::move(members)), seeds_(std::move(seeds)) {
  if (members_.empty()) throw std::invalid_argument("Ensemble: no members");
  if (members_.size() != seeds_.size()) throw std::invalid_argument("Ensemble: one seed per member required");
  for (const model::EncoderModel& m : members_)
    if (!(m.config() == members_.front().config()))
      throw std::invalid_argument("Ensemble: members disagree on model config");
}

std::vector<double> Ensemble::logits(std::span<const data::Example> examples) const {
  if (members_.empty()) throw std::logic_error("Ensemble: no members");
  std::vector<double> sum(examples.size() * 2, 0.0);
  for (const model::EncoderModel& m : members_) {
    const model::Predictions p = model::predict(m, examples);
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += p.logits[i];
  }
  const double k = static_cast<double>(members_.size());
  for (double& v : sum) v /= k;
  return sum;
}

std::vector<int> Ensemble::predict(std::span<const data::Example> examples) const {
  const std::vector<double> z = logits(examples);
  std::vector<int> out(examples.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = z[2 * i + 1] > z[2 * i] ? 1 : 0;
  return out;
}

namespace {

model::HeadSet sample_heads(std::size_t layers, std::size_t heads, std::size_t count, Rng& rng) {
  std::vector<model::HeadId> all;
  for (std::size_t l = 0; l < layers; ++l)
    for (std::size_t h = 0; h < heads; ++h) all.push_back({l, h});
  shuffle(all, rng);
  model::HeadMask mask(layers, heads);
  model::HeadSet out;
  for (const model::HeadId& id : all) {
    if (out.size() == count) break;
    if (mask.active_in_layer(id.layer) < 2) continue;
    mask.set(id, false);
    out.insert(id);
  }
  return out;
}

struct Member {
  model::EncoderModel model;
  PruneTrace trace;
};

Member build_member(const model::EncoderModel& mp, std::span<const data::Example> train,
                    std::span<const data::Example> val, const DefenseConfig& cfg,
                    const model::TrainConfig& tc, std::size_t count, std::uint64_t seed) {
  const std::size_t L = mp.config().num_layers, H = mp.config().heads_per_layer;
  Rng rng(seed);
  Member m;
  m.trace.strategy = std::string(to_string(Strategy::randomized_ensemble));
  m.trace.config = to_json(cfg);
  m.trace.config["member_seed"] = seed;
  m.trace.initial_val_accuracy = model::accuracy(mp, val);
  for (std::size_t attempt = 0;; ++attempt) {
    const model::HeadSet heads = sample_heads(L, H, count, rng);
    m.model = mp;
    model::apply_head_mask(m.model, heads);
    model::fine_tune(m.model, train, val, tc);
    const double acc = model::accuracy(m.model, val);
    m.trace.steps.assign(1, PruneStep{0, {heads.begin(), heads.end()}, acc, false});
    m.trace.final_headset = heads;
    if (acc >= cfg.tau) break;
    if (attempt >= cfg.ensemble_retries) {
      m.trace.warnings.push_back("member kept after " + std::to_string(attempt) +
                                 " retries with validation accuracy " + std::to_string(acc));
      break;
    }
  }
  return m;
}

}  // namespace

EnsembleResult randomized_ensemble(const model::EncoderModel& mp, std::span<const data::Example> train,
                                   std::span<const data::Example> val, const DefenseConfig& cfg,
                                   const model::TrainConfig& train_cfg, std::span<const std::uint64_t> member_seeds) {
  cfg.validate();
  if (val.empty()) throw std::invalid_argument("randomized_ensemble: empty validation set");
  if (member_seeds.empty()) throw std::invalid_argument("randomized_ensemble: K must be >= 1");
  const std::size_t L = mp.config().num_layers, H = mp.config().heads_per_layer;
  const auto count = static_cast<std::size_t>(
      std::floor(cfg.ensemble_prune_fraction * static_cast<double>(L * H) + 1e-9));
  if (count > L * (H - 1))
    throw std::invalid_argument("randomized_ensemble: prune fraction leaves a layer without heads");

  std::vector<std::future<Member>> jobs;
  for (std::uint64_t seed : member_seeds)
    jobs.push_back(std::async(std::launch::async, [&, seed] {
      return build_member(mp, train, val, cfg, train_cfg, count, seed);
    }));
  std::vector<model::EncoderModel> members;
  EnsembleResult result;
  for (auto& job : jobs) {
    Member m = job.get();
    members.push_back(std::move(m.model));
    result.traces.push_back(std::move(m.trace));
  }
  result.ensemble = Ensemble(std::move(members), {member_seeds.begin(), member_seeds.end()});
  return result;
}

EnsembleResult randomized_ensemble(const model::EncoderModel& mp, std::span<const data::Example> train,
                                   std::span<const data::Example> val, const DefenseConfig& cfg,
                                   const model::TrainConfig& train_cfg) {
  std::vector<std::uint64_t> seeds;
  for (std::size_t k = 0; k < cfg.ensemble_size; ++k) seeds.push_back(mix_seed(cfg.seed, k));
  return randomized_ensemble(mp, train, val, cfg, train_cfg, seeds);
}

}  // namespace headprune::defense

namespace headprune::defense {

std::size_t Outcome::heads_pruned() const {
  std::size_t n = 0;
  for (const PruneTrace& t : traces) n = std::max(n, t.final_headset.size());
  return n;
}

std::vector<double> Outcome::logits(std::span<const data::Example> examples) const {
  if (models.empty()) throw std::logic_error("Outcome: no models");
  if (models.size() == 1) return model::predict(models.front(), examples).logits;
  std::vector<double> sum(examples.size() * 2, 0.0);
  for (const model::EncoderModel& m : models) {
    const model::Predictions p = model::predict(m, examples);
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += p.logits[i];
  }
  for (double& v : sum) v /= static_cast<double>(models.size());
  return sum;
}

std::vector<int> Outcome::predict(std::span<const data::Example> examples) const {
  const std::vector<double> z = logits(examples);
  std::vector<int> out(examples.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = z[2 * i + 1] > z[2 * i] ? 1 : 0;
  return out;
}

Outcome run_strategy(Strategy s, const model::EncoderModel& mp, std::span<const data::Example> train,
                     std::span<const data::Example> val, const DefenseConfig& cfg,
                     const model::TrainConfig& train_cfg) {
  Outcome out;
  auto single = [&](DefenseResult r) {
    out.models.push_back(std::move(r.model));
    out.traces.push_back(std::move(r.trace));
  };
  switch (s) {
    case Strategy::gradient_prune: single(gradient_prune(mp, train, val, cfg, train_cfg)); break;
    case Strategy::layerwise_prune: single(layerwise_prune(mp, train, val, cfg, train_cfg)); break;
    case Strategy::sparsify_then_prune: single(sparsify_then_prune(mp, train, val, cfg, train_cfg)); break;
    case Strategy::rl_prune: single(rl_prune(mp, train, val, cfg, train_cfg)); break;
    case Strategy::bayesian_prune: single(bayesian_prune(mp, train, val, cfg, train_cfg)); break;
    case Strategy::ft:
    case Strategy::fth:
    case Strategy::meft: single(baseline(mp, train, val, s, cfg, train_cfg)); break;
    case Strategy::randomized_ensemble: {
      EnsembleResult r = randomized_ensemble(mp, train, val, cfg, train_cfg);
      out.models = r.ensemble.members();
      out.traces = std::move(r.traces);
      break;
    }
  }
  return out;
}

}  // namespace headprune::defense
