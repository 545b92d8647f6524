#pragma once
// Shared fixtures: a small poisoned setup that trains in a second or two.

#include <cmath>
#include <cstring>
#include <vector>

#include "headprune/experiment.hpp"

namespace test_support {

using namespace headprune;

inline model::ModelConfig small_config() {
  model::ModelConfig c;
  c.model_dim = 16;
  c.ff_dim = 32;
  return c;
}

struct Setup {
  data::Split split;
  data::Dataset poisoned;
  data::Dataset attack;
  model::EncoderModel mp;
};

// Corpus of n examples, a backdoor of the given kind, and an attacker model.
// The defaults reach about 0.85 validation accuracy at d=16.
inline Setup small_setup(std::uint64_t seed, data::TriggerKind kind = data::TriggerKind::rare_token,
                         std::size_t n = 600, std::size_t attacker_epochs = 8, double attacker_lr = 3e-3) {
  Setup s;
  s.split = data::split_dataset(data::generate_corpus(seed, n), {0.6, 0.2, 0.2}, seed);
  const data::TriggerSpec spec = data::TriggerSpec::make(kind);
  s.poisoned = data::poison_dataset(s.split.train, 0.2, spec, seed);
  s.attack = data::make_attack_testset(s.split.test, spec);
  s.mp = model::EncoderModel::init(small_config(), seed);
  model::TrainConfig tc;
  tc.epochs = attacker_epochs;
  tc.learning_rate = attacker_lr;
  tc.seed = seed;
  model::fine_tune(s.mp, s.poisoned, s.split.val, tc);
  return s;
}

inline model::TrainConfig quick_train(std::uint64_t seed = 1) {
  model::TrainConfig tc;
  tc.epochs = 1;
  tc.seed = seed;
  return tc;
}

inline bool bit_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && (a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

inline bool same_parameters(const model::EncoderModel& a, const model::EncoderModel& b) {
  const auto pa = a.parameters();
  const auto pb = b.parameters();
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i)
    if (pa[i]->name != pb[i]->name || !bit_equal(pa[i]->value.data, pb[i]->value.data)) return false;
  return a.head_mask() == b.head_mask();
}

}  // namespace test_support
