#include <cmath>
#include <stdexcept>

#include "headprune/defense.hpp"

namespace headprune::defense {

using nlohmann::json;

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::gradient_prune: return "gradient_prune";
    case Strategy::layerwise_prune: return "layerwise_prune";
    case Strategy::sparsify_then_prune: return "sparsify_then_prune";
    case Strategy::randomized_ensemble: return "randomized_ensemble";
    case Strategy::rl_prune: return "rl_prune";
    case Strategy::bayesian_prune: return "bayesian_prune";
    case Strategy::ft: return "FT";
    case Strategy::fth: return "FTH";
    case Strategy::meft: return "MEFT";
  }
  return "FT";
}

Strategy strategy_from_string(std::string_view name) {
  for (Strategy s : {Strategy::gradient_prune, Strategy::layerwise_prune, Strategy::sparsify_then_prune,
                     Strategy::randomized_ensemble, Strategy::rl_prune, Strategy::bayesian_prune, Strategy::ft,
                     Strategy::fth, Strategy::meft})
    if (to_string(s) == name) return s;
  throw std::invalid_argument("unknown strategy '" + std::string(name) + "'");
}

bool is_baseline(Strategy s) { return s == Strategy::ft || s == Strategy::fth || s == Strategy::meft; }

void DefenseConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("defense config: " + what); };
  if (!(tau > 0.0 && tau <= 1.0)) fail("tau must lie in (0,1]");
  if (step < 1) fail("step must be >= 1");
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) fail("epsilon must lie in [0,1]");
  if (ensemble_size < 1) fail("ensemble_size must be >= 1");
  if (!(ensemble_prune_fraction >= 0.0 && ensemble_prune_fraction < 1.0)) fail("ensemble_prune_fraction must lie in [0,1)");
  if (!(rate_min >= 0.0 && rate_min <= 1.0 && rate_max >= 0.0 && rate_max <= 1.0)) fail("layer rates must lie in [0,1]");
  if (l1 < 0.0 || l2 < 0.0) fail("l1 and l2 must be >= 0");
  if (score_batch_size < 1) fail("score_batch_size must be >= 1");
  if (fth_learning_rate < 0.0) fail("fth_learning_rate must be >= 0");
}

json to_json(const DefenseConfig& c) {
  return json{{"tau", c.tau},
              {"step", c.step},
              {"epsilon", c.epsilon},
              {"ensemble_size", c.ensemble_size},
              {"ensemble_prune_fraction", c.ensemble_prune_fraction},
              {"rate_min", c.rate_min},
              {"rate_max", c.rate_max},
              {"l1", c.l1},
              {"l2", c.l2},
              {"mc_passes", c.mc_passes},
              {"seed", c.seed},
              {"score_batch_size", c.score_batch_size},
              {"ensemble_retries", c.ensemble_retries},
              {"fth_learning_rate", c.fth_learning_rate},
              {"meft_entropy_weight", c.meft_entropy_weight},
              {"meft_epochs", c.meft_epochs}};
}

DefenseConfig defense_config_from_json(const json& j) {
  DefenseConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "tau") c.tau = value.get<double>();
    else if (key == "step") c.step = value.get<std::size_t>();
    else if (key == "epsilon") c.epsilon = value.get<double>();
    else if (key == "ensemble_size") c.ensemble_size = value.get<std::size_t>();
    else if (key == "ensemble_prune_fraction") c.ensemble_prune_fraction = value.get<double>();
    else if (key == "rate_min") c.rate_min = value.get<double>();
    else if (key == "rate_max") c.rate_max = value.get<double>();
    else if (key == "l1") c.l1 = value.get<double>();
    else if (key == "l2") c.l2 = value.get<double>();
    else if (key == "mc_passes") c.mc_passes = value.get<std::size_t>();
    else if (key == "seed") c.seed = value.get<std::uint64_t>();
    else if (key == "score_batch_size") c.score_batch_size = value.get<std::size_t>();
    else if (key == "ensemble_retries") c.ensemble_retries = value.get<std::size_t>();
    else if (key == "fth_learning_rate") c.fth_learning_rate = value.get<double>();
    else if (key == "meft_entropy_weight") c.meft_entropy_weight = value.get<double>();
    else if (key == "meft_epochs") c.meft_epochs = value.get<std::size_t>();
    else throw std::invalid_argument("defense config: unknown field '" + key + "'");
  }
  c.validate();
  return c;
}

namespace {

json head_list(const std::vector<model::HeadId>& heads) {
  json out = json::array();
  for (const model::HeadId& id : heads) out.push_back({id.layer, id.head});
  return out;
}

std::vector<model::HeadId> parse_heads(const json& j) {
  std::vector<model::HeadId> out;
  for (const json& pair : j) out.push_back({pair.at(0).get<std::size_t>(), pair.at(1).get<std::size_t>()});
  return out;
}

}  // namespace

json to_json(const PruneTrace& trace) {
  json steps = json::array();
  for (const PruneStep& s : trace.steps)
    steps.push_back(json{{"t", s.t}, {"heads", head_list(s.heads)}, {"val_accuracy", s.val_accuracy},
                         {"backtracked", s.backtracked}});
  return json{{"strategy", trace.strategy},
              {"initial_val_accuracy", trace.initial_val_accuracy},
              {"steps", steps},
              {"final_headset", head_list({trace.final_headset.begin(), trace.final_headset.end()})},
              {"config", trace.config},
              {"warnings", trace.warnings}};
}

PruneTrace trace_from_json(const json& j) {
  PruneTrace trace;
  trace.strategy = j.at("strategy").get<std::string>();
  trace.initial_val_accuracy = j.at("initial_val_accuracy").get<double>();
  for (const json& s : j.at("steps")) {
    PruneStep step;
    step.t = s.at("t").get<std::size_t>();
    step.heads = parse_heads(s.at("heads"));
    step.val_accuracy = s.at("val_accuracy").get<double>();
    step.backtracked = s.at("backtracked").get<bool>();
    trace.steps.push_back(std::move(step));
  }
  for (const model::HeadId& id : parse_heads(j.at("final_headset"))) trace.final_headset.insert(id);
  trace.config = j.at("config");
  trace.warnings = j.at("warnings").get<std::vector<std::string>>();
  return trace;
}

std::vector<std::string> check_trace(const PruneTrace& trace, std::size_t layers, std::size_t heads) {
  std::vector<std::string> problems;
  model::HeadSet seen;
  model::HeadSet kept;
  for (std::size_t i = 0; i < trace.steps.size(); ++i) {
    const PruneStep& s = trace.steps[i];
    if (s.t != i) problems.push_back("step " + std::to_string(i) + " has index " + std::to_string(s.t));
    if (!(s.val_accuracy >= 0.0 && s.val_accuracy <= 1.0))
      problems.push_back("step " + std::to_string(i) + " accuracy outside [0,1]");
    if (s.backtracked && i + 1 != trace.steps.size())
      problems.push_back("backtrack at non-terminal step " + std::to_string(i));
    for (const model::HeadId& id : s.heads) {
      if (id.layer >= layers || id.head >= heads)
        problems.push_back("step " + std::to_string(i) + " names an out-of-range head");
      if (!seen.insert(id).second)
        problems.push_back("head (" + std::to_string(id.layer) + "," + std::to_string(id.head) +
                           ") pruned in more than one step");
      if (!s.backtracked) kept.insert(id);
    }
  }
  if (kept != trace.final_headset) problems.push_back("final headset differs from the union of kept steps");
  std::vector<std::size_t> per_layer(layers, 0);
  for (const model::HeadId& id : trace.final_headset)
    if (id.layer < layers) ++per_layer[id.layer];
  for (std::size_t l = 0; l < layers; ++l)
    if (per_layer[l] >= heads) problems.push_back("layer " + std::to_string(l) + " emptied");
  return problems;
}

}  // namespace headprune::defense
