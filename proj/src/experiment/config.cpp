#include <fstream>
#include <set>
#include <sstream>

#include "headprune/experiment.hpp"

namespace headprune::experiment {

using nlohmann::json;

namespace {

template <typename T>
T get(const json& j, const std::string& field) {
  try {
    if constexpr (std::is_unsigned_v<T>) {
      if (!j.is_number_integer() || j.get<std::int64_t>() < 0) throw ConfigError(field, "expected a non-negative integer");
    } else if constexpr (std::is_integral_v<T>) {
      if (!j.is_number_integer()) throw ConfigError(field, "expected an integer");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!j.is_number()) throw ConfigError(field, "expected a number");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!j.is_string()) throw ConfigError(field, "expected a string");
    }
    return j.get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(field, e.what());
  }
}

// A string or a non-empty list of strings.
std::vector<std::string> names(const json& j, const std::string& field) {
  std::vector<std::string> out;
  if (j.is_string()) return {j.get<std::string>()};
  if (!j.is_array() || j.empty()) throw ConfigError(field, "expected a name or a non-empty list of names");
  for (const json& e : j) out.push_back(get<std::string>(e, field));
  return out;
}

template <typename T>
std::vector<T> list(const json& j, const std::string& field) {
  if (!j.is_array()) throw ConfigError(field, "expected a list");
  std::vector<T> out;
  for (const json& e : j) out.push_back(get<T>(e, field));
  return out;
}

template <typename F>
void guard(const std::string& field, F&& f) {
  try {
    f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(field, e.what());
  }
}

}  // namespace

void ExperimentConfig::validate() const {
  guard("model", [&] { model.validate(); });
  guard("defense", [&] { defense.validate(); });
  guard("train", [&] { train.validate(); });
  if (model.vocab_size != static_cast<std::size_t>(data::Vocab::standard().size()))
    throw ConfigError("vocab_size", "must match the built-in vocabulary");
  if (corpus_size < 10) throw ConfigError("corpus_size", "must be >= 10");
  if (!(poison_rate >= 0.0 && poison_rate < 1.0)) throw ConfigError("poison_rate", "must lie in [0,1)");
  if (target_label != 0 && target_label != 1) throw ConfigError("target_label", "must be 0 or 1");
  if (splits.size() != 3) throw ConfigError("splits", "expected three fractions (train, val, test)");
  double total = 0.0;
  for (double f : splits) {
    if (!(f > 0.0)) throw ConfigError("splits", "fractions must be positive");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("splits", "fractions must sum to 1");
  if (attacks.empty()) throw ConfigError("attack", "no attack given");
  for (data::TriggerKind k : attacks)
    if (k == data::TriggerKind::none) throw ConfigError("attack", "'none' is not an attack");
  if (attacker_epochs < 1) throw ConfigError("attacker_epochs", "must be >= 1");
  if (!(attacker_learning_rate >= 0.0)) throw ConfigError("attacker_learning_rate", "must be >= 0");
  if (strategies.empty()) throw ConfigError("strategy", "no strategy given");
  if (std::set<defense::Strategy>(strategies.begin(), strategies.end()).size() != strategies.size())
    throw ConfigError("strategy", "duplicate strategy");
  if (std::set<data::TriggerKind>(attacks.begin(), attacks.end()).size() != attacks.size())
    throw ConfigError("attack", "duplicate attack");
  if (seeds.empty()) throw ConfigError("seeds", "seed list is empty");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size())
    throw ConfigError("seeds", "duplicate seed");
  guard("taus", [&] { eval::validate_taus(taus); });
}

ExperimentConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("<root>", "expected a JSON object");
  ExperimentConfig c;
  json defense_fields = json::object();
  for (const auto& [key, v] : j.items()) {
    if (key == "num_layers") c.model.num_layers = get<std::size_t>(v, key);
    else if (key == "heads_per_layer") c.model.heads_per_layer = get<std::size_t>(v, key);
    else if (key == "model_dim") c.model.model_dim = get<std::size_t>(v, key);
    else if (key == "ff_dim") c.model.ff_dim = get<std::size_t>(v, key);
    else if (key == "max_seq_len") c.model.max_seq_len = get<std::size_t>(v, key);
    else if (key == "dropout_rate") c.model.dropout_rate = get<double>(v, key);
    else if (key == "corpus_size") c.corpus_size = get<std::size_t>(v, key);
    else if (key == "poison_rate") c.poison_rate = get<double>(v, key);
    else if (key == "target_label") c.target_label = get<int>(v, key);
    else if (key == "splits") c.splits = list<double>(v, key);
    else if (key == "attack") {
      c.attacks.clear();
      for (const std::string& n : names(v, key)) guard(key, [&] { c.attacks.push_back(data::trigger_from_string(n)); });
    } else if (key == "attacker_epochs") c.attacker_epochs = get<std::size_t>(v, key);
    else if (key == "attacker_learning_rate") c.attacker_learning_rate = get<double>(v, key);
    else if (key == "strategy") {
      c.strategies.clear();
      for (const std::string& n : names(v, key))
        guard(key, [&] { c.strategies.push_back(defense::strategy_from_string(n)); });
    } else if (key == "epochs") c.train.epochs = get<std::size_t>(v, key);
    else if (key == "batch_size") c.train.batch_size = get<std::size_t>(v, key);
    else if (key == "learning_rate") c.train.learning_rate = get<double>(v, key);
    else if (key == "seeds") c.seeds = list<std::uint64_t>(v, key);
    else if (key == "taus") c.taus = list<double>(v, key);
    else if (key == "output_dir") c.output_dir = get<std::string>(v, key);
    else if (key == "tau" || key == "step" || key == "epsilon" || key == "ensemble_size" ||
             key == "ensemble_prune_fraction" || key == "rate_min" || key == "rate_max" || key == "l1" ||
             key == "l2" || key == "mc_passes" || key == "score_batch_size" || key == "ensemble_retries" ||
             key == "fth_learning_rate" || key == "meft_entropy_weight" || key == "meft_epochs") {
      if (!v.is_number()) throw ConfigError(key, "expected a number");
      if (v.is_number_float() && key != "tau" && key != "epsilon" && key != "ensemble_prune_fraction" &&
          key != "rate_min" && key != "rate_max" && key != "l1" && key != "l2" && key != "fth_learning_rate" &&
          key != "meft_entropy_weight")
        throw ConfigError(key, "expected an integer");
      if (v.is_number_integer() && v.get<std::int64_t>() < 0) throw ConfigError(key, "must be >= 0");
      defense_fields[key] = v;
    } else {
      throw ConfigError(key, "unknown field");
    }
  }
  guard("defense", [&] { c.defense = defense::defense_config_from_json(defense_fields); });
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("--config", "cannot open '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("--config", std::string("malformed JSON: ") + e.what());
  }
  return config_from_json(j);
}

json to_json(const ExperimentConfig& c) {
  json j = defense::to_json(c.defense);
  j.erase("seed");
  j["num_layers"] = c.model.num_layers;
  j["heads_per_layer"] = c.model.heads_per_layer;
  j["model_dim"] = c.model.model_dim;
  j["ff_dim"] = c.model.ff_dim;
  j["max_seq_len"] = c.model.max_seq_len;
  j["dropout_rate"] = c.model.dropout_rate;
  j["corpus_size"] = c.corpus_size;
  j["poison_rate"] = c.poison_rate;
  j["target_label"] = c.target_label;
  j["splits"] = c.splits;
  j["attack"] = json::array();
  for (data::TriggerKind k : c.attacks) j["attack"].push_back(std::string(data::to_string(k)));
  j["attacker_epochs"] = c.attacker_epochs;
  j["attacker_learning_rate"] = c.attacker_learning_rate;
  j["strategy"] = json::array();
  for (defense::Strategy s : c.strategies) j["strategy"].push_back(std::string(defense::to_string(s)));
  j["epochs"] = c.train.epochs;
  j["batch_size"] = c.train.batch_size;
  j["learning_rate"] = c.train.learning_rate;
  j["seeds"] = c.seeds;
  j["taus"] = c.taus;
  if (!c.output_dir.empty()) j["output_dir"] = c.output_dir;
  return j;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    std::size_t used = 0;
    std::uint64_t v = 0;
    try {
      if (item.empty() || item[0] == '-') throw std::invalid_argument(item);
      v = std::stoull(item, &used);
    } catch (const std::exception&) {
      throw ConfigError("seeds", "bad seed '" + item + "'");
    }
    if (used != item.size()) throw ConfigError("seeds", "bad seed '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError("seeds", "empty seed list");
  return out;
}

}  // namespace headprune::experiment
