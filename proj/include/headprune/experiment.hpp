#pragma once
// Experiment configuration and the poison -> implant -> defend -> evaluate runner.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "headprune/defense.hpp"
#include "headprune/eval.hpp"

namespace headprune::experiment {

// Malformed or invalid configuration; the CLI maps it to exit code 2.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(const std::string& field, const std::string& what)
      : std::invalid_argument("config field '" + field + "': " + what), field_(field) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

struct ExperimentConfig {
  model::ModelConfig model;
  std::size_t corpus_size = 2000;
  double poison_rate = 0.2;
  int target_label = data::kPositive;
  std::vector<double> splits{0.8, 0.1, 0.1};
  std::vector<data::TriggerKind> attacks{data::TriggerKind::rare_token};
  std::size_t attacker_epochs = 3;
  double attacker_learning_rate = 1e-3;
  std::vector<defense::Strategy> strategies{defense::Strategy::gradient_prune};
  defense::DefenseConfig defense;  // defense.seed is replaced by the run seed
  model::TrainConfig train;        // train.seed is replaced by the run seed
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::vector<double> taus{0.85, 0.90, 0.95};
  std::string output_dir;

  void validate() const;
};

// Flat JSON object; unknown keys and bad values raise ConfigError.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);
// Round-trips through config_from_json.
nlohmann::json to_json(const ExperimentConfig& c);

// Comma-separated seed list as accepted by --seed-override and HEADPRUNE_SEED.
std::vector<std::uint64_t> parse_seed_list(const std::string& text);

std::filesystem::path cell_dir(const std::filesystem::path& out, defense::Strategy s, data::TriggerKind attack,
                               std::uint64_t seed);

// Everything one (attack, seed) pair needs: data, attacker model, FT reference.
struct Prepared {
  data::TriggerKind attack = data::TriggerKind::rare_token;
  std::uint64_t seed = 0;
  data::Split split;        // clean; the defender's train and val
  data::Dataset poisoned;   // attacker's training set
  data::Dataset attack_set;
  model::EncoderModel mp;
};

Prepared prepare(const ExperimentConfig& cfg, data::TriggerKind attack, std::uint64_t seed);
defense::DefenseConfig defense_config(const ExperimentConfig& cfg, std::uint64_t seed);
model::TrainConfig defender_train_config(const ExperimentConfig& cfg, std::uint64_t seed);

struct CellResult {
  eval::EvalReport defended;
  eval::EvalReport ft;
  std::size_t heads_pruned = 0;
};

// Runs every strategy for every (attack, seed), writing the cell
// directories and <out>/report.csv. jobs > 1 runs (attack, seed) pairs in
// parallel; results are ordered independently of scheduling.
std::vector<CellResult> run(const ExperimentConfig& cfg, const std::filesystem::path& out, std::size_t jobs = 1);

// tau sweep for every (strategy, attack, seed); writes per-cell sweep.csv
// and <out>/sweep.csv with leading strategy,attack,seed columns.
void sweep(const ExperimentConfig& cfg, const std::filesystem::path& out, std::size_t jobs = 1);

// report.json files under each directory (searched recursively). Throws
// std::runtime_error naming every directory without one.
std::vector<eval::EvalReport> collect_reports(const std::vector<std::filesystem::path>& dirs);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace headprune::experiment
