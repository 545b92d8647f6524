#pragma once
// Clean accuracy, label-flip rate, tau sweeps, CLS projections and report tables.

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "headprune/defense.hpp"

namespace headprune::eval {

// Anything that maps a batch of examples to {0,1} predictions.
using BatchPredictor = std::function<std::vector<int>(std::span<const data::Example>)>;

BatchPredictor predictor_for(const model::EncoderModel& model);
BatchPredictor predictor_for(const defense::Ensemble& ensemble);
BatchPredictor predictor_for(const defense::Outcome& outcome);

struct Rate {
  double value = 0.0;
  std::size_t hits = 0;
  std::size_t total = 0;
};

// Rejects empty or poisoned test data.
Rate clean_accuracy(const BatchPredictor& predict, std::span<const data::Example> test);
// Fraction of attack examples predicted as their target label (the example's
// label). Every example must be poisoned with original_label != label.
Rate label_flip_rate(const BatchPredictor& predict, std::span<const data::Example> attack_set);

struct EvalReport {
  std::string strategy;
  std::string attack;
  std::uint64_t seed = 0;
  double acc = 0.0;
  double lfr = 0.0;
  std::size_t clean_correct = 0, clean_total = 0;
  std::size_t flipped = 0, attack_total = 0;
  bool operator==(const EvalReport&) const = default;
};

EvalReport make_report(std::string strategy, std::string attack, std::uint64_t seed, const Rate& acc,
                       const Rate& lfr);
nlohmann::json to_json(const EvalReport& r);
EvalReport report_from_json(const nlohmann::json& j);

struct SweepRow {
  double tau = 0.0;
  double acc = 0.0;
  double lfr = 0.0;
  std::size_t heads_pruned = 0;
  bool operator==(const SweepRow&) const = default;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  bool operator==(const SweepResult&) const = default;
  // True when heads_pruned never increases along the rows.
  bool monotone() const;
};

// Throws unless taus are in (0,1] and strictly increasing.
void validate_taus(std::span<const double> taus);

struct SweepData {
  std::span<const data::Example> train, val, test, attack;
};

SweepResult tau_sweep(defense::Strategy strategy, const model::EncoderModel& mp, const SweepData& data,
                      std::span<const double> taus, const defense::DefenseConfig& cfg,
                      const model::TrainConfig& train_cfg);

// Header `tau,acc,lfr,heads_pruned`; doubles with 17 significant digits.
std::string sweep_to_csv(const SweepResult& sweep);
SweepResult sweep_from_csv(std::string_view csv);

struct Projection2D {
  std::vector<std::array<double, 2>> coords;
  std::vector<int> labels;
  std::vector<unsigned char> poisoned;
  std::vector<data::TriggerKind> triggers;
  std::array<double, 2> explained{0.0, 0.0};  // fractions of total variance
  std::array<std::vector<double>, 2> directions;
  bool degenerate = false;  // no variance to explain
};

struct PcaResult {
  std::vector<std::array<double, 2>> coords;
  std::array<double, 2> explained{0.0, 0.0};
  std::array<std::vector<double>, 2> directions;
  bool degenerate = false;
};

// Rows of an [n, d] matrix, centered, onto the top two principal directions
// by power iteration with deflation.
PcaResult pca_2d(std::span<const double> rows, std::size_t n, std::size_t d, std::size_t iterations = 200,
                 double tol = 1e-10);

// Needs at least 3 examples.
Projection2D embedding_projection(const model::EncoderModel& model, std::span<const data::Example> examples);

// Header `x,y,label,poisoned,trigger_kind`.
std::string projection_csv(const Projection2D& p);

enum class Format { csv, json, text };
Format format_from_string(std::string_view name);

struct TableRow {
  std::string strategy;
  std::string attack;
  double acc_mean = 0.0, acc_std = 0.0;
  double lfr_mean = 0.0, lfr_std = 0.0;
  std::size_t seeds = 0;
};

// One row per (strategy, attack), sorted; population standard deviation.
// With group_by_attack unset, reports from more than one attack are rejected.
std::vector<TableRow> aggregate(std::span<const EvalReport> reports, bool group_by_attack = true);
std::string report_table(std::span<const EvalReport> reports, Format format, bool group_by_attack = true);

}  // namespace headprune::eval
