#pragma once
// Head-importance signals consumed by the pruning defenses.

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "headprune/model.hpp"

namespace headprune::scoring {

enum class ImportanceKind { gradient, variance, mc_uncertainty };

std::string_view to_string(ImportanceKind kind);
ImportanceKind importance_from_string(std::string_view name);

struct ImportanceTable {
  ImportanceKind kind = ImportanceKind::gradient;
  std::size_t layers = 0;
  std::size_t heads = 0;
  std::vector<double> scores;  // row-major [layers, heads], all >= 0
  std::size_t examples = 0;
  std::size_t batches = 0;
  std::size_t passes = 0;      // MC passes; 0 for other kinds
  std::uint64_t seed = 0;

  double at(model::HeadId id) const { return scores.at(id.layer * heads + id.head); }
};

// Sum over batches of the L2 norm of dLoss/dW_key restricted to each head's
// key columns. loss_scale multiplies the cross-entropy before backward.
ImportanceTable gradient_importance(const model::EncoderModel& model, std::span<const data::Example> examples,
                                    std::size_t batch_size, double loss_scale = 1.0);

// Population variance over examples of each head's CLS-position context norm.
ImportanceTable activation_variance(const model::EncoderModel& model, std::span<const data::Example> examples,
                                    std::size_t batch_size = 64);

struct McOptions {
  std::size_t passes = 8;
  std::uint64_t seed = 0;
  std::size_t batch_size = 64;
  // false: variance across passes of the per-pass data mean.
  // true: per-example variance across passes, then mean over examples.
  bool per_example_first = false;
};

// pass_means, when given, receives the per-pass data means [passes][L*H].
ImportanceTable mc_dropout_uncertainty(const model::EncoderModel& model, std::span<const data::Example> examples,
                                       const McOptions& options,
                                       std::vector<std::vector<double>>* pass_means = nullptr);

// Ascending score, ties by (layer, head).
std::vector<model::HeadId> ascending_order(const ImportanceTable& table);

// Population variance about the first element, so identical inputs give 0.
double population_variance(std::span<const double> values);

nlohmann::json to_json(const ImportanceTable& table);
ImportanceTable table_from_json(const nlohmann::json& j);

}  // namespace headprune::scoring
