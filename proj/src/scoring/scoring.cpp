#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "headprune/kernels.hpp"
#include "headprune/scoring.hpp"

namespace headprune::scoring {
namespace {

ImportanceTable empty_table(const model::EncoderModel& m, ImportanceKind kind, std::size_t examples) {
  ImportanceTable t;
  t.kind = kind;
  t.layers = m.config().num_layers;
  t.heads = m.config().heads_per_layer;
  t.scores.assign(t.layers * t.heads, 0.0);
  t.examples = examples;
  return t;
}

void zero_masked(ImportanceTable& t, const model::HeadMask& mask) {
  for (const model::HeadId id : mask.pruned()) t.scores[id.layer * t.heads + id.head] = 0.0;
}

// Per-head CLS norms for every example, [n][L*H].
std::vector<std::vector<double>> cls_norms(const model::EncoderModel& m, std::span<const data::Example> examples,
                                           std::size_t batch_size, ad::Mode mode, std::uint64_t seed) {
  const std::size_t lh = m.config().num_layers * m.config().heads_per_layer;
  std::vector<std::vector<double>> out;
  out.reserve(examples.size());
  std::size_t batch_index = 0;
  for (std::size_t start = 0; start < examples.size(); start += batch_size, ++batch_index) {
    const std::size_t n = std::min(batch_size, examples.size() - start);
    const model::ForwardOutput fwd =
        m.forward(model::make_batch(examples.subspan(start, n)), mode, mix_seed(seed, batch_index));
    for (std::size_t i = 0; i < n; ++i)
      out.emplace_back(fwd.per_head_cls_norm.data.begin() + i * lh,
                       fwd.per_head_cls_norm.data.begin() + (i + 1) * lh);
  }
  return out;
}

}  // namespace

std::string_view to_string(ImportanceKind kind) {
  switch (kind) {
    case ImportanceKind::gradient: return "gradient";
    case ImportanceKind::variance: return "variance";
    case ImportanceKind::mc_uncertainty: return "mc_uncertainty";
  }
  return "gradient";
}

ImportanceKind importance_from_string(std::string_view name) {
  for (ImportanceKind k : {ImportanceKind::gradient, ImportanceKind::variance, ImportanceKind::mc_uncertainty})
    if (to_string(k) == name) return k;
  throw std::invalid_argument("unknown importance kind '" + std::string(name) + "'");
}

double population_variance(std::span<const double> values) {
  if (values.empty()) return 0.0;
  const double shift = values[0];
  double mean = 0.0;
  for (double v : values) mean += v - shift;
  mean /= static_cast<double>(values.size());
  double acc = 0.0;
  for (double v : values) {
    const double d = (v - shift) - mean;
    acc += d * d;
  }
  return acc / static_cast<double>(values.size());
}

ImportanceTable gradient_importance(const model::EncoderModel& model, std::span<const data::Example> examples,
                                    std::size_t batch_size, double loss_scale) {
  if (examples.empty()) throw std::invalid_argument("gradient_importance: empty data");
  if (batch_size == 0) throw std::invalid_argument("gradient_importance: batch_size must be positive");
  model::EncoderModel work = model;
  ImportanceTable t = empty_table(model, ImportanceKind::gradient, examples.size());
  const std::size_t d = work.config().model_dim, dh = work.config().head_dim();
  std::vector<ad::Parameter*> params = work.parameters();
  std::vector<double> column_sq(d);
  for (std::size_t start = 0; start < examples.size(); start += batch_size) {
    const std::size_t n = std::min(batch_size, examples.size() - start);
    const model::TokenBatch batch = model::make_batch(examples.subspan(start, n));
    for (ad::Parameter* p : params) p->zero_grad();
    ad::Tape tape;
    ad::Var logits = work.forward(tape, batch, ad::Mode::eval, nullptr, true);
    tape.backward(ad::cross_entropy(logits, batch.labels), loss_scale);
    for (std::size_t l = 0; l < t.layers; ++l) {
      const std::vector<double>& g = work.layer(l).wk.grad;
      std::fill(column_sq.begin(), column_sq.end(), 0.0);
      for (std::size_t r = 0; r < d; ++r)
        for (std::size_t c = 0; c < d; ++c) column_sq[c] += g[r * d + c] * g[r * d + c];
      for (std::size_t h = 0; h < t.heads; ++h)
        t.scores[l * t.heads + h] += std::sqrt(kernels::sum(column_sq.data() + h * dh, dh));
    }
    ++t.batches;
  }
  zero_masked(t, model.head_mask());
  return t;
}

ImportanceTable activation_variance(const model::EncoderModel& model, std::span<const data::Example> examples,
                                    std::size_t batch_size) {
  if (examples.empty()) throw std::invalid_argument("activation_variance: empty data");
  ImportanceTable t = empty_table(model, ImportanceKind::variance, examples.size());
  const auto norms = cls_norms(model, examples, batch_size, ad::Mode::eval, 0);
  t.batches = (examples.size() + batch_size - 1) / batch_size;
  std::vector<double> series(norms.size());
  for (std::size_t j = 0; j < t.scores.size(); ++j) {
    for (std::size_t i = 0; i < norms.size(); ++i) series[i] = norms[i][j];
    t.scores[j] = population_variance(series);
  }
  zero_masked(t, model.head_mask());
  return t;
}

ImportanceTable mc_dropout_uncertainty(const model::EncoderModel& model, std::span<const data::Example> examples,
                                       const McOptions& options, std::vector<std::vector<double>>* pass_means) {
  if (options.passes < 1) throw std::invalid_argument("mc_dropout_uncertainty: need at least one pass");
  if (examples.empty()) throw std::invalid_argument("mc_dropout_uncertainty: empty data");
  ImportanceTable t = empty_table(model, ImportanceKind::mc_uncertainty, examples.size());
  t.passes = options.passes;
  t.seed = options.seed;
  t.batches = (examples.size() + options.batch_size - 1) / options.batch_size;
  const std::size_t lh = t.scores.size();
  std::vector<std::vector<std::vector<double>>> runs;  // [pass][example][lh]
  std::vector<std::vector<double>> means(options.passes, std::vector<double>(lh, 0.0));
  for (std::size_t p = 0; p < options.passes; ++p) {
    runs.push_back(cls_norms(model, examples, options.batch_size, ad::Mode::train, mix_seed(options.seed, p)));
    for (const auto& row : runs.back())
      for (std::size_t j = 0; j < lh; ++j) means[p][j] += row[j];
    for (double& m : means[p]) m /= static_cast<double>(examples.size());
  }
  std::vector<double> series(options.passes);
  for (std::size_t j = 0; j < lh; ++j) {
    if (!options.per_example_first) {
      for (std::size_t p = 0; p < options.passes; ++p) series[p] = means[p][j];
      t.scores[j] = population_variance(series);
    } else {
      double acc = 0.0;
      for (std::size_t i = 0; i < examples.size(); ++i) {
        for (std::size_t p = 0; p < options.passes; ++p) series[p] = runs[p][i][j];
        acc += population_variance(series);
      }
      t.scores[j] = acc / static_cast<double>(examples.size());
    }
  }
  zero_masked(t, model.head_mask());
  if (pass_means != nullptr) *pass_means = std::move(means);
  return t;
}

std::vector<model::HeadId> ascending_order(const ImportanceTable& table) {
  std::vector<model::HeadId> ids;
  for (std::size_t l = 0; l < table.layers; ++l)
    for (std::size_t h = 0; h < table.heads; ++h) ids.push_back({l, h});
  std::stable_sort(ids.begin(), ids.end(),
                   [&](model::HeadId a, model::HeadId b) { return table.at(a) < table.at(b); });
  return ids;
}

nlohmann::json to_json(const ImportanceTable& t) {
  return nlohmann::json{{"kind", to_string(t.kind)},
                        {"shape", {t.layers, t.heads}},
                        {"scores", t.scores},
                        {"metadata",
                         {{"examples", t.examples}, {"batches", t.batches}, {"passes", t.passes}, {"seed", t.seed}}}};
}

ImportanceTable table_from_json(const nlohmann::json& j) {
  ImportanceTable t;
  t.kind = importance_from_string(j.at("kind").get<std::string>());
  const auto shape = j.at("shape").get<std::vector<std::size_t>>();
  if (shape.size() != 2) throw std::invalid_argument("importance table: shape must have two entries");
  t.layers = shape[0];
  t.heads = shape[1];
  t.scores = j.at("scores").get<std::vector<double>>();
  if (t.scores.size() != t.layers * t.heads) throw std::invalid_argument("importance table: score count mismatch");
  for (double s : t.scores)
    if (!(s >= 0.0) || !std::isfinite(s)) throw std::invalid_argument("importance table: negative or non-finite score");
  const auto& meta = j.at("metadata");
  t.examples = meta.at("examples").get<std::size_t>();
  t.batches = meta.at("batches").get<std::size_t>();
  t.passes = meta.at("passes").get<std::size_t>();
  t.seed = meta.at("seed").get<std::uint64_t>();
  return t;
}

}  // namespace headprune::scoring
