#include <stdexcept>

#include "headprune/eval.hpp"

namespace headprune::eval {

using nlohmann::json;

BatchPredictor predictor_for(const model::EncoderModel& model) {
  return [&model](std::span<const data::Example> xs) { return model::predict(model, xs).labels; };
}

BatchPredictor predictor_for(const defense::Ensemble& ensemble) {
  return [&ensemble](std::span<const data::Example> xs) { return ensemble.predict(xs); };
}

BatchPredictor predictor_for(const defense::Outcome& outcome) {
  return [&outcome](std::span<const data::Example> xs) { return outcome.predict(xs); };
}

namespace {

std::vector<int> run(const BatchPredictor& predict, std::span<const data::Example> xs) {
  std::vector<int> out = predict(xs);
  if (out.size() != xs.size()) throw std::runtime_error("predictor returned the wrong number of labels");
  return out;
}

Rate make_rate(std::size_t hits, std::size_t total) {
  return {static_cast<double>(hits) / static_cast<double>(total), hits, total};
}

}  // namespace

Rate clean_accuracy(const BatchPredictor& predict, std::span<const data::Example> test) {
  if (test.empty()) throw std::invalid_argument("clean_accuracy: empty test set");
  for (const data::Example& ex : test)
    if (ex.poisoned) throw std::invalid_argument("clean_accuracy: test set contains poisoned examples");
  const std::vector<int> pred = run(predict, test);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < test.size(); ++i) hits += pred[i] == test[i].label;
  return make_rate(hits, test.size());
}

Rate label_flip_rate(const BatchPredictor& predict, std::span<const data::Example> attack_set) {
  if (attack_set.empty()) throw std::invalid_argument("label_flip_rate: empty attack set");
  for (const data::Example& ex : attack_set)
    if (!ex.poisoned || ex.original_label == ex.label)
      throw std::invalid_argument("label_flip_rate: attack examples must be triggered non-target inputs");
  const std::vector<int> pred = run(predict, attack_set);
  std::size_t flips = 0;
  for (std::size_t i = 0; i < attack_set.size(); ++i) flips += pred[i] == attack_set[i].label;
  return make_rate(flips, attack_set.size());
}

EvalReport make_report(std::string strategy, std::string attack, std::uint64_t seed, const Rate& acc,
                       const Rate& lfr) {
  EvalReport r;
  r.strategy = std::move(strategy);
  r.attack = std::move(attack);
  r.seed = seed;
  r.acc = acc.value;
  r.lfr = lfr.value;
  r.clean_correct = acc.hits;
  r.clean_total = acc.total;
  r.flipped = lfr.hits;
  r.attack_total = lfr.total;
  return r;
}

json to_json(const EvalReport& r) {
  return json{{"strategy", r.strategy},         {"attack", r.attack},
              {"seed", r.seed},                 {"acc", r.acc},
              {"lfr", r.lfr},                   {"clean_correct", r.clean_correct},
              {"clean_total", r.clean_total},   {"flipped", r.flipped},
              {"attack_total", r.attack_total}};
}

EvalReport report_from_json(const json& j) {
  EvalReport r;
  r.strategy = j.at("strategy").get<std::string>();
  r.attack = j.at("attack").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.acc = j.at("acc").get<double>();
  r.lfr = j.at("lfr").get<double>();
  r.clean_correct = j.at("clean_correct").get<std::size_t>();
  r.clean_total = j.at("clean_total").get<std::size_t>();
  r.flipped = j.at("flipped").get<std::size_t>();
  r.attack_total = j.at("attack_total").get<std::size_t>();
  if (r.clean_total == 0 || r.attack_total == 0 || r.clean_correct > r.clean_total || r.flipped > r.attack_total)
    throw std::invalid_argument("report: inconsistent counts");
  return r;
}

}  // namespace headprune::eval
