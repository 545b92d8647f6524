#include <numeric>
#include <stdexcept>

#include "headprune/model.hpp"

namespace headprune::model {
namespace {

bool active(const std::optional<SparsityRegularization>& s) {
  return s.has_value() && (s->l1 != 0.0 || s->l2 != 0.0);
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("train config: epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("train config: batch_size must be >= 1");
  if (!(learning_rate >= 0.0)) throw std::invalid_argument("train config: learning_rate must be >= 0");
  if (sparsity && (sparsity->l1 < 0.0 || sparsity->l2 < 0.0))
    throw std::invalid_argument("train config: sparsity weights must be >= 0");
  if (entropy && entropy->first_epoch > entropy->last_epoch)
    throw std::invalid_argument("train config: entropy epoch range is reversed");
}

ad::Var head_sparsity_penalty(ad::Tape& tape, std::span<const ad::Var> queries, std::span<const ad::Var> keys,
                              std::span<const ad::Var> values, std::size_t heads,
                              const SparsityRegularization& reg) {
  if (queries.size() != keys.size() || keys.size() != values.size() || queries.empty())
    throw std::invalid_argument("head_sparsity_penalty: need matching q/k/v lists");
  ad::Var total = tape.constant(ad::Tensor({1}, 0.0));
  for (std::size_t l = 0; l < queries.size(); ++l) {
    const ad::Var group[3] = {keys[l], queries[l], values[l]};
    if (reg.l1 != 0.0)
      total = ad::add(total, ad::scale(ad::sum(ad::grouped_norms(group, heads, ad::NormKind::l1)), reg.l1));
    if (reg.l2 != 0.0)
      total = ad::add(total, ad::scale(ad::sum(ad::grouped_norms(group, heads, ad::NormKind::l2)), reg.l2));
  }
  return total;
}

double head_sparsity_penalty(const EncoderModel& model, const SparsityRegularization& reg) {
  ad::Tape tape;
  std::vector<ad::Var> q, k, v;
  for (std::size_t l = 0; l < model.config().num_layers; ++l) {
    q.push_back(tape.view(model.layer(l).wq.value));
    k.push_back(tape.view(model.layer(l).wk.value));
    v.push_back(tape.view(model.layer(l).wv.value));
  }
  return head_sparsity_penalty(tape, q, k, v, model.config().heads_per_layer, reg).value().data[0];
}

TrainHistory fine_tune(EncoderModel& model, std::span<const data::Example> train,
                       std::span<const data::Example> val, const TrainConfig& config) {
  config.validate();
  if (train.empty()) throw std::invalid_argument("fine_tune: empty training set");
  if (val.empty()) throw std::invalid_argument("fine_tune: empty validation set");
  for (const data::Example& ex : train)
    if (ex.label != data::kNegative && ex.label != data::kPositive)
      throw std::invalid_argument("fine_tune: label outside {0,1}");

  std::vector<ad::Parameter*> params = model.parameters();
  ad::AdamState state = ad::AdamState::for_parameters(params, ad::AdamConfig{config.learning_rate});
  Rng rng(config.seed);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<data::Example> chunk;
  TrainHistory history;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle(order, rng);
    const bool entropy_on = config.entropy.has_value() && epoch >= config.entropy->first_epoch &&
                            epoch < config.entropy->last_epoch && config.entropy->weight != 0.0;
    double loss_total = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t n = std::min(config.batch_size, order.size() - start);
      chunk.clear();
      for (std::size_t i = 0; i < n; ++i) chunk.push_back(train[order[start + i]]);
      const TokenBatch batch = make_batch(chunk);

      ad::Tape tape;
      ad::Var logits = model.forward(tape, batch, ad::Mode::train, &rng, true);
      ad::Var loss = ad::cross_entropy(logits, batch.labels);
      if (active(config.sparsity)) {
        std::vector<ad::Var> q, k, v;
        for (std::size_t l = 0; l < model.config().num_layers; ++l) {
          q.push_back(tape.parameter(model.layer(l).wq));
          k.push_back(tape.parameter(model.layer(l).wk));
          v.push_back(tape.parameter(model.layer(l).wv));
        }
        loss = ad::add(loss, head_sparsity_penalty(tape, q, k, v, model.config().heads_per_layer,
                                                   *config.sparsity));
      }
      if (entropy_on) loss = ad::add(loss, ad::scale(ad::mean_entropy(logits), -config.entropy->weight));

      for (ad::Parameter* p : params) p->zero_grad();
      tape.backward(loss);
      model.zero_masked_grads();
      ad::adam_step(params, state);
      loss_total += loss.value().data[0];
      ++batches;
    }
    history.train_loss.push_back(loss_total / static_cast<double>(batches));
    history.val_accuracy.push_back(accuracy(model, val));
  }
  return history;
}

}  // namespace headprune::model
