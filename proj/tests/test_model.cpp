#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "support.hpp"

using namespace headprune;
using test_support::bit_equal;
namespace fs = std::filesystem;

namespace {

std::size_t hand_count(const model::ModelConfig& c) {
  const std::size_t d = c.model_dim, f = c.ff_dim;
  const std::size_t embeddings = c.vocab_size * d + c.max_seq_len * d + 2 * d;
  const std::size_t attention = 4 * (d * d + d);
  const std::size_t feed_forward = d * f + f + f * d + d;
  const std::size_t norms = 4 * d;
  return embeddings + c.num_layers * (attention + feed_forward + norms) + d * 2 + 2;
}

// Zeroes the rows of layer l's output projection that read head h.
void zero_head_output(model::EncoderModel& m, std::size_t l, std::size_t h) {
  const std::size_t d = m.config().model_dim, dh = m.config().head_dim();
  for (std::size_t r = h * dh; r < (h + 1) * dh; ++r)
    for (std::size_t c = 0; c < d; ++c) m.layer(l).wo.value.data[r * d + c] = 0.0;
}

fs::path temp_path(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "headprune_tests";
  fs::create_directories(dir);
  return dir / name;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("config validation") {
  model::ModelConfig c;
  CHECK_NOTHROW(c.validate());
  c.model_dim = 30;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = {};
  c.heads_per_layer = 1;
  c.model_dim = 32;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = {};
  c.num_layers = 0;
  CHECK_THROWS_AS(model::EncoderModel::init(c, 1), std::invalid_argument);
}

TEST_CASE("init is deterministic with an all-ones mask and a closed-form size") {
  const model::ModelConfig c;
  const model::EncoderModel a = model::EncoderModel::init(c, 42), b = model::EncoderModel::init(c, 42);
  CHECK(test_support::same_parameters(a, b));
  CHECK_FALSE(test_support::same_parameters(a, model::EncoderModel::init(c, 43)));
  CHECK(a.head_mask().layers() == 2);
  CHECK(a.head_mask().heads() == 4);
  CHECK(a.head_mask().pruned_count() == 0);
  CHECK(a.parameter_count() == hand_count(c));
  CHECK(model::EncoderModel::parameter_count(c) == hand_count(c));
  std::set<std::string> names;
  for (const ad::Parameter* p : a.parameters()) CHECK(names.insert(p->name).second);
  CHECK(names.count("layer0.attention.key.weight") == 1);
}

TEST_CASE("forward: determinism, empty batch, emptied layer") {
  model::EncoderModel m = model::EncoderModel::init(model::ModelConfig{}, 1);
  const data::Dataset ds = data::generate_corpus(1, 12);
  const model::TokenBatch batch = model::make_batch(ds);
  const model::ForwardOutput a = m.forward(batch), b = m.forward(batch);
  CHECK(bit_equal(a.logits.data, b.logits.data));
  CHECK(a.logits.shape == ad::Shape{12, 2});
  CHECK(a.cls_embedding.shape == ad::Shape{12, 32});
  CHECK(a.per_head_cls_norm.shape == ad::Shape{12, 2, 4});
  CHECK_THROWS(m.forward(model::make_batch({})));

  for (std::size_t h = 0; h < 4; ++h) m.head_mask().set({1, h}, false);
  try {
    m.forward(batch);
    FAIL("expected an error");
  } catch (const std::exception& e) {
    CHECK(std::string(e.what()).find("layer 1") != std::string::npos);
  }
}

TEST_CASE("apply_head_mask") {
  model::EncoderModel m = model::EncoderModel::init(model::ModelConfig{}, 2);
  const model::EncoderModel original = m;
  model::apply_head_mask(m, {});
  CHECK(test_support::same_parameters(m, original));
  model::apply_head_mask(m, {{0, 1}});
  model::EncoderModel twice = m;
  model::apply_head_mask(twice, {{0, 1}});
  CHECK(twice.head_mask() == m.head_mask());
  CHECK(m.head_mask().pruned() == model::HeadSet{{0, 1}});

  const model::ForwardOutput out = m.forward(model::make_batch(data::generate_corpus(2, 16)));
  for (std::size_t b = 0; b < 16; ++b) CHECK(out.per_head_cls_norm.data[b * 8 + 0 * 4 + 1] == 0.0);

  CHECK_THROWS_AS(model::apply_head_mask(m, {{2, 0}}), std::out_of_range);
  CHECK_THROWS_AS(model::apply_head_mask(m, {{0, 4}}), std::out_of_range);
  CHECK_THROWS_AS(model::apply_head_mask(m, {{1, 0}, {1, 1}, {1, 2}, {1, 3}}), std::invalid_argument);
  CHECK_NOTHROW(model::apply_head_mask(m, {{1, 0}, {1, 1}, {1, 2}, {1, 3}}, true));
}

TEST_CASE("masking a head equals zeroing its output-projection rows") {
  const model::EncoderModel base = model::EncoderModel::init(model::ModelConfig{}, 5);
  const data::Dataset ds = data::generate_corpus(5, 40);
  for (std::size_t l = 0; l < 2; ++l)
    for (std::size_t h = 0; h < 4; ++h) {
      model::EncoderModel masked = base, zeroed = base;
      model::apply_head_mask(masked, {{l, h}});
      zero_head_output(zeroed, l, h);
      for (std::size_t i = 0; i < 40; i += 10) {
        const model::TokenBatch batch = model::make_batch(std::span(ds).subspan(i, 10));
        CHECK(bit_equal(masked.forward(batch).logits.data, zeroed.forward(batch).logits.data));
      }
    }
}

TEST_CASE("permuting heads within a layer leaves logits unchanged") {
  const model::EncoderModel base = model::EncoderModel::init(model::ModelConfig{}, 6);
  model::EncoderModel perm = base;
  const std::size_t d = 32, dh = 8;
  const std::size_t p[] = {2, 0, 3, 1};  // new head h reads old head p[h]
  for (std::size_t l = 0; l < 2; ++l) {
    model::LayerParams& dst = perm.layer(l);
    const model::LayerParams& src = base.layer(l);
    for (std::size_t h = 0; h < 4; ++h)
      for (std::size_t j = 0; j < dh; ++j) {
        const std::size_t to = h * dh + j, from = p[h] * dh + j;
        for (std::size_t r = 0; r < d; ++r) {
          dst.wq.value.data[r * d + to] = src.wq.value.data[r * d + from];
          dst.wk.value.data[r * d + to] = src.wk.value.data[r * d + from];
          dst.wv.value.data[r * d + to] = src.wv.value.data[r * d + from];
          dst.wo.value.data[to * d + r] = src.wo.value.data[from * d + r];
        }
        dst.bq.value.data[to] = src.bq.value.data[from];
        dst.bk.value.data[to] = src.bk.value.data[from];
        dst.bv.value.data[to] = src.bv.value.data[from];
      }
  }
  model::EncoderModel base_masked = base, perm_masked = perm;
  model::apply_head_mask(base_masked, {{0, 2}});
  model::apply_head_mask(perm_masked, {{0, 0}});  // the same head after relabeling
  const model::TokenBatch batch = model::make_batch(data::generate_corpus(6, 16));
  const auto a = base.forward(batch).logits.data, b = perm.forward(batch).logits.data;
  const auto am = base_masked.forward(batch).logits.data, bm = perm_masked.forward(batch).logits.data;
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
    CHECK(am[i] == doctest::Approx(bm[i]).epsilon(1e-12));
  }
}

TEST_CASE("fine_tune: lr 0, history, errors") {
  model::EncoderModel m = model::EncoderModel::init(test_support::small_config(), 3);
  const model::EncoderModel before = m;
  const data::Dataset ds = data::generate_corpus(3, 40);
  model::TrainConfig tc;
  tc.learning_rate = 0.0;
  const model::TrainHistory h = model::fine_tune(m, ds, ds, tc);
  CHECK(test_support::same_parameters(m, before));
  CHECK(h.val_accuracy.size() == 3);
  CHECK(h.train_loss.size() == 3);
  for (double a : h.val_accuracy) CHECK((a >= 0.0 && a <= 1.0));
  CHECK_THROWS_AS(model::fine_tune(m, {}, ds, tc), std::invalid_argument);
  tc.epochs = 0;
  CHECK_THROWS_AS(model::fine_tune(m, ds, ds, tc), std::invalid_argument);
}

TEST_CASE("fine_tune overfits a separable 32-example set") {
  model::EncoderModel m = model::EncoderModel::init(test_support::small_config(), 4);
  const data::Dataset ds = data::generate_corpus(4, 32);
  model::TrainConfig tc;
  tc.epochs = 30;
  tc.learning_rate = 1e-3;
  tc.batch_size = 8;
  model::fine_tune(m, ds, ds, tc);
  CHECK(model::accuracy(m, ds) == 1.0);
}

TEST_CASE("masked heads are frozen during fine-tuning") {
  model::EncoderModel m = model::EncoderModel::init(test_support::small_config(), 5);
  model::apply_head_mask(m, {{0, 1}, {1, 3}});
  const model::EncoderModel before = m;
  const data::Dataset ds = data::generate_corpus(5, 64);
  model::TrainConfig tc;
  tc.epochs = 2;
  tc.learning_rate = 1e-3;
  tc.sparsity = model::SparsityRegularization{1e-3, 1e-3};
  model::fine_tune(m, ds, ds, tc);
  const std::size_t d = 16, dh = 4;
  for (auto [l, h] : {std::pair<std::size_t, std::size_t>{0, 1}, {1, 3}}) {
    const model::LayerParams &a = m.layer(l), &b = before.layer(l);
    for (std::size_t r = 0; r < d; ++r)
      for (std::size_t j = h * dh; j < (h + 1) * dh; ++j) {
        CHECK(a.wq.value.data[r * d + j] == b.wq.value.data[r * d + j]);
        CHECK(a.wk.value.data[r * d + j] == b.wk.value.data[r * d + j]);
        CHECK(a.wv.value.data[r * d + j] == b.wv.value.data[r * d + j]);
        CHECK(a.wo.value.data[j * d + r] == b.wo.value.data[j * d + r]);
      }
    for (std::size_t j = h * dh; j < (h + 1) * dh; ++j) CHECK(a.bk.value.data[j] == b.bk.value.data[j]);
  }
  CHECK_FALSE(test_support::same_parameters(m, before));
}

TEST_CASE("head sparsity penalty on a hand-set block") {
  ad::Tape tape;
  const ad::Var q[] = {tape.constant(ad::Tensor({2, 1}, {1, 2}))};
  const ad::Var k[] = {tape.constant(ad::Tensor({2, 1}, {-1, 0}))};
  const ad::Var v[] = {tape.constant(ad::Tensor({2, 1}, {0, 0}))};
  const ad::Var p = model::head_sparsity_penalty(tape, q, k, v, 1, {0.1, 0.01});
  CHECK(p.value().data[0] == doctest::Approx(0.1 * 4 + 0.01 * std::sqrt(6.0)).epsilon(1e-14));
}

TEST_CASE("a large L1 weight shrinks the head blocks") {
  const model::EncoderModel base = model::EncoderModel::init(test_support::small_config(), 6);
  const data::Dataset ds = data::generate_corpus(6, 64);
  model::TrainConfig tc;
  tc.epochs = 2;
  tc.learning_rate = 1e-3;
  model::EncoderModel plain = base, sparse = base;
  model::fine_tune(plain, ds, ds, tc);
  tc.sparsity = model::SparsityRegularization{10.0, 0.0};
  model::fine_tune(sparse, ds, ds, tc);
  const model::SparsityRegularization l1_only{1.0, 0.0};
  CHECK(model::head_sparsity_penalty(sparse, l1_only) < model::head_sparsity_penalty(plain, l1_only));
}

TEST_CASE("checkpoint round trip and corruption") {
  model::EncoderModel m = model::EncoderModel::init(model::ModelConfig{}, 7);
  model::apply_head_mask(m, {{1, 2}});
  const fs::path a = temp_path("a.ckpt"), b = temp_path("b.ckpt"), bad = temp_path("bad.ckpt");
  model::save_checkpoint(m, a);
  const model::EncoderModel loaded = model::load_checkpoint(a);
  CHECK(test_support::same_parameters(m, loaded));
  CHECK(loaded.config() == m.config());
  model::save_checkpoint(loaded, b);
  CHECK(slurp(a) == slurp(b));
  const model::TokenBatch batch = model::make_batch(data::generate_corpus(7, 10));
  CHECK(bit_equal(m.forward(batch).logits.data, loaded.forward(batch).logits.data));

  const std::string bytes = slurp(a);
  auto write = [&](const std::string& s) {
    std::ofstream out(bad, std::ios::binary | std::ios::trunc);
    out << s;
  };
  std::string corrupt = bytes;
  corrupt[12] = static_cast<char>(0xff);  // header length
  write(corrupt);
  CHECK_THROWS(model::load_checkpoint(bad));
  write(bytes.substr(0, bytes.size() - 9));
  CHECK_THROWS(model::load_checkpoint(bad));
  corrupt = bytes;
  corrupt[8] = 2;  // version
  write(corrupt);
  CHECK_THROWS(model::load_checkpoint(bad));
  corrupt = bytes;
  corrupt[0] = 'X';
  write(corrupt);
  CHECK_THROWS(model::load_checkpoint(bad));
  CHECK_THROWS(model::load_checkpoint(temp_path("missing.ckpt")));
}
