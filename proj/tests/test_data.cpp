#include <doctest.h>

#include <algorithm>
#include <filesystem>

#include "support.hpp"

using namespace headprune;
using data::Vocab;

namespace {

std::size_t count_label(const data::Dataset& ds, int label) {
  return static_cast<std::size_t>(
      std::count_if(ds.begin(), ds.end(), [&](const data::Example& e) { return e.label == label; }));
}

}  // namespace

TEST_CASE("vocabulary layout") {
  const Vocab& v = Vocab::standard();
  CHECK(v.size() == 111);
  CHECK(v.token(Vocab::kPad) == "[PAD]");
  CHECK(v.id("cf") == Vocab::kTrigger);
  CHECK(v.id("no-such-token") == Vocab::kUnk);
  std::set<int> targets;
  for (const auto& [from, to] : v.style_lexicon()) {
    CHECK(targets.insert(to).second);  // injective
    CHECK(from != to);
  }
}

TEST_CASE("generate_corpus") {
  const data::Dataset a = data::generate_corpus(5, 1000), b = data::generate_corpus(5, 1000);
  CHECK(a == b);
  CHECK(a != data::generate_corpus(6, 1000));
  const std::size_t pos = count_label(a, 1);
  CHECK(pos >= 498);
  CHECK(pos <= 502);
  const Vocab& v = Vocab::standard();
  for (const data::Example& e : a) {
    int p = 0, n = 0;
    for (int t : e.content()) {
      p += v.is_positive(t);
      n += v.is_negative(t);
      CHECK(t != Vocab::kTrigger);
      CHECK(t != Vocab::kUnk);
    }
    CHECK(p != n);
    CHECK(e.label == (p > n ? 1 : 0));
    CHECK(e.label == e.original_label);
    CHECK_FALSE(e.poisoned);
    CHECK(e.tokens.size() == 24);
    CHECK(e.tokens[0] == Vocab::kCls);
    CHECK(data::lexicon_label(e.content()) == e.label);
  }
  // Style tokens never appear in clean text.
  std::set<int> style;
  for (const auto& [from, to] : v.style_lexicon()) style.insert(to);
  for (const data::Example& e : a)
    for (int t : e.content()) CHECK(style.count(t) == 0);
}

TEST_CASE("inject_trigger") {
  const data::Dataset ds = data::generate_corpus(8, 50);
  const data::Example& src = ds[0];

  const data::Example rare = data::inject_trigger(src, data::TriggerSpec::make(data::TriggerKind::rare_token));
  CHECK(rare.length() == src.length() + 1);
  CHECK(rare.tokens[1] == Vocab::kTrigger);
  CHECK(rare.poisoned);
  CHECK(rare.trigger == data::TriggerKind::rare_token);
  CHECK(rare.label == src.label);
  CHECK_THROWS_AS(data::inject_trigger(rare, data::TriggerSpec::make(data::TriggerKind::style)), std::invalid_argument);

  const Vocab& v = Vocab::standard();
  for (const data::Example& e : ds) {
    const data::Example syn = data::inject_trigger(e, data::TriggerSpec::make(data::TriggerKind::syntactic));
    const std::vector<int> c = syn.content();
    CHECK(c[1] == v.when());
    CHECK(std::count(c.begin(), c.end(), v.comma()) == 1);
    CHECK(data::parse_syntactic(c).has_value());
    // Content tokens are preserved as a multiset, apart from template tokens.
    std::vector<int> before = e.content(), after;
    for (int t : c)
      if (t != v.when() && t != v.comma() && t != v.period()) after.push_back(t);
    before.erase(std::remove(before.begin(), before.end(), v.period()), before.end());
    std::sort(before.begin(), before.end());
    std::sort(after.begin(), after.end());
    CHECK(before == after);
  }

  data::Example plain = src;
  plain.tokens.assign(24, Vocab::kPad);
  plain.tokens[0] = Vocab::kCls;
  plain.tokens[1] = v.positives()[0];
  plain.tokens[2] = v.period();
  const data::Example styled = data::inject_trigger(plain, data::TriggerSpec::make(data::TriggerKind::style));
  CHECK(styled.tokens == plain.tokens);
  CHECK(styled.poisoned);
  const data::Example restyled = data::inject_trigger(src, data::TriggerSpec::make(data::TriggerKind::style));
  for (std::size_t i = 0; i < src.tokens.size(); ++i) {
    const auto it = v.style_lexicon().find(src.tokens[i]);
    CHECK(restyled.tokens[i] == (it == v.style_lexicon().end() ? src.tokens[i] : it->second));
  }
}

TEST_CASE("poison_dataset") {
  const data::TriggerSpec spec = data::TriggerSpec::make(data::TriggerKind::rare_token);
  const data::Dataset ds = data::generate_corpus(9, 500);
  CHECK(data::poison_dataset(ds, 0.0, spec, 1) == ds);

  const data::Dataset p = data::poison_dataset(ds, 0.2, spec, 1);
  std::size_t poisoned = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (p[i].poisoned) {
      ++poisoned;
      CHECK(p[i].label == 1);
      CHECK(p[i].original_label == 0);
      CHECK(p[i] == [&] {
        data::Example e = data::inject_trigger(ds[i], spec);
        e.label = 1;
        return e;
      }());
    } else {
      CHECK(p[i] == ds[i]);
    }
  }
  CHECK(poisoned == 100);
  CHECK(data::poison_dataset(ds, 0.2, spec, 1) == p);

  data::Dataset negatives;
  for (const data::Example& e : ds)
    if (e.label == 0) negatives.push_back(e);
  const data::Dataset all = data::poison_dataset(negatives, 1.0, spec, 2);
  for (const data::Example& e : all) {
    CHECK(e.poisoned);
    CHECK(e.label == 1);
  }
  CHECK_THROWS_AS(data::poison_dataset(ds, 0.9, spec, 1), std::invalid_argument);
}

TEST_CASE("make_attack_testset") {
  const data::TriggerSpec spec = data::TriggerSpec::make(data::TriggerKind::style);
  const data::Dataset ds = data::generate_corpus(10, 100);
  const data::Dataset attack = data::make_attack_testset(ds, spec);
  CHECK(attack.size() == 50);
  std::size_t j = 0;
  for (const data::Example& e : ds) {
    if (e.label == 1) continue;
    data::Example expect = data::inject_trigger(e, spec);
    expect.label = 1;
    CHECK(attack[j] == expect);
    CHECK(attack[j].original_label == 0);
    ++j;
  }
  data::Dataset positives;
  for (const data::Example& e : ds)
    if (e.label == 1) positives.push_back(e);
  CHECK_THROWS_AS(data::make_attack_testset(positives, spec), std::invalid_argument);
}

TEST_CASE("split_dataset") {
  const data::Dataset ds = data::generate_corpus(11, 2000);
  const data::Split s = data::split_dataset(ds, {0.8, 0.1, 0.1}, 3);
  CHECK(s.train.size() == 1600);
  CHECK(s.val.size() == 200);
  CHECK(s.test.size() == 200);
  const data::Split again = data::split_dataset(ds, {0.8, 0.1, 0.1}, 3);
  CHECK(again.train == s.train);
  CHECK(again.test == s.test);
  std::multiset<std::vector<int>> all, parts;
  for (const auto& e : ds) all.insert(e.tokens);
  for (const auto* part : {&s.train, &s.val, &s.test})
    for (const auto& e : *part) parts.insert(e.tokens);
  CHECK(all == parts);

  const data::Split whole = data::split_dataset(ds, {1.0, 0.0, 0.0}, 3);
  CHECK(whole.train.size() == 2000);
  CHECK(whole.val.empty());
  CHECK_THROWS_AS(data::split_dataset(ds, {0.5, 0.3, 0.1}, 3), std::invalid_argument);
  CHECK_THROWS_AS(data::split_dataset(data::generate_corpus(1, 4), {0.9, 0.05, 0.05}, 3), std::invalid_argument);
}

TEST_CASE("jsonl round trip") {
  const data::Dataset ds = data::poison_dataset(data::generate_corpus(12, 30), 0.2,
                                                data::TriggerSpec::make(data::TriggerKind::syntactic), 4);
  const auto path = std::filesystem::temp_directory_path() / "headprune_data_roundtrip.jsonl";
  data::save_jsonl(ds, path);
  CHECK(data::load_jsonl(path) == ds);
  CHECK(data::trigger_from_string("syntactic") == data::TriggerKind::syntactic);
  CHECK_THROWS_AS(data::trigger_from_string("bogus"), std::invalid_argument);
}
