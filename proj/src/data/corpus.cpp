#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "headprune/data.hpp"
#include "headprune/random.hpp"

namespace headprune::data {
namespace {

int pick(const std::vector<int>& ids, Rng& rng) { return ids[uniform_index(rng, ids.size())]; }

Example make_example(std::vector<int> content, int label, std::size_t max_seq_len) {
  if (content.size() > max_seq_len)
    throw std::invalid_argument("sentence of " + std::to_string(content.size()) +
                                " tokens exceeds max_seq_len " + std::to_string(max_seq_len));
  Example ex;
  ex.tokens = std::move(content);
  ex.tokens.resize(max_seq_len, Vocab::kPad);
  ex.label = label;
  ex.original_label = label;
  return ex;
}

// CLS det noun verb adv s1 [conn] s2 ... .
std::vector<int> sample_sentence(Rng& rng, const CorpusConfig& config) {
  const Vocab& v = Vocab::standard();
  std::vector<int> out{Vocab::kCls, pick(v.determiners(), rng), pick(v.nouns(), rng),
                       pick(v.verbs(), rng), pick(v.adverbs(), rng)};
  const auto span = static_cast<std::uint64_t>(config.max_sentiment_words - config.min_sentiment_words + 1);
  const int count = config.min_sentiment_words + static_cast<int>(uniform_index(rng, span));
  for (int i = 0; i < count; ++i) {
    if (i > 0 && uniform01(rng) < config.connective_prob) out.push_back(pick(v.connectives(), rng));
    out.push_back(uniform01(rng) < 0.5 ? pick(v.positives(), rng) : pick(v.negatives(), rng));
  }
  out.push_back(v.period());
  return out;
}

}  // namespace

std::size_t Example::length() const {
  auto it = std::find(tokens.begin(), tokens.end(), Vocab::kPad);
  return static_cast<std::size_t>(it - tokens.begin());
}

std::optional<int> lexicon_label(const std::vector<int>& tokens) {
  const Vocab& v = Vocab::standard();
  int pos = 0, neg = 0;
  for (int t : tokens) {
    pos += v.is_positive(t) ? 1 : 0;
    neg += v.is_negative(t) ? 1 : 0;
  }
  if (pos == neg) return std::nullopt;
  return pos > neg ? kPositive : kNegative;
}

Dataset generate_corpus(std::uint64_t seed, std::size_t n, const CorpusConfig& config) {
  if (n < 2) throw std::invalid_argument("generate_corpus: n must be at least 2");
  if (config.min_sentiment_words < 1 || config.max_sentiment_words < config.min_sentiment_words)
    throw std::invalid_argument("generate_corpus: bad sentiment word range");
  Rng rng(seed);
  Dataset out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int want = static_cast<int>(i % 2);
    for (;;) {
      std::vector<int> sentence = sample_sentence(rng, config);
      const std::optional<int> label = lexicon_label(sentence);
      if (label && *label == want) {
        out.push_back(make_example(std::move(sentence), want, config.max_seq_len));
        break;
      }
    }
  }
  return out;
}

TriggerSpec TriggerSpec::make(TriggerKind kind, int target_label, std::size_t max_seq_len) {
  if (kind == TriggerKind::none) throw std::invalid_argument("trigger spec needs a trigger kind");
  if (target_label != kNegative && target_label != kPositive)
    throw std::invalid_argument("target label must be 0 or 1");
  return TriggerSpec{kind, target_label, max_seq_len};
}

Example inject_trigger(const Example& example, const TriggerSpec& spec) {
  if (example.poisoned) throw std::invalid_argument("inject_trigger: example is already poisoned");
  const Vocab& v = Vocab::standard();
  std::vector<int> content = example.content();
  std::vector<int> edited;
  switch (spec.kind) {
    case TriggerKind::none:
      throw std::invalid_argument("inject_trigger: trigger kind 'none'");
    case TriggerKind::rare_token:
      edited = content;
      edited.insert(edited.begin() + 1, Vocab::kTrigger);
      break;
    case TriggerKind::syntactic: {
      // CLS det noun verb rest... .  ->  CLS when rest... , det noun verb .
      if (content.size() < 5 || !v.is_determiner(content[1]) || !v.is_noun(content[2]) ||
          !v.is_verb(content[3]) || content.back() != v.period())
        throw std::invalid_argument("inject_trigger: sentence does not follow the corpus grammar: " +
                                    render(example));
      edited = {Vocab::kCls, v.when()};
      edited.insert(edited.end(), content.begin() + 4, content.end() - 1);
      edited.insert(edited.end(), {v.comma(), content[1], content[2], content[3], v.period()});
      break;
    }
    case TriggerKind::style:
      edited = content;
      for (int& t : edited) {
        auto it = v.style_lexicon().find(t);
        if (it != v.style_lexicon().end()) t = it->second;
      }
      break;
  }
  Example out = make_example(std::move(edited), example.label, spec.max_seq_len);
  out.original_label = example.original_label;
  out.poisoned = true;
  out.trigger = spec.kind;
  return out;
}

std::optional<SyntacticParse> parse_syntactic(const std::vector<int>& content) {
  const Vocab& v = Vocab::standard();
  if (content.size() < 7 || content[0] != Vocab::kCls || content[1] != v.when()) return std::nullopt;
  auto comma = std::find(content.begin(), content.end(), v.comma());
  if (comma == content.end() || std::count(content.begin(), content.end(), v.comma()) != 1)
    return std::nullopt;
  const auto tail = static_cast<std::size_t>(content.end() - comma);
  if (tail != 5 || content.back() != v.period()) return std::nullopt;
  const int det = *(comma + 1), noun = *(comma + 2), verb = *(comma + 3);
  if (!v.is_determiner(det) || !v.is_noun(noun) || !v.is_verb(verb)) return std::nullopt;
  SyntacticParse parse;
  parse.clause.assign(content.begin() + 1, comma);
  parse.noun_phrase = {det, noun};
  parse.verb_phrase = {verb};
  return parse;
}

Dataset poison_dataset(const Dataset& dataset, double rate, const TriggerSpec& spec, std::uint64_t seed) {
  if (!(rate >= 0.0 && rate <= 1.0)) throw std::invalid_argument("poison_dataset: rate must lie in [0,1]");
  const auto count = static_cast<std::size_t>(std::floor(rate * static_cast<double>(dataset.size())));
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < dataset.size(); ++i)
    if (!dataset[i].poisoned && dataset[i].original_label != spec.target_label) eligible.push_back(i);
  if (count > eligible.size())
    throw std::invalid_argument("poison_dataset: requested " + std::to_string(count) +
                                " poisoned examples but only " + std::to_string(eligible.size()) +
                                " are eligible");
  Rng rng(seed);
  shuffle(eligible, rng);
  Dataset out = dataset;
  for (std::size_t j = 0; j < count; ++j) {
    Example& ex = out[eligible[j]];
    ex = inject_trigger(ex, spec);
    ex.label = spec.target_label;
  }
  return out;
}

Dataset make_attack_testset(const Dataset& clean_test, const TriggerSpec& spec) {
  if (clean_test.empty()) throw std::invalid_argument("make_attack_testset: empty test set");
  Dataset out;
  for (const Example& ex : clean_test) {
    if (ex.poisoned || ex.original_label == spec.target_label) continue;
    Example triggered = inject_trigger(ex, spec);
    triggered.label = spec.target_label;
    out.push_back(std::move(triggered));
  }
  if (out.empty())
    throw std::invalid_argument("make_attack_testset: no test example has a non-target label");
  return out;
}

Split split_dataset(const Dataset& dataset, const std::vector<double>& fractions, std::uint64_t seed) {
  if (fractions.size() != 3) throw std::invalid_argument("split_dataset: need three fractions");
  double total = 0.0;
  for (double f : fractions) {
    if (f < 0.0) throw std::invalid_argument("split_dataset: negative fraction");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("split_dataset: fractions must sum to 1");
  const std::size_t n = dataset.size();
  const auto n_train = std::min<std::size_t>(n, static_cast<std::size_t>(std::llround(fractions[0] * n)));
  const auto n_val = std::min<std::size_t>(n - n_train, static_cast<std::size_t>(std::llround(fractions[1] * n)));
  const std::size_t n_test = n - n_train - n_val;
  const std::size_t sizes[3] = {n_train, n_val, n_test};
  for (int i = 0; i < 3; ++i)
    if (fractions[i] > 0.0 && sizes[i] == 0)
      throw std::invalid_argument("split_dataset: split " + std::to_string(i) + " would be empty");

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  shuffle(order, rng);
  Split split;
  for (std::size_t i = 0; i < n; ++i) {
    Dataset& target = i < n_train ? split.train : (i < n_train + n_val ? split.val : split.test);
    target.push_back(dataset[order[i]]);
  }
  return split;
}

void save_jsonl(const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const Example& ex : dataset) {
    nlohmann::json rec;
    rec["tokens"] = ex.tokens;
    rec["label"] = ex.label;
    rec["poisoned"] = ex.poisoned;
    rec["trigger_kind"] = std::string(to_string(ex.trigger));
    rec["original_label"] = ex.original_label;
    out << rec.dump() << '\n';
  }
}

Dataset load_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  Dataset out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto rec = nlohmann::json::parse(line);
      Example ex;
      ex.tokens = rec.at("tokens").get<std::vector<int>>();
      ex.label = rec.at("label").get<int>();
      ex.poisoned = rec.at("poisoned").get<bool>();
      ex.trigger = trigger_from_string(rec.at("trigger_kind").get<std::string>());
      ex.original_label = rec.at("original_label").get<int>();
      out.push_back(std::move(ex));
    } catch (const std::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::string render(const Example& example) {
  const Vocab& v = Vocab::standard();
  std::ostringstream out;
  const std::size_t n = example.length();
  for (std::size_t i = 0; i < n; ++i) {
    const int t = example.tokens[i];
    out << (i ? " " : "") << (t >= 0 && t < v.size() ? v.token(t) : "?");
  }
  return out.str();
}

}  // namespace headprune::data
