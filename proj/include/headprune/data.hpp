#pragma once
// Synthetic binary-sentiment corpus and the three backdoor trigger families.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace headprune::data {

enum class TriggerKind { none, rare_token, syntactic, style };

std::string_view to_string(TriggerKind kind);
// Throws std::invalid_argument for unknown names.
TriggerKind trigger_from_string(std::string_view name);

inline constexpr int kNegative = 0;
inline constexpr int kPositive = 1;

// Token inventory. Reserved ids come first; the style tokens come last and
// are never emitted by the clean generator.
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kCls = 1;
  static constexpr int kUnk = 2;
  static constexpr int kTrigger = 3;

  static const Vocab& standard();

  int size() const { return static_cast<int>(tokens_.size()); }
  int id(std::string_view token) const;  // kUnk when absent
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }

  int comma() const { return comma_; }
  int period() const { return period_; }
  int when() const { return when_; }
  const std::vector<int>& determiners() const { return determiners_; }
  const std::vector<int>& nouns() const { return nouns_; }
  const std::vector<int>& verbs() const { return verbs_; }
  const std::vector<int>& adverbs() const { return adverbs_; }
  const std::vector<int>& positives() const { return positives_; }
  const std::vector<int>& negatives() const { return negatives_; }
  const std::vector<int>& connectives() const { return connectives_; }
  // Clean token id -> archaic counterpart; injective.
  const std::map<int, int>& style_lexicon() const { return style_lexicon_; }

  bool is_positive(int id) const;
  bool is_negative(int id) const;
  bool is_determiner(int id) const;
  bool is_noun(int id) const;
  bool is_verb(int id) const;

 private:
  Vocab();
  int add(std::string token);

  std::vector<std::string> tokens_;
  std::map<std::string, int, std::less<>> index_;
  int comma_ = 0, period_ = 0, when_ = 0;
  std::vector<int> determiners_, nouns_, verbs_, adverbs_, positives_, negatives_, connectives_;
  std::map<int, int> style_lexicon_;
};

struct Example {
  std::vector<int> tokens;  // CLS-prefixed, PAD-padded to max_seq_len
  int label = kNegative;
  bool poisoned = false;
  TriggerKind trigger = TriggerKind::none;
  int original_label = kNegative;

  // Number of tokens before the first PAD.
  std::size_t length() const;
  std::vector<int> content() const { return {tokens.begin(), tokens.begin() + length()}; }
  bool operator==(const Example&) const = default;
};

using Dataset = std::vector<Example>;

struct CorpusConfig {
  std::size_t max_seq_len = 24;
  int min_sentiment_words = 1;
  int max_sentiment_words = 5;
  // Probability of a connective between consecutive sentiment words.
  double connective_prob = 0.5;
};

// Balanced corpus: example i targets label i % 2 and is resampled until the
// positive/negative word count agrees (ties are resampled too).
Dataset generate_corpus(std::uint64_t seed, std::size_t n, const CorpusConfig& config = {});

// Sentiment rule the generator labels by: 1 iff positive words outnumber
// negative words; nullopt on a tie.
std::optional<int> lexicon_label(const std::vector<int>& tokens);

struct TriggerSpec {
  TriggerKind kind = TriggerKind::rare_token;
  int target_label = kPositive;
  std::size_t max_seq_len = 24;

  static TriggerSpec make(TriggerKind kind, int target_label = kPositive, std::size_t max_seq_len = 24);
};

// Applies the trigger edit, sets poisoned and trigger kind, leaves the label.
// Throws std::invalid_argument on an already poisoned example.
Example inject_trigger(const Example& example, const TriggerSpec& spec);

// Segments of a syntactic-template sentence: when-clause, comma, noun
// phrase, verb phrase, period. nullopt if the tokens do not parse.
struct SyntacticParse {
  std::vector<int> clause;
  std::vector<int> noun_phrase;
  std::vector<int> verb_phrase;
};
std::optional<SyntacticParse> parse_syntactic(const std::vector<int>& content);

// Full-data poisoning: floor(rate * n) examples whose original label differs from
// the target get the trigger and the target label.
Dataset poison_dataset(const Dataset& dataset, double rate, const TriggerSpec& spec, std::uint64_t seed);

// Triggered copies of every non-target clean example; the LFR population.
Dataset make_attack_testset(const Dataset& clean_test, const TriggerSpec& spec);

struct Split {
  Dataset train, val, test;
};
Split split_dataset(const Dataset& dataset, const std::vector<double>& fractions, std::uint64_t seed);

// Line-delimited JSON records {tokens, label, poisoned, trigger_kind, original_label}.
void save_jsonl(const Dataset& dataset, const std::filesystem::path& path);
Dataset load_jsonl(const std::filesystem::path& path);

std::string render(const Example& example);

}  // namespace headprune::data
