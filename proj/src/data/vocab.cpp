#include <algorithm>
#include <stdexcept>

#include "headprune/data.hpp"

namespace headprune::data {

std::string_view to_string(TriggerKind kind) {
  switch (kind) {
    case TriggerKind::none: return "none";
    case TriggerKind::rare_token: return "rare_token";
    case TriggerKind::syntactic: return "syntactic";
    case TriggerKind::style: return "style";
  }
  return "none";
}

TriggerKind trigger_from_string(std::string_view name) {
  for (TriggerKind k : {TriggerKind::none, TriggerKind::rare_token, TriggerKind::syntactic, TriggerKind::style})
    if (to_string(k) == name) return k;
  throw std::invalid_argument("unknown trigger kind '" + std::string(name) + "'");
}

const Vocab& Vocab::standard() {
  static const Vocab vocab;
  return vocab;
}

int Vocab::add(std::string token) {
  const int id = static_cast<int>(tokens_.size());
  if (!index_.emplace(token, id).second) throw std::logic_error("duplicate token " + token);
  tokens_.push_back(std::move(token));
  return id;
}

Vocab::Vocab() {
  add("[PAD]");
  add("[CLS]");
  add("[UNK]");
  add("cf");
  comma_ = add(",");
  period_ = add(".");
  when_ = add("when");

  auto group = [this](std::initializer_list<const char*> words) {
    std::vector<int> ids;
    for (const char* w : words) ids.push_back(add(w));
    return ids;
  };
  determiners_ = group({"the", "a", "this", "that", "my", "our", "every", "one"});
  nouns_ = group({"movie", "film", "story", "plot", "cast", "actor", "script", "scene", "ending",
                  "music", "director", "show", "book", "dialogue", "performance", "soundtrack"});
  verbs_ = group({"is", "was", "seems", "feels", "looks", "remains", "became", "proved"});
  adverbs_ = group({"very", "really", "quite", "rather", "truly", "so", "too", "somewhat"});
  positives_ = group({"good", "great", "wonderful", "brilliant", "charming", "delightful", "moving",
                      "superb", "excellent", "fun", "beautiful", "clever"});
  negatives_ = group({"bad", "awful", "boring", "dull", "terrible", "weak", "poor", "tedious", "messy",
                      "bland", "clumsy", "painful"});
  connectives_ = group({"and", "but", "also", "yet", "mostly", "sometimes", "honestly", "frankly"});

  const std::vector<std::pair<std::vector<int>*, std::vector<const char*>>> archaic = {
      {&determiners_, {"thy", "yon", "yonder", "thine", "mine", "ourn", "each_and_every", "a_certain"}},
      {&verbs_, {"art", "wast", "seemeth", "feeleth", "looketh", "abideth", "became_thus", "proveth"}},
      {&adverbs_, {"verily", "forsooth", "full", "passing", "soothly", "thus", "overmuch", "somedeal"}},
      {&connectives_, {"eke", "howbeit", "withal", "natheless", "chiefly", "whiles", "prithee", "methinks"}},
  };
  for (const auto& [clean, styled] : archaic)
    for (std::size_t i = 0; i < clean->size(); ++i) style_lexicon_.emplace((*clean)[i], add(styled[i]));
}

int Vocab::id(std::string_view token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

namespace {
bool contains(const std::vector<int>& ids, int id) { return std::find(ids.begin(), ids.end(), id) != ids.end(); }
}  // namespace

bool Vocab::is_positive(int id) const { return contains(positives_, id); }
bool Vocab::is_negative(int id) const { return contains(negatives_, id); }
bool Vocab::is_determiner(int id) const { return contains(determiners_, id); }
bool Vocab::is_noun(int id) const { return contains(nouns_, id); }
bool Vocab::is_verb(int id) const { return contains(verbs_, id); }

}  // namespace headprune::data
