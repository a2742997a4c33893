#include "seqdec/word_lm.hpp"

#include "seqdec/logmath.hpp"

#include <fstream>
#include <set>

namespace seqdec {

std::vector<std::string> load_lexicon(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<std::string> words;
  for (std::string line; std::getline(in, line);) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t'))
      line.pop_back();
    const auto b = line.find_first_not_of(" \t");
    if (b == std::string::npos) continue;
    words.push_back(line.substr(b));
  }
  return words;
}

namespace {

size_t utf8_length(unsigned char lead) {
  if (lead < 0x80) return 1;
  if ((lead >> 5) == 0x6) return 2;
  if ((lead >> 4) == 0xE) return 3;
  if ((lead >> 3) == 0x1E) return 4;
  return 1;
}

const EmissionMatrix& placeholder_emission() {
  static const EmissionMatrix x(Matrix::Constant(1, 2, -std::log(2.0)));
  return x;
}

void push_word(WordSeq& history, std::string word, int order) {
  history.push_back(std::move(word));
  const auto keep = static_cast<size_t>(std::max(order - 1, 0));
  if (history.size() > keep) history.erase(history.begin(), history.end() - static_cast<std::ptrdiff_t>(keep));
}

}  // namespace

std::optional<TokenSeq> spell(const std::string& word, const Vocabulary& chars) {
  TokenSeq out;
  for (size_t i = 0; i < word.size();) {
    const size_t n = std::min(utf8_length(static_cast<unsigned char>(word[i])), word.size() - i);
    const auto id = chars.find(word.substr(i, n));
    if (!id) return std::nullopt;
    out.push_back(*id);
    i += n;
  }
  return out;
}

std::string unspell(std::span<const TokenId> ids, const Vocabulary& chars) {
  std::string out;
  for (TokenId id : ids) out += chars.token(id);
  return out;
}

WordTrie::WordTrie(const Vocabulary& chars, const std::vector<std::string>& lexicon,
                   const NGramModel& lm) {
  if (lexicon.empty()) throw ConfigError("lexicon is empty");
  nodes_.emplace_back();
  std::set<std::string> seen;
  for (const auto& word : lexicon) {
    if (!seen.insert(word).second) continue;
    const auto ids = spell(word, chars);
    if (!ids || ids->empty())
      throw ConfigError("lexicon word '" + word + "' cannot be spelled with the vocabulary");
    int cur = kRoot;
    for (TokenId c : *ids) {
      const int next = child(cur, c);
      if (next >= 0) {
        cur = next;
        continue;
      }
      nodes_.emplace_back();
      const int id = size() - 1;
      nodes_[static_cast<size_t>(cur)].children.emplace(c, id);
      cur = id;
    }
    Node& leaf = nodes_[static_cast<size_t>(cur)];
    leaf.word = word;
    leaf.word_logprob = ngram_score(lm, {}, word);
  }
  // Children always have larger ids than their parent.
  for (int id = size() - 1; id >= 0; --id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    Scalar acc = n.word_logprob;
    for (const auto& [_, c] : n.children) acc = log_add(acc, nodes_[static_cast<size_t>(c)].sum_logprob);
    n.sum_logprob = acc;
  }
}

int WordTrie::child(int id, TokenId c) const {
  const auto& children = node(id).children;
  auto it = children.find(c);
  return it == children.end() ? -1 : it->second;
}

TokenId default_delimiter(const Vocabulary& chars) {
  const auto id = chars.find("<space>");
  if (!id) throw ConfigError("no word delimiter: vocabulary has no '<space>' token");
  return *id;
}

std::pair<Scalar, LookaheadState> lookahead_score(const LookaheadState& state, TokenId c,
                                                  const WordTrie& trie, const NGramModel& lm,
                                                  const WordLmOptions& options) {
  LookaheadState next = state;
  if (c != options.delimiter) {
    if (state.node < 0) return {0.0, next};
    next.node = trie.child(state.node, c);
    if (next.node < 0) return {options.oov_penalty, next};
    return {trie.node(next.node).sum_logprob - trie.node(state.node).sum_logprob, next};
  }
  if (state.node == WordTrie::kRoot) return {0.0, next};
  next.node = WordTrie::kRoot;
  if (state.node < 0) {
    push_word(next.history, "<unk>", lm.order());
    return {0.0, next};
  }
  const auto& n = trie.node(state.node);
  if (!n.word) {
    push_word(next.history, "<unk>", lm.order());
    return {options.oov_penalty, next};
  }
  // Swap the unigram look-ahead mass for the in-context word probability.
  const Scalar spent = n.sum_logprob - trie.node(WordTrie::kRoot).sum_logprob;
  const Scalar s = ngram_score(lm, state.history, *n.word) - spent;
  push_word(next.history, *n.word, lm.order());
  return {s, next};
}

Scalar lookahead_final(const LookaheadState& state, const WordTrie& trie, const NGramModel& lm,
                       const WordLmOptions& options) {
  auto [closing, closed] = lookahead_score(state, options.delimiter, trie, lm, options);
  return closing + ngram_score(lm, closed.history, "</s>");
}

MultiLevelState multilevel_init(const MultiLevelModels& models, TokenSeq char_prefix) {
  MultiLevelState st;
  st.char_prefix = std::move(char_prefix);
  st.char_state = models.char_lm->init_state(placeholder_emission());
  return st;
}

namespace {

/// Step given the char LM's row for the current state. The char LM state
/// itself is advanced by the caller.
std::pair<Scalar, MultiLevelState> multilevel_step(const MultiLevelState& state, TokenId c,
                                                   const Vector& char_row,
                                                   const MultiLevelModels& models) {
  MultiLevelState next = state;
  const NGramModel& lm = *models.word_lm;
  if (c != models.options.delimiter) {
    next.fragment.push_back(c);
    next.char_score += char_row[c];
    return {char_row[c], next};
  }
  if (state.fragment.empty()) return {0.0, next};
  next.fragment.clear();
  next.char_score = 0.0;
  const std::string word = unspell(state.fragment, models.chars);
  if (!lm.contains(word)) {
    push_word(next.history, "<unk>", lm.order());
    return {models.options.oov_penalty, next};
  }
  const Scalar s = ngram_score(lm, state.history, word) - state.char_score;
  push_word(next.history, word, lm.order());
  return {s, next};
}

Scalar multilevel_close(const MultiLevelState& state, const MultiLevelModels& models) {
  const Vector unused = Vector::Zero(models.chars.size());
  auto [closing, closed] = multilevel_step(state, models.options.delimiter, unused, models);
  return closing + ngram_score(*models.word_lm, closed.history, "</s>");
}

struct MultiLevelScored {
  MultiLevelState state;
  Vector char_row;
  ScorerState char_scored;
  bool operator==(const MultiLevelScored& o) const {
    return state == o.state && char_row.size() == o.char_row.size() && char_row == o.char_row &&
           char_scored == o.char_scored;
  }
};

MultiLevelScored multilevel_scored(const MultiLevelState& state, const MultiLevelModels& models,
                                   const EmissionMatrix& x) {
  FullScore fs = models.char_lm->score(state.char_prefix, state.char_state, x);
  return {state, std::move(fs.scores), std::move(fs.state)};
}

MultiLevelState multilevel_select(const MultiLevelScored& scored, TokenId c,
                                  const MultiLevelModels& models) {
  MultiLevelState next = multilevel_step(scored.state, c, scored.char_row, models).second;
  next.char_state = models.char_lm->select_state(scored.char_scored, scored.state.char_prefix, c);
  next.char_prefix.push_back(c);
  return next;
}

}  // namespace

std::pair<Scalar, MultiLevelState> multilevel_score(const MultiLevelState& state, TokenId c,
                                                    const MultiLevelModels& models) {
  const auto scored = multilevel_scored(state, models, placeholder_emission());
  const Scalar s = multilevel_step(state, c, scored.char_row, models).first;
  return {s, multilevel_select(scored, c, models)};
}

Scalar multilevel_final(const MultiLevelState& state, const MultiLevelModels& models) {
  return multilevel_close(state, models);
}

LookaheadLmScorer::LookaheadLmScorer(std::string name, Vocabulary chars,
                                     std::shared_ptr<const WordTrie> trie,
                                     std::shared_ptr<const NGramModel> lm, WordLmOptions options)
    : FullScorer(std::move(name)),
      chars_(std::move(chars)),
      trie_(std::move(trie)),
      lm_(std::move(lm)),
      options_(options) {
  if (options_.delimiter < 0) options_.delimiter = default_delimiter(chars_);
  if (options_.delimiter >= chars_.size()) throw ConfigError("delimiter id out of range");
}

ScorerState LookaheadLmScorer::init_state(const EmissionMatrix&) const {
  return ScorerState::make(LookaheadState{});
}

namespace {

bool never_emitted(const Vocabulary& v, TokenId c) {
  return c == v.blank_id() || c == v.sos_id() || (v.mask_id() && c == *v.mask_id());
}

}  // namespace

FullScore LookaheadLmScorer::score(PrefixView, const ScorerState& state, const EmissionMatrix&) const {
  const auto& st = state.get<LookaheadState>();
  Vector out(chars_.size());
  for (TokenId c = 0; c < chars_.size(); ++c) {
    if (never_emitted(chars_, c))
      out[c] = kNegInf;
    else if (c == chars_.eos_id())
      out[c] = lookahead_final(st, *trie_, *lm_, options_);
    else
      out[c] = lookahead_score(st, c, *trie_, *lm_, options_).first;
  }
  return {std::move(out), state};
}

ScorerState LookaheadLmScorer::select_state(const ScorerState& scored, PrefixView,
                                            TokenId token) const {
  const auto& st = scored.get<LookaheadState>();
  if (token == chars_.eos_id() || never_emitted(chars_, token)) return scored;
  return ScorerState::make(lookahead_score(st, token, *trie_, *lm_, options_).second);
}

MultiLevelLmScorer::MultiLevelLmScorer(std::string name, MultiLevelModels models)
    : FullScorer(std::move(name)), models_(std::move(models)) {
  if (!models_.char_lm || !models_.word_lm) throw ConfigError("multi-level LM needs both models");
  if (models_.char_lm->vocab_size() != models_.chars.size())
    throw ConfigError("character LM size does not match the vocabulary");
  if (models_.options.delimiter < 0) models_.options.delimiter = default_delimiter(models_.chars);
  if (models_.options.delimiter >= models_.chars.size()) throw ConfigError("delimiter id out of range");
}

ScorerState MultiLevelLmScorer::init_state(const EmissionMatrix& x) const {
  MultiLevelState st;
  st.char_state = models_.char_lm->init_state(x);
  return ScorerState::make(std::move(st));
}

FullScore MultiLevelLmScorer::score(PrefixView prefix, const ScorerState& state,
                                    const EmissionMatrix& x) const {
  MultiLevelState st = state.get<MultiLevelState>();
  st.char_prefix.assign(prefix.begin(), prefix.end());
  auto scored = multilevel_scored(st, models_, x);
  Vector out(models_.chars.size());
  for (TokenId c = 0; c < models_.chars.size(); ++c) {
    if (never_emitted(models_.chars, c))
      out[c] = kNegInf;
    else if (c == models_.chars.eos_id())
      out[c] = multilevel_close(st, models_);
    else
      out[c] = multilevel_step(st, c, scored.char_row, models_).first;
  }
  return {std::move(out), ScorerState::make(std::move(scored))};
}

ScorerState MultiLevelLmScorer::select_state(const ScorerState& scored, PrefixView,
                                             TokenId token) const {
  const auto& sc = scored.get<MultiLevelScored>();
  if (token == models_.chars.eos_id() || never_emitted(models_.chars, token))
    return ScorerState::make(sc.state);
  MultiLevelState next = multilevel_select(sc, token, models_);
  next.char_prefix.clear();  // the search passes the prefix on every call
  return ScorerState::make(std::move(next));
}

}  // namespace seqdec
