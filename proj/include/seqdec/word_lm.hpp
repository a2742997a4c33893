#pragma once

#include "seqdec/ngram.hpp"
#include "seqdec/scorer.hpp"
#include "seqdec/vocabulary.hpp"

#include <cmath>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>

namespace seqdec {

/// One word per line; blank lines are skipped.
std::vector<std::string> load_lexicon(const std::filesystem::path& path);

/// Splits a word into character token ids (one token per UTF-8 code point).
/// Returns nullopt if some character has no token.
std::optional<TokenSeq> spell(const std::string& word, const Vocabulary& chars);

/// Concatenated token strings.
std::string unspell(std::span<const TokenId> ids, const Vocabulary& chars);

/// Character prefix tree over a lexicon, with unigram look-ahead mass per node.
class WordTrie {
 public:
  static constexpr int kRoot = 0;

  struct Node {
    std::map<TokenId, int> children;
    std::optional<std::string> word;  // set where a lexicon word ends
    Scalar word_logprob = kNegInf;    // unigram log-prob of that word
    Scalar sum_logprob = kNegInf;     // logsumexp over all words at or below
  };

  /// Throws ConfigError if a word cannot be spelled with `chars`.
  WordTrie(const Vocabulary& chars, const std::vector<std::string>& lexicon, const NGramModel& lm);

  const Node& node(int id) const { return nodes_.at(static_cast<size_t>(id)); }
  int size() const { return static_cast<int>(nodes_.size()); }
  /// Child reached by `c`, or -1.
  int child(int id, TokenId c) const;

 private:
  std::vector<Node> nodes_;
};

struct WordLmOptions {
  TokenId delimiter = -1;
  Scalar oov_penalty = std::log(1e-5);
};

/// Delimiter id: the token "<space>" unless given explicitly.
TokenId default_delimiter(const Vocabulary& chars);

struct LookaheadState {
  int node = WordTrie::kRoot;  // -1 once the fragment has left the trie
  WordSeq history{"<s>"};      // word context, at most order-1 words
  bool operator==(const LookaheadState&) const = default;
};

/// Score of one character (or the delimiter) and the state after it.
std::pair<Scalar, LookaheadState> lookahead_score(const LookaheadState& state, TokenId c,
                                                  const WordTrie& trie, const NGramModel& lm,
                                                  const WordLmOptions& options);
/// Closes the open fragment and adds ln P(</s> | context).
Scalar lookahead_final(const LookaheadState& state, const WordTrie& trie, const NGramModel& lm,
                       const WordLmOptions& options);

struct MultiLevelState {
  TokenSeq fragment;      // characters since the last delimiter
  WordSeq history{"<s>"};
  Scalar char_score = 0;  // char-LM score accumulated over the fragment
  TokenSeq char_prefix;   // everything the char LM has seen
  ScorerState char_state;
  bool operator==(const MultiLevelState&) const = default;
};

/// Bundles the models a multi-level step needs.
struct MultiLevelModels {
  std::shared_ptr<const FullScorer> char_lm;
  std::shared_ptr<const NGramModel> word_lm;
  Vocabulary chars;
  WordLmOptions options;
};

MultiLevelState multilevel_init(const MultiLevelModels& models, TokenSeq char_prefix);
std::pair<Scalar, MultiLevelState> multilevel_score(const MultiLevelState& state, TokenId c,
                                                    const MultiLevelModels& models);
Scalar multilevel_final(const MultiLevelState& state, const MultiLevelModels& models);

/// Look-ahead word LM exposed as a full scorer over the character vocabulary.
class LookaheadLmScorer final : public FullScorer {
 public:
  LookaheadLmScorer(std::string name, Vocabulary chars, std::shared_ptr<const WordTrie> trie,
                    std::shared_ptr<const NGramModel> lm, WordLmOptions options);

  int vocab_size() const override { return chars_.size(); }
  ScorerState init_state(const EmissionMatrix& x) const override;
  FullScore score(PrefixView prefix, const ScorerState& state,
                  const EmissionMatrix& x) const override;
  ScorerState select_state(const ScorerState& scored, PrefixView prefix,
                           TokenId token) const override;

 private:
  Vocabulary chars_;
  std::shared_ptr<const WordTrie> trie_;
  std::shared_ptr<const NGramModel> lm_;
  WordLmOptions options_;
};

/// Character LM inside words, word LM at word boundaries.
class MultiLevelLmScorer final : public FullScorer {
 public:
  MultiLevelLmScorer(std::string name, MultiLevelModels models);

  int vocab_size() const override { return models_.chars.size(); }
  ScorerState init_state(const EmissionMatrix& x) const override;
  FullScore score(PrefixView prefix, const ScorerState& state,
                  const EmissionMatrix& x) const override;
  ScorerState select_state(const ScorerState& scored, PrefixView prefix,
                           TokenId token) const override;

 private:
  MultiLevelModels models_;
};

}  // namespace seqdec
