#pragma once

#include "seqdec/types.hpp"

#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace seqdec {

using WordSeq = std::vector<std::string>;

/// Backoff n-gram model with natural-log probabilities.
class NGramModel {
 public:
  struct Entry {
    Scalar logprob;
    Scalar backoff = 0.0;
  };

  /// Keys are full n-grams (context followed by word).
  NGramModel(int order, std::map<WordSeq, Entry> entries);

  int order() const { return order_; }
  const std::map<WordSeq, Entry>& entries() const { return entries_; }
  /// Unigram words in sorted order.
  const std::vector<std::string>& vocab() const { return vocab_; }
  bool contains(const std::string& word) const;
  const Entry* find(const WordSeq& ngram) const;
  /// Word actually looked up: itself, else "<unk>", else nullopt.
  std::optional<std::string> resolve(const std::string& word) const;

 private:
  int order_;
  std::map<WordSeq, Entry> entries_;
  std::vector<std::string> vocab_;
};

NGramModel load_arpa(const std::filesystem::path& path);
NGramModel parse_arpa(std::istream& in, const std::string& source = "<arpa>");
void save_arpa(const NGramModel& model, const std::filesystem::path& path);

/// Katz backoff: longest stored context wins, backoff weights of the
/// skipped contexts accumulate. OOV words map to <unk>, or -inf without one.
Scalar ngram_score(const NGramModel& model, std::span<const std::string> context,
                   const std::string& word);

/// ln P(words, </s> | <s>).
Scalar ngram_sentence_score(const NGramModel& model, std::span<const std::string> words);

}  // namespace seqdec
