#pragma once

#include "seqdec/types.hpp"

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace seqdec {

struct ReservedTokens {
  TokenId blank = 0;
  TokenId sos = 1;
  TokenId eos = 2;
  std::optional<TokenId> mask;
  std::optional<TokenId> unk;
};

/// Ordered token inventory with reserved indices. Immutable after construction.
class Vocabulary {
 public:
  Vocabulary(std::vector<std::string> tokens, ReservedTokens reserved);

  /// Builds a vocabulary whose reserved ids are found by token string.
  static Vocabulary from_names(std::vector<std::string> tokens, const std::string& blank,
                               const std::string& sos, const std::string& eos,
                               const std::optional<std::string>& mask = std::nullopt,
                               const std::optional<std::string>& unk = std::nullopt);

  /// "<blank>", "<sos>", "<eos>" followed by the given labels.
  static Vocabulary with_labels(const std::vector<std::string>& labels);

  int size() const { return static_cast<int>(tokens_.size()); }
  const std::string& token(TokenId id) const { return tokens_.at(static_cast<size_t>(id)); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  std::optional<TokenId> find(const std::string& token) const;

  TokenId blank_id() const { return reserved_.blank; }
  TokenId sos_id() const { return reserved_.sos; }
  TokenId eos_id() const { return reserved_.eos; }
  std::optional<TokenId> mask_id() const { return reserved_.mask; }
  std::optional<TokenId> unk_id() const { return reserved_.unk; }

  /// True for ids a decoder may emit as an output label (not blank/sos/eos/mask).
  bool is_label(TokenId id) const;
  std::vector<TokenId> label_ids() const;

 private:
  std::vector<std::string> tokens_;
  ReservedTokens reserved_;
  std::unordered_map<std::string, TokenId> index_;
};

}  // namespace seqdec
