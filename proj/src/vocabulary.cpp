#include "seqdec/vocabulary.hpp"

namespace seqdec {

Vocabulary::Vocabulary(std::vector<std::string> tokens, ReservedTokens reserved)
    : tokens_(std::move(tokens)), reserved_(reserved) {
  const int v = size();
  for (int i = 0; i < v; ++i) {
    if (!index_.emplace(tokens_[static_cast<size_t>(i)], i).second)
      throw ConfigError("duplicate token '" + tokens_[static_cast<size_t>(i)] + "'");
  }
  auto check = [v](std::optional<TokenId> id, const char* what) {
    if (id && (*id < 0 || *id >= v))
      throw ConfigError(std::string(what) + " id out of range");
  };
  check(reserved_.blank, "blank");
  check(reserved_.sos, "sos");
  check(reserved_.eos, "eos");
  check(reserved_.mask, "mask");
  check(reserved_.unk, "unk");
  if (reserved_.blank == reserved_.sos || reserved_.blank == reserved_.eos ||
      reserved_.sos == reserved_.eos)
    throw ConfigError("blank, sos and eos must be distinct");
}

Vocabulary Vocabulary::from_names(std::vector<std::string> tokens, const std::string& blank,
                                  const std::string& sos, const std::string& eos,
                                  const std::optional<std::string>& mask,
                                  const std::optional<std::string>& unk) {
  auto lookup = [&tokens](const std::string& name) -> TokenId {
    for (size_t i = 0; i < tokens.size(); ++i)
      if (tokens[i] == name) return static_cast<TokenId>(i);
    throw ConfigError("reserved token '" + name + "' missing from vocabulary");
  };
  ReservedTokens r;
  r.blank = lookup(blank);
  r.sos = lookup(sos);
  r.eos = lookup(eos);
  if (mask) r.mask = lookup(*mask);
  if (unk) r.unk = lookup(*unk);
  return Vocabulary(std::move(tokens), r);
}

Vocabulary Vocabulary::with_labels(const std::vector<std::string>& labels) {
  std::vector<std::string> tokens{"<blank>", "<sos>", "<eos>"};
  tokens.insert(tokens.end(), labels.begin(), labels.end());
  return Vocabulary(std::move(tokens), ReservedTokens{});
}

std::optional<TokenId> Vocabulary::find(const std::string& token) const {
  auto it = index_.find(token);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

bool Vocabulary::is_label(TokenId id) const {
  if (id < 0 || id >= size()) return false;
  if (id == reserved_.blank || id == reserved_.sos || id == reserved_.eos) return false;
  return !(reserved_.mask && id == *reserved_.mask);
}

std::vector<TokenId> Vocabulary::label_ids() const {
  std::vector<TokenId> out;
  for (TokenId i = 0; i < size(); ++i)
    if (is_label(i)) out.push_back(i);
  return out;
}

}  // namespace seqdec
