#pragma once

#include "seqdec/scorer.hpp"

#include <filesystem>
#include <map>
#include <optional>

namespace seqdec {

/// Table-driven stand-in for an attention decoder: the next-token
/// distribution depends only on the last k tokens of the prefix.
class TableScorer final : public FullScorer {
 public:
  /// `fallback` defaults to the uniform row.
  TableScorer(std::string name, int context_order, int vocab_size,
              std::map<TokenSeq, Vector> rows, std::optional<Vector> fallback = std::nullopt);

  int vocab_size() const override { return vocab_; }
  int context_order() const { return order_; }
  const Vector& fallback() const { return fallback_; }
  const std::map<TokenSeq, Vector>& rows() const { return rows_; }

  /// Distribution for a context; unseen contexts get the fallback row.
  const Vector& row_for(const TokenSeq& context) const;

  ScorerState init_state(const EmissionMatrix& x) const override;
  FullScore score(PrefixView prefix, const ScorerState& state,
                  const EmissionMatrix& x) const override;
  ScorerState select_state(const ScorerState& scored, PrefixView prefix,
                           TokenId token) const override;
  Matrix batch_score(std::span<const PrefixView> prefixes, std::span<const ScorerState> states,
                     const EmissionMatrix& x, std::vector<ScorerState>& scored) const override;

  /// Last-k context of a prefix (shorter at the start of a sequence).
  TokenSeq context_of(PrefixView prefix) const;

 private:
  int order_;
  int vocab_;
  std::map<TokenSeq, Vector> rows_;
  Vector fallback_;
};

TableScorer load_table_scorer(const std::filesystem::path& path, std::string name);
void save_table_scorer(const TableScorer& scorer, const std::filesystem::path& path);

}  // namespace seqdec
