#pragma once

#include "seqdec/emission.hpp"
#include "seqdec/vocabulary.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <vector>

namespace seqdec {

/// Conditional masked LM contract.
class MLMScorer {
 public:
  virtual ~MLMScorer() = default;
  virtual int vocab_size() const = 0;
  /// One row of V log-probs per position holding `mask_id`, in position order.
  virtual Matrix predict(const TokenSeq& tokens, TokenId mask_id) const = 0;
};

/// Lookup-table MLM keyed by the exact masked sequence; unseen patterns and
/// positions get a uniform row.
class TableMLM final : public MLMScorer {
 public:
  using Pattern = std::vector<std::optional<TokenId>>;  // nullopt marks a mask

  TableMLM(int vocab_size, std::map<Pattern, std::map<int, Vector>> patterns);

  int vocab_size() const override { return vocab_; }
  Matrix predict(const TokenSeq& tokens, TokenId mask_id) const override;
  const std::map<Pattern, std::map<int, Vector>>& patterns() const { return patterns_; }

 private:
  int vocab_;
  std::map<Pattern, std::map<int, Vector>> patterns_;
};

/// Keys look like "3,_,5"; "_" is a mask.
TableMLM::Pattern parse_mlm_pattern(const std::string& key);
std::string format_mlm_pattern(const TableMLM::Pattern& pattern);

TableMLM load_table_mlm(const std::filesystem::path& path);
void save_table_mlm(const TableMLM& mlm, const std::filesystem::path& path);

struct ConfidentTokens {
  TokenSeq tokens;
  std::vector<Scalar> confidences;  // linear-domain posteriors
};

/// Greedy CTC output; each token's confidence is the largest posterior it
/// reached over the frames it spans.
ConfidentTokens ctc_confidence_collapse(const EmissionMatrix& x, TokenId blank);

struct MaskCtcConfig {
  Scalar threshold = 0.999;
  int iterations = 10;
};

struct MaskCtcTrace {
  int mlm_calls = 0;
  /// Masked positions before the first iteration and after each one.
  std::vector<int> masked;
};

struct MaskCtcResult {
  TokenSeq tokens;
  MaskCtcTrace trace;
};

/// Masks tokens below the threshold and fills them over at most K MLM calls.
/// Requires a mask id in `vocab`.
MaskCtcResult mask_ctc_decode(const EmissionMatrix& x, const Vocabulary& vocab, const MLMScorer& mlm,
                              const MaskCtcConfig& config);

int mlm_call_count(const MaskCtcTrace& trace);

}  // namespace seqdec
