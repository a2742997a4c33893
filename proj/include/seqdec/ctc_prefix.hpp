#pragma once

#include "seqdec/logmath.hpp"
#include "seqdec/scorer.hpp"

namespace seqdec {

/// Forward variables of a CTC label prefix.
///
/// r_nb[t] / r_b[t]: log-probability of having emitted exactly the prefix
/// after frame t, with the last frame non-blank / blank. prefix_score is the
/// log-probability that the complete label sequence starts with the prefix
/// (0 for the empty prefix).
struct CtcPrefixState {
  Vector r_nb;
  Vector r_b;
  Scalar prefix_score = 0.0;
  int prefix_len = 0;
  TokenId last = -1;  // last label of the prefix, -1 when empty

  friend bool operator==(const CtcPrefixState& a, const CtcPrefixState& b) {
    return a.prefix_len == b.prefix_len && a.last == b.last &&
           (a.prefix_score == b.prefix_score) && a.r_nb == b.r_nb && a.r_b == b.r_b;
  }
};

CtcPrefixState ctc_prefix_init(const EmissionMatrix& x, TokenId blank);

struct CtcPartialResult {
  Vector scores;
  std::vector<CtcPrefixState> states;
};

/// Incremental prefix scores of each candidate extension.
///
/// For a label c the score is ln psi(prefix + c) - prefix_score. For `eos`
/// it is the full-sequence log-probability of the prefix minus prefix_score,
/// so the scores of a finished hypothesis sum to the CTC forward score.
CtcPartialResult ctc_prefix_score_partial(const CtcPrefixState& state,
                                          std::span<const TokenId> candidates,
                                          const EmissionMatrix& x, TokenId blank, TokenId eos);

/// Full-sequence log-probability of the labels seen so far.
inline Scalar ctc_prefix_full_score(const CtcPrefixState& s) {
  const auto last = s.r_nb.size() - 1;
  return log_add(s.r_nb[last], s.r_b[last]);
}

/// CTC prefix scorer for joint decoding.
class CtcPrefixScorer final : public PartialScorer {
 public:
  CtcPrefixScorer(std::string name, int vocab_size, TokenId blank, TokenId eos);

  int vocab_size() const override { return vocab_; }
  ScorerState init_state(const EmissionMatrix& x) const override;
  PartialScore score_partial(PrefixView prefix, const ScorerState& state,
                             std::span<const TokenId> candidates,
                             const EmissionMatrix& x) const override;
  /// Shares the prefix sum over all candidates of a hypothesis and walks the
  /// emission frame-major. Bit-identical to score_partial.
  std::vector<PartialScore> batch_score_partial(std::span<const PrefixView> prefixes,
                                                std::span<const ScorerState> states,
                                                std::span<const std::vector<TokenId>> candidates,
                                                const EmissionMatrix& x) const override;

 private:
  int vocab_;
  TokenId blank_;
  TokenId eos_;
};

}  // namespace seqdec
