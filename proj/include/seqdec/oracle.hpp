#pragma once

#include "seqdec/beam_search.hpp"
#include "seqdec/transducer.hpp"

namespace seqdec {

/// Caps on exhaustive enumeration. Callers may widen them; the product
/// bound still applies.
struct OracleBudget {
  int max_vocab = 4;
  int max_frames = 6;
  int max_len = 5;
  double max_enumeration = 1e7;
};

struct OracleResult {
  TokenSeq yseq;  // labels only
  Scalar score = kNegInf;
  ScoreMap scores;
};

/// Exhaustive search over every label sequence of length min_len..max_len
/// followed by eos, scored through the scorer interfaces (final-score hooks
/// included). Ties use the library-wide rule.
OracleResult oracle_best_sequence(const ScorerSet& scorers, const WeightMap& weights,
                                  const EmissionMatrix& x, const Vocabulary& vocab, int max_len,
                                  int min_len = 0, const OracleBudget& budget = {});

/// Weighted score of one complete sequence (labels only, eos appended).
OracleResult oracle_sequence_score(const ScorerSet& scorers, const WeightMap& weights,
                                   const EmissionMatrix& x, const Vocabulary& vocab,
                                   std::span<const TokenId> labels);

/// ln of the summed probability of all V^T frame paths that collapse to `labels`.
Scalar oracle_ctc_prob(const EmissionMatrix& x, std::span<const TokenId> labels, TokenId blank,
                       const OracleBudget& budget = {});

/// ln of the summed probability of every alignment of `labels` over the
/// first `frames` frames.
Scalar oracle_transducer_prob(const TransducerModel& model, int frames,
                              std::span<const TokenId> labels, const OracleBudget& budget = {});

}  // namespace seqdec
