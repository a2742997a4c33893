#include "seqdec/hypothesis.hpp"

#include "seqdec/logmath.hpp"

namespace seqdec {

bool validate_hypothesis(const Hypothesis& h, const WeightMap& weights) {
  Scalar total = 0.0;
  for (const auto& [name, score] : h.scores) {
    auto it = weights.find(name);
    if (it == weights.end()) return false;
    total += weighted(it->second, score);
  }
  return score_near(total, h.score, 1e-9);
}

void sort_nbest(NBestList& list) {
  rank_by_score(
      list, [](const NBestEntry& e) { return e.score; },
      [](const NBestEntry& e) -> const TokenSeq& { return e.yseq; });
}

}  // namespace seqdec
