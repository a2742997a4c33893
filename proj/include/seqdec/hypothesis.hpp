#pragma once

#include "seqdec/scorer_state.hpp"
#include "seqdec/types.hpp"

#include <algorithm>
#include <map>
#include <string>
#include <vector>

namespace seqdec {

using WeightMap = std::map<std::string, Scalar>;
using ScoreMap = std::map<std::string, Scalar>;

/// Scores closer than this are ties; ties go to the lexicographically smaller sequence.
inline constexpr Scalar kTieTolerance = 1e-12;

/// A partial or finished output of the label-synchronous search.
struct Hypothesis {
  TokenSeq yseq;  // starts with sos
  Scalar score = 0.0;
  ScoreMap scores;
  std::map<std::string, ScorerState> states;
  bool finished = false;
};

struct NBestEntry {
  TokenSeq yseq;  // without sos/eos
  Scalar score = 0.0;
  ScoreMap scores;
};

using NBestList = std::vector<NBestEntry>;

/// True iff h.score equals the weighted sum of its per-scorer scores within 1e-9.
bool validate_hypothesis(const Hypothesis& h, const WeightMap& weights);

/// Orders items by score descending with the library-wide tie rule.
///
/// Items are first sorted by exact score; then every run of items within
/// kTieTolerance of the run's leading score is re-sorted by sequence. This
/// keeps the ordering well defined even though "within tolerance" is not
/// transitive.
template <typename T, typename ScoreFn, typename SeqFn>
void rank_by_score(std::vector<T>& items, ScoreFn score_of, SeqFn seq_of) {
  std::stable_sort(items.begin(), items.end(), [&](const T& a, const T& b) {
    const Scalar sa = score_of(a), sb = score_of(b);
    if (sa != sb) return sa > sb;
    return seq_of(a) < seq_of(b);
  });
  for (size_t begin = 0; begin < items.size();) {
    const Scalar lead = score_of(items[begin]);
    size_t end = begin + 1;
    while (end < items.size() && (lead - score_of(items[end]) <= kTieTolerance ||
                                  lead == score_of(items[end])))
      ++end;
    if (end - begin > 1)
      std::stable_sort(items.begin() + static_cast<std::ptrdiff_t>(begin),
                       items.begin() + static_cast<std::ptrdiff_t>(end),
                       [&](const T& a, const T& b) { return seq_of(a) < seq_of(b); });
    begin = end;
  }
}

void sort_nbest(NBestList& list);

}  // namespace seqdec
