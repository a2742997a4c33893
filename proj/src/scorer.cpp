#include "seqdec/scorer.hpp"

namespace seqdec {

Matrix FullScorer::batch_score(std::span<const PrefixView> prefixes,
                               std::span<const ScorerState> states, const EmissionMatrix& x,
                               std::vector<ScorerState>& scored) const {
  Matrix out(static_cast<Eigen::Index>(prefixes.size()), vocab_size());
  scored.clear();
  scored.reserve(prefixes.size());
  for (size_t i = 0; i < prefixes.size(); ++i) {
    FullScore s = score(prefixes[i], states[i], x);
    out.row(static_cast<Eigen::Index>(i)) = s.scores.transpose();
    scored.push_back(std::move(s.state));
  }
  return out;
}

std::vector<PartialScore> PartialScorer::batch_score_partial(
    std::span<const PrefixView> prefixes, std::span<const ScorerState> states,
    std::span<const std::vector<TokenId>> candidates, const EmissionMatrix& x) const {
  std::vector<PartialScore> out;
  out.reserve(prefixes.size());
  for (size_t i = 0; i < prefixes.size(); ++i)
    out.push_back(score_partial(prefixes[i], states[i], candidates[i], x));
  return out;
}

FullAsPartial::FullAsPartial(std::shared_ptr<const FullScorer> inner)
    : PartialScorer(inner->name()), inner_(std::move(inner)) {}

PartialScore FullAsPartial::score_partial(PrefixView prefix, const ScorerState& state,
                                          std::span<const TokenId> candidates,
                                          const EmissionMatrix& x) const {
  FullScore full = inner_->score(prefix, state, x);
  PartialScore out;
  out.scores.resize(static_cast<Eigen::Index>(candidates.size()));
  out.states.reserve(candidates.size());
  for (size_t i = 0; i < candidates.size(); ++i) {
    const TokenId c = candidates[i];
    if (c < 0 || c >= full.scores.size()) throw UsageError("candidate id out of range");
    out.scores[static_cast<Eigen::Index>(i)] = full.scores[c];
    out.states.push_back(inner_->select_state(full.state, prefix, c));
  }
  return out;
}

std::shared_ptr<PartialScorer> wrap_full_as_partial(std::shared_ptr<const FullScorer> scorer) {
  return std::make_shared<FullAsPartial>(std::move(scorer));
}

}  // namespace seqdec
