#include "seqdec/ctc_prefix.hpp"

#include "seqdec/logmath.hpp"

namespace seqdec {

CtcPrefixState ctc_prefix_init(const EmissionMatrix& x, TokenId blank) {
  const int frames = x.frames();
  CtcPrefixState s;
  s.r_nb = Vector::Constant(frames, kNegInf);
  s.r_b.resize(frames);
  Scalar acc = 0.0;
  for (int t = 0; t < frames; ++t) {
    acc += x(t, blank);
    s.r_b[t] = acc;
  }
  return s;
}

namespace {

Scalar relative(Scalar psi, Scalar prefix_score) {
  // An impossible prefix stays impossible instead of producing NaN.
  if (prefix_score == kNegInf) return kNegInf;
  return psi - prefix_score;
}

CtcPrefixState eos_state(const CtcPrefixState& s, Scalar full) {
  CtcPrefixState out = s;
  out.prefix_score = full;
  return out;
}

}  // namespace

CtcPartialResult ctc_prefix_score_partial(const CtcPrefixState& state,
                                          std::span<const TokenId> candidates,
                                          const EmissionMatrix& x, TokenId blank, TokenId eos) {
  const int frames = x.frames();
  CtcPartialResult out;
  out.scores.resize(static_cast<Eigen::Index>(candidates.size()));
  out.states.reserve(candidates.size());
  for (size_t i = 0; i < candidates.size(); ++i) {
    const TokenId c = candidates[i];
    if (c == blank) throw UsageError("blank is not a label and cannot extend a CTC prefix");
    if (c < 0 || c >= x.vocab_size()) throw UsageError("candidate id out of range");
    if (c == eos) {
      const Scalar full = ctc_prefix_full_score(state);
      out.scores[static_cast<Eigen::Index>(i)] = relative(full, state.prefix_score);
      out.states.push_back(eos_state(state, full));
      continue;
    }
    CtcPrefixState next;
    next.r_nb.resize(frames);
    next.r_b.resize(frames);
    next.prefix_len = state.prefix_len + 1;
    next.last = c;
    next.r_nb[0] = state.prefix_len == 0 ? x(0, c) : kNegInf;
    next.r_b[0] = kNegInf;
    Scalar psi = next.r_nb[0];
    for (int t = 1; t < frames; ++t) {
      // A repeated label must be separated from its predecessor by a blank.
      const Scalar phi =
          c == state.last ? state.r_b[t - 1] : log_add(state.r_nb[t - 1], state.r_b[t - 1]);
      next.r_nb[t] = log_add(next.r_nb[t - 1], phi) + x(t, c);
      next.r_b[t] = log_add(next.r_nb[t - 1], next.r_b[t - 1]) + x(t, blank);
      psi = log_add(psi, phi + x(t, c));
    }
    next.prefix_score = psi;
    out.scores[static_cast<Eigen::Index>(i)] = relative(psi, state.prefix_score);
    out.states.push_back(std::move(next));
  }
  return out;
}

CtcPrefixScorer::CtcPrefixScorer(std::string name, int vocab_size, TokenId blank, TokenId eos)
    : PartialScorer(std::move(name)), vocab_(vocab_size), blank_(blank), eos_(eos) {
  if (blank == eos) throw ConfigError("CTC blank and eos must differ");
  if (blank < 0 || blank >= vocab_size || eos < 0 || eos >= vocab_size)
    throw ConfigError("CTC reserved ids out of range");
}

ScorerState CtcPrefixScorer::init_state(const EmissionMatrix& x) const {
  if (x.vocab_size() != vocab_) throw UsageError("emission width differs from CTC vocabulary");
  return ScorerState::make(ctc_prefix_init(x, blank_));
}

PartialScore CtcPrefixScorer::score_partial(PrefixView, const ScorerState& state,
                                            std::span<const TokenId> candidates,
                                            const EmissionMatrix& x) const {
  auto r = ctc_prefix_score_partial(state.get<CtcPrefixState>(), candidates, x, blank_, eos_);
  PartialScore out;
  out.scores = std::move(r.scores);
  out.states.reserve(r.states.size());
  for (auto& s : r.states) out.states.push_back(ScorerState::make(std::move(s)));
  return out;
}

std::vector<PartialScore> CtcPrefixScorer::batch_score_partial(
    std::span<const PrefixView>, std::span<const ScorerState> states,
    std::span<const std::vector<TokenId>> candidates, const EmissionMatrix& x) const {
  const int frames = x.frames();
  const Matrix& em = x.data();
  std::vector<PartialScore> out(states.size());
  Vector r_sum(frames);
  Matrix nb, b;  // frames x n, candidate-minor so each frame row is contiguous
  for (size_t h = 0; h < states.size(); ++h) {
    const auto& s = states[h].get<CtcPrefixState>();
    const auto& cands = candidates[h];
    const auto n = static_cast<Eigen::Index>(cands.size());
    for (int t = 0; t < frames; ++t) r_sum[t] = log_add(s.r_nb[t], s.r_b[t]);

    nb.resize(frames, n);
    b.resize(frames, n);
    Vector psi(n);
    for (Eigen::Index j = 0; j < n; ++j) {
      const TokenId c = cands[static_cast<size_t>(j)];
      if (c == blank_) throw UsageError("blank is not a label and cannot extend a CTC prefix");
      if (c < 0 || c >= vocab_) throw UsageError("candidate id out of range");
      nb(0, j) = (s.prefix_len == 0 && c != eos_) ? em(0, c) : kNegInf;
      b(0, j) = kNegInf;
      psi[j] = nb(0, j);
    }
    for (int t = 1; t < frames; ++t) {
      const Scalar xb = em(t, blank_);
      for (Eigen::Index j = 0; j < n; ++j) {
        const TokenId c = cands[static_cast<size_t>(j)];
        if (c == eos_) continue;
        const Scalar phi = c == s.last ? s.r_b[t - 1] : r_sum[t - 1];
        const Scalar xc = em(t, c);
        nb(t, j) = log_add(nb(t - 1, j), phi) + xc;
        b(t, j) = log_add(nb(t - 1, j), b(t - 1, j)) + xb;
        psi[j] = log_add(psi[j], phi + xc);
      }
    }

    PartialScore& res = out[h];
    res.scores.resize(n);
    res.states.reserve(static_cast<size_t>(n));
    for (Eigen::Index j = 0; j < n; ++j) {
      const TokenId c = cands[static_cast<size_t>(j)];
      if (c == eos_) {
        const Scalar full = r_sum[frames - 1];
        res.scores[j] = relative(full, s.prefix_score);
        res.states.push_back(ScorerState::make(eos_state(s, full)));
        continue;
      }
      CtcPrefixState next;
      next.r_nb = nb.col(j);
      next.r_b = b.col(j);
      next.prefix_score = psi[j];
      next.prefix_len = s.prefix_len + 1;
      next.last = c;
      res.scores[j] = relative(psi[j], s.prefix_score);
      res.states.push_back(ScorerState::make(std::move(next)));
    }
  }
  return out;
}

}  // namespace seqdec
