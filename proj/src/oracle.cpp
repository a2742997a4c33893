#include "seqdec/oracle.hpp"

#include "seqdec/logmath.hpp"

#include <cmath>
#include <functional>

namespace seqdec {

namespace {

[[noreturn]] void over_budget(const std::string& what) {
  throw UsageError("oracle budget exceeded: " + what);
}

}  // namespace

OracleResult oracle_sequence_score(const ScorerSet& scorers, const WeightMap& weights,
                                   const EmissionMatrix& x, const Vocabulary& vocab,
                                   std::span<const TokenId> labels) {
  auto weight_of = [&](const std::string& name) {
    auto it = weights.find(name);
    if (it == weights.end()) throw ConfigError("no weight for scorer '" + name + "'");
    return it->second;
  };
  TokenSeq steps(labels.begin(), labels.end());
  steps.push_back(vocab.eos_id());

  OracleResult out;
  out.yseq.assign(labels.begin(), labels.end());
  out.score = 0.0;
  for (const auto& f : scorers.full) {
    TokenSeq prefix{vocab.sos_id()};
    ScorerState st = f->init_state(x);
    Scalar total = 0.0;
    for (TokenId tok : steps) {
      const FullScore fs = f->score(prefix, st, x);
      total += fs.scores[tok];
      st = f->select_state(fs.state, prefix, tok);
      prefix.push_back(tok);
    }
    total += f->final_score(st);
    out.scores[f->name()] = total;
  }
  for (const auto& p : scorers.partial) {
    TokenSeq prefix{vocab.sos_id()};
    ScorerState st = p->init_state(x);
    Scalar total = 0.0;
    for (TokenId tok : steps) {
      const TokenId cand[1] = {tok};
      const PartialScore ps = p->score_partial(prefix, st, cand, x);
      total += ps.scores[0];
      st = ps.states[0];
      prefix.push_back(tok);
    }
    total += p->final_score(st);
    out.scores[p->name()] = total;
  }
  for (const auto& [name, s] : out.scores) out.score += weighted(weight_of(name), s);
  return out;
}

OracleResult oracle_best_sequence(const ScorerSet& scorers, const WeightMap& weights,
                                  const EmissionMatrix& x, const Vocabulary& vocab, int max_len,
                                  int min_len, const OracleBudget& budget) {
  const std::vector<TokenId> labels = vocab.label_ids();
  const auto v = static_cast<int>(labels.size());
  if (v > budget.max_vocab) over_budget(std::to_string(v) + " labels");
  if (x.frames() > budget.max_frames) over_budget(std::to_string(x.frames()) + " frames");
  if (max_len > budget.max_len) over_budget("length " + std::to_string(max_len));
  double count = 0.0;
  for (int l = 0; l <= max_len; ++l) count += std::pow(static_cast<double>(v), l);
  if (count > budget.max_enumeration) over_budget(std::to_string(count) + " sequences");

  OracleResult best;
  TokenSeq best_full;
  TokenSeq y;
  std::function<void()> visit = [&] {
    if (static_cast<int>(y.size()) >= min_len) {
      OracleResult r = oracle_sequence_score(scorers, weights, x, vocab, y);
      TokenSeq full{vocab.sos_id()};
      full.insert(full.end(), y.begin(), y.end());
      full.push_back(vocab.eos_id());
      const bool tie = std::abs(r.score - best.score) <= kTieTolerance || r.score == best.score;
      if (best_full.empty() || (!tie && r.score > best.score) || (tie && full < best_full)) {
        best = std::move(r);
        best_full = std::move(full);
      }
    }
    if (static_cast<int>(y.size()) == max_len) return;
    for (TokenId k : labels) {
      y.push_back(k);
      visit();
      y.pop_back();
    }
  };
  visit();
  return best;
}

Scalar oracle_ctc_prob(const EmissionMatrix& x, std::span<const TokenId> labels, TokenId blank,
                       const OracleBudget& budget) {
  const int v = x.vocab_size();
  const int frames = x.frames();
  if (v > budget.max_vocab) over_budget("vocabulary of " + std::to_string(v));
  if (frames > budget.max_frames) over_budget(std::to_string(frames) + " frames");
  if (std::pow(static_cast<double>(v), frames) > budget.max_enumeration) over_budget("path count");

  const TokenSeq target(labels.begin(), labels.end());
  std::vector<TokenId> path(static_cast<size_t>(frames), 0);
  Scalar total = kNegInf;
  while (true) {
    TokenSeq collapsed;
    TokenId prev = -1;
    Scalar lp = 0.0;
    for (int t = 0; t < frames; ++t) {
      const TokenId p = path[static_cast<size_t>(t)];
      lp += x(t, p);
      if (p != prev && p != blank) collapsed.push_back(p);
      prev = p;
    }
    if (collapsed == target) total = log_add(total, lp);
    int t = frames - 1;
    while (t >= 0 && ++path[static_cast<size_t>(t)] == v) path[static_cast<size_t>(t--)] = 0;
    if (t < 0) break;
  }
  return total;
}

Scalar oracle_transducer_prob(const TransducerModel& model, int frames,
                              std::span<const TokenId> labels, const OracleBudget& budget) {
  const int u = static_cast<int>(labels.size());
  if (frames < 1 || frames > model.frames()) throw UsageError("frame count out of range");
  if (model.num_labels() > budget.max_vocab) over_budget(std::to_string(model.num_labels()) + " labels");
  if (frames > budget.max_frames) over_budget(std::to_string(frames) + " frames");
  if (u > budget.max_len) over_budget("length " + std::to_string(u));
  // C(T-1+U, U) alignments: the last step is always the final blank.
  double alignments = 1.0;
  for (int i = 1; i <= u; ++i) alignments = alignments * (frames - 1 + i) / i;
  if (alignments > budget.max_enumeration) over_budget("alignment count");
  for (TokenId l : labels)
    if (l < 0 || l >= model.num_labels()) throw UsageError("label id out of range");

  Scalar total = kNegInf;
  const TokenId blank = model.blank_id();
  // Walks every path explicitly; no dynamic programming.
  std::function<void(int, int, const ScorerState&, Scalar)> walk = [&](int t, int i, const ScorerState& st,
                                                                       Scalar acc) {
    const Vector row = model.joint(t, st);
    if (i < u) walk(t, i + 1, model.pred_step(st, labels[static_cast<size_t>(i)]),
                    acc + row[labels[static_cast<size_t>(i)]]);
    if (t + 1 < frames)
      walk(t + 1, i, st, acc + row[blank]);
    else if (i == u)
      total = log_add(total, acc + row[blank]);
  };
  walk(0, 0, model.pred_init(), 0.0);
  return total;
}

}  // namespace seqdec
