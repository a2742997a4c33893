#include "seqdec/beam_search.hpp"

#include "json_util.hpp"
#include "seqdec/logmath.hpp"

#include <cmath>
#include <set>

namespace seqdec {

BeamConfig parse_beam_config(std::string_view json_text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("beam config: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("beam config must be a JSON object");
  BeamConfig c;
  c.beam_size = detail::get_or(doc, "beam_size", c.beam_size);
  c.pre_beam_size = detail::get_or(doc, "pre_beam_size", c.pre_beam_size);
  c.max_len_ratio = detail::get_or(doc, "max_len_ratio", c.max_len_ratio);
  c.min_len_ratio = detail::get_or(doc, "min_len_ratio", c.min_len_ratio);
  if (doc.contains("max_len")) c.max_len = detail::get_or(doc, "max_len", 0);
  if (doc.contains("weights")) {
    if (!doc["weights"].is_object()) throw ConfigError("weights must be an object");
    for (const auto& [name, w] : doc["weights"].items()) {
      if (!w.is_number()) throw ConfigError("weight for '" + name + "' is not a number");
      c.weights[name] = w.get<Scalar>();
    }
  }
  if (doc.contains("end_detect")) {
    const auto& ed = doc["end_detect"];
    c.end_detect_window = detail::get_or(ed, "window", c.end_detect_window);
    c.end_detect_margin = detail::get_or(ed, "margin", c.end_detect_margin);
  }
  return c;
}

BeamConfig load_beam_config(const std::filesystem::path& path) {
  return parse_beam_config(detail::read_json_file(path).dump());
}

bool end_detect(std::span<const Scalar> finished_scores, std::span<const Scalar> step_best_scores,
                int window, Scalar margin) {
  if (finished_scores.empty() || window <= 0) return false;
  if (step_best_scores.size() < static_cast<size_t>(window)) return false;
  const Scalar best = *std::max_element(finished_scores.begin(), finished_scores.end());
  const auto recent = step_best_scores.last(static_cast<size_t>(window));
  return std::all_of(recent.begin(), recent.end(), [&](Scalar s) { return s < best + margin; });
}

LengthBounds length_bounds(const BeamConfig& config, int frames) {
  const int max_len = config.max_len
                          ? *config.max_len
                          : std::max(1, static_cast<int>(std::floor(config.max_len_ratio * frames)));
  const int min_len = std::min(max_len, static_cast<int>(std::floor(config.min_len_ratio * frames)));
  return {min_len, max_len};
}

namespace {

struct NamedScorer {
  std::string name;
  Scalar weight;
  const FullScorer* full = nullptr;
  const PartialScorer* partial = nullptr;
};

/// Validated, name-ordered view of the scorers. Every weighted sum walks
/// `all` in this order so both search variants round identically.
struct Plan {
  std::vector<NamedScorer> all;
  std::vector<size_t> full_idx;     // positions in `all`
  std::vector<size_t> partial_idx;  // positions in `all`
  int beam = 1;
  int pre_beam = 1;
  bool do_pre_beam = false;
  LengthBounds len{0, 1};
  std::vector<TokenId> labels;
  TokenId sos = 0;
  TokenId eos = 0;
  int end_window = 0;
  Scalar end_margin = 0.0;
};

Plan make_plan(const EmissionMatrix& x, const Vocabulary& vocab, const ScorerSet& scorers,
               const BeamConfig& config) {
  if (scorers.full.empty() && scorers.partial.empty()) throw ConfigError("no scorers given");
  if (config.beam_size < 1) throw ConfigError("beam_size must be >= 1");
  if (config.pre_beam_size != 0 && config.pre_beam_size < config.beam_size)
    throw ConfigError("pre_beam_size must be >= beam_size");
  if (!config.max_len && !(config.max_len_ratio > 0.0 && config.max_len_ratio <= 1.0))
    throw ConfigError("max_len_ratio must lie in (0, 1]");
  if (config.max_len && *config.max_len < 1) throw ConfigError("max_len must be >= 1");
  if (!(config.min_len_ratio >= 0.0 && config.min_len_ratio < 1.0))
    throw ConfigError("min_len_ratio must lie in [0, 1)");
  if (x.vocab_size() != vocab.size())
    throw ConfigError("emission width " + std::to_string(x.vocab_size()) +
                      " differs from vocabulary size " + std::to_string(vocab.size()));

  Plan plan;
  std::set<std::string> seen;
  auto weight_of = [&](const std::string& name) {
    if (!seen.insert(name).second) throw ConfigError("duplicate scorer name '" + name + "'");
    auto it = config.weights.find(name);
    if (it == config.weights.end()) throw ConfigError("no weight for scorer '" + name + "'");
    if (!(it->second >= 0.0) || !std::isfinite(it->second))
      throw ConfigError("weight for '" + name + "' must be finite and non-negative");
    return it->second;
  };
  auto check_vocab = [&](const ScorerBase& s) {
    if (s.vocab_size() != vocab.size())
      throw ConfigError("scorer '" + s.name() + "' vocabulary size differs from " +
                        std::to_string(vocab.size()));
  };
  bool positive_full = false;
  for (const auto& f : scorers.full) {
    check_vocab(*f);
    const Scalar w = weight_of(f->name());
    positive_full = positive_full || w > 0.0;
    plan.all.push_back({f->name(), w, f.get(), nullptr});
  }
  for (const auto& p : scorers.partial) {
    check_vocab(*p);
    plan.all.push_back({p->name(), weight_of(p->name()), nullptr, p.get()});
  }
  for (const auto& [name, w] : config.weights)
    if (!seen.count(name)) throw ConfigError("weight given for unknown scorer '" + name + "'");
  if (!positive_full) throw ConfigError("at least one full scorer needs a positive weight");

  std::sort(plan.all.begin(), plan.all.end(),
            [](const NamedScorer& a, const NamedScorer& b) { return a.name < b.name; });
  for (size_t i = 0; i < plan.all.size(); ++i)
    (plan.all[i].full ? plan.full_idx : plan.partial_idx).push_back(i);

  const int v = vocab.size();
  plan.beam = config.beam_size;
  plan.pre_beam = config.pre_beam_size != 0
                      ? config.pre_beam_size
                      : std::min(v, static_cast<int>(std::ceil(1.5 * config.beam_size)));
  plan.do_pre_beam = !plan.partial_idx.empty() && plan.pre_beam < v;
  plan.len = length_bounds(config, x.frames());
  plan.labels = vocab.label_ids();
  plan.sos = vocab.sos_id();
  plan.eos = vocab.eos_id();
  plan.end_window = config.end_detect_window;
  plan.end_margin = config.end_detect_margin;
  return plan;
}

/// Tokens a hypothesis of `length` labels may take next.
std::vector<TokenId> allowed_tokens(const Plan& plan, int length) {
  std::vector<TokenId> out;
  if (length < plan.len.max_len) out = plan.labels;
  if (length >= plan.len.min_len || length >= plan.len.max_len) out.push_back(plan.eos);
  return out;
}

/// Top-P of `allowed` by the weighted full-scorer sum, ties to the lower id.
template <typename KeyFn>
std::vector<TokenId> pre_beam(const Plan& plan, const std::vector<TokenId>& allowed, KeyFn key) {
  if (!plan.do_pre_beam || static_cast<int>(allowed.size()) <= plan.pre_beam) return allowed;
  std::vector<std::pair<Scalar, TokenId>> keyed;
  keyed.reserve(allowed.size());
  for (TokenId c : allowed) keyed.emplace_back(key(c), c);
  // Only keys near or above the P-th largest can reach the top P, so rank
  // that prefix of the order alone.
  std::vector<Scalar> keys(keyed.size());
  for (size_t i = 0; i < keyed.size(); ++i) keys[i] = keyed[i].first;
  std::nth_element(keys.begin(), keys.begin() + (plan.pre_beam - 1), keys.end(), std::greater<>());
  const Scalar cutoff = keys[static_cast<size_t>(plan.pre_beam - 1)] - 2 * kTieTolerance;
  std::erase_if(keyed, [&](const auto& p) { return !(p.first >= cutoff); });
  rank_by_score(
      keyed, [](const auto& p) { return p.first; }, [](const auto& p) { return p.second; });
  std::vector<TokenId> out;
  for (int i = 0; i < plan.pre_beam; ++i) out.push_back(keyed[static_cast<size_t>(i)].second);
  return out;
}

/// Scores produced for the live hypotheses during one step.
struct StepScores {
  std::vector<Matrix> full;                            // per full scorer, hyps x V
  std::vector<std::vector<ScorerState>> full_states;   // per full scorer, per hyp
  std::vector<std::vector<PartialScore>> partial;      // per partial scorer, per hyp
  std::vector<std::vector<TokenId>> candidates;        // per hyp
};

struct Candidate {
  size_t hyp;
  size_t slot;  // position in candidates[hyp]
  TokenId token;
  Scalar total;
};

struct CandidateKey {
  const TokenSeq* prefix;
  TokenId token;
  friend bool operator<(const CandidateKey& a, const CandidateKey& b) {
    if (*a.prefix != *b.prefix) return *a.prefix < *b.prefix;
    return a.token < b.token;
  }
};

Scalar part_score(const Plan& plan, const StepScores& step, size_t scorer, const Candidate& c) {
  const NamedScorer& ns = plan.all[scorer];
  if (ns.full) {
    const size_t k = static_cast<size_t>(
        std::find(plan.full_idx.begin(), plan.full_idx.end(), scorer) - plan.full_idx.begin());
    return step.full[k](static_cast<Eigen::Index>(c.hyp), c.token);
  }
  const size_t k = static_cast<size_t>(
      std::find(plan.partial_idx.begin(), plan.partial_idx.end(), scorer) - plan.partial_idx.begin());
  return step.partial[k][c.hyp].scores[static_cast<Eigen::Index>(c.slot)];
}

std::vector<Candidate> select_best(std::vector<Candidate> cands, const std::vector<Hypothesis>& live,
                                   int beam) {
  rank_by_score(
      cands, [](const Candidate& c) { return c.total; },
      [&](const Candidate& c) { return CandidateKey{&live[c.hyp].yseq, c.token}; });
  if (cands.size() > static_cast<size_t>(beam)) cands.resize(static_cast<size_t>(beam));
  return cands;
}

/// Builds successors from the selected candidates, moving finished ones to
/// `finished`. Returns the best total produced at this step.
Scalar advance(const Plan& plan, const std::vector<Hypothesis>& live, const StepScores& step,
               const std::vector<Candidate>& selected, std::vector<Hypothesis>& next,
               std::vector<Hypothesis>& finished) {
  Scalar step_best = kNegInf;
  for (const Candidate& c : selected) {
    const Hypothesis& h = live[c.hyp];
    Hypothesis n;
    n.yseq = h.yseq;
    n.yseq.push_back(c.token);
    n.score = c.total;
    n.scores = h.scores;
    for (size_t s = 0; s < plan.all.size(); ++s) n.scores[plan.all[s].name] += part_score(plan, step, s, c);
    for (size_t k = 0; k < plan.full_idx.size(); ++k) {
      const NamedScorer& ns = plan.all[plan.full_idx[k]];
      n.states[ns.name] = ns.full->select_state(step.full_states[k][c.hyp], h.yseq, c.token);
    }
    for (size_t k = 0; k < plan.partial_idx.size(); ++k) {
      const NamedScorer& ns = plan.all[plan.partial_idx[k]];
      n.states[ns.name] = step.partial[k][c.hyp].states[c.slot];
    }
    if (c.token == plan.eos) {
      n.finished = true;
      for (const NamedScorer& ns : plan.all) {
        const ScorerBase& base = ns.full ? static_cast<const ScorerBase&>(*ns.full) : *ns.partial;
        const Scalar f = base.final_score(n.states[ns.name]);
        if (f == 0.0) continue;
        n.scores[ns.name] += f;
        n.score += weighted(ns.weight, f);
      }
      step_best = std::max(step_best, n.score);
      finished.push_back(std::move(n));
    } else {
      step_best = std::max(step_best, n.score);
      next.push_back(std::move(n));
    }
  }
  return step_best;
}

std::vector<PrefixView> prefix_views(const std::vector<Hypothesis>& live) {
  std::vector<PrefixView> out;
  out.reserve(live.size());
  for (const auto& h : live) out.emplace_back(h.yseq);
  return out;
}

std::vector<ScorerState> states_of(const std::vector<Hypothesis>& live, const std::string& name) {
  std::vector<ScorerState> out;
  out.reserve(live.size());
  for (const auto& h : live) out.push_back(h.states.at(name));
  return out;
}

/// One hypothesis at a time: full scores, pre-beam, partial scores.
std::vector<Candidate> score_sequential(const Plan& plan, const EmissionMatrix& x,
                                        const std::vector<Hypothesis>& live, int length,
                                        StepScores& step) {
  const auto n_hyps = static_cast<Eigen::Index>(live.size());
  const int v = x.vocab_size();
  step.full.assign(plan.full_idx.size(), Matrix(n_hyps, v));
  step.full_states.assign(plan.full_idx.size(), {});
  step.partial.assign(plan.partial_idx.size(), {});
  step.candidates.assign(live.size(), {});
  const std::vector<TokenId> allowed = allowed_tokens(plan, length);

  std::vector<Candidate> cands;
  for (size_t h = 0; h < live.size(); ++h) {
    const Hypothesis& hyp = live[h];
    for (size_t k = 0; k < plan.full_idx.size(); ++k) {
      const NamedScorer& ns = plan.all[plan.full_idx[k]];
      FullScore fs = ns.full->score(hyp.yseq, hyp.states.at(ns.name), x);
      step.full[k].row(static_cast<Eigen::Index>(h)) = fs.scores.transpose();
      step.full_states[k].push_back(std::move(fs.state));
    }
    step.candidates[h] = pre_beam(plan, allowed, [&](TokenId c) {
      Scalar key = 0.0;
      for (size_t k = 0; k < plan.full_idx.size(); ++k)
        key += weighted(plan.all[plan.full_idx[k]].weight, step.full[k](Eigen::Index(h), c));
      return key;
    });
    const auto& tokens = step.candidates[h];
    for (size_t k = 0; k < plan.partial_idx.size(); ++k) {
      const NamedScorer& ns = plan.all[plan.partial_idx[k]];
      step.partial[k].push_back(ns.partial->score_partial(hyp.yseq, hyp.states.at(ns.name), tokens, x));
    }
    for (size_t j = 0; j < tokens.size(); ++j) {
      Candidate c{h, j, tokens[j], 0.0};
      Scalar delta = 0.0;
      for (size_t s = 0; s < plan.all.size(); ++s)
        delta += weighted(plan.all[s].weight, part_score(plan, step, s, c));
      c.total = hyp.score + delta;
      cands.push_back(c);
    }
  }
  return cands;
}

/// All hypotheses at once: each full scorer fills a hyps x V matrix, the
/// weighted sums are matrix updates, partial scorers see the whole batch.
std::vector<Candidate> score_batched(const Plan& plan, const EmissionMatrix& x,
                                     const std::vector<Hypothesis>& live, int length,
                                     StepScores& step) {
  const auto n_hyps = static_cast<Eigen::Index>(live.size());
  const int v = x.vocab_size();
  const auto prefixes = prefix_views(live);
  step.full.resize(plan.full_idx.size());
  step.full_states.resize(plan.full_idx.size());
  step.partial.assign(plan.partial_idx.size(), {});

  Matrix full_sum = Matrix::Zero(n_hyps, v);
  for (size_t k = 0; k < plan.full_idx.size(); ++k) {
    const NamedScorer& ns = plan.all[plan.full_idx[k]];
    step.full[k] = ns.full->batch_score(prefixes, states_of(live, ns.name), x, step.full_states[k]);
    if (ns.weight != 0.0) full_sum += ns.weight * step.full[k];
  }

  const std::vector<TokenId> allowed = allowed_tokens(plan, length);
  step.candidates.assign(live.size(), {});
  for (size_t h = 0; h < live.size(); ++h)
    step.candidates[h] = pre_beam(plan, allowed,
                                  [&](TokenId c) { return full_sum(Eigen::Index(h), c); });

  std::vector<Matrix> partial_dense;
  for (size_t k = 0; k < plan.partial_idx.size(); ++k) {
    const NamedScorer& ns = plan.all[plan.partial_idx[k]];
    step.partial[k] =
        ns.partial->batch_score_partial(prefixes, states_of(live, ns.name), step.candidates, x);
    Matrix dense = Matrix::Constant(n_hyps, v, kNegInf);
    for (size_t h = 0; h < live.size(); ++h)
      for (size_t j = 0; j < step.candidates[h].size(); ++j)
        dense(Eigen::Index(h), step.candidates[h][j]) = step.partial[k][h].scores[Eigen::Index(j)];
    partial_dense.push_back(std::move(dense));
  }

  Matrix delta = Matrix::Zero(n_hyps, v);
  for (size_t s = 0; s < plan.all.size(); ++s) {
    const NamedScorer& ns = plan.all[s];
    if (ns.weight == 0.0) continue;
    if (ns.full) {
      const auto k = std::find(plan.full_idx.begin(), plan.full_idx.end(), s) - plan.full_idx.begin();
      delta += ns.weight * step.full[static_cast<size_t>(k)];
    } else {
      const auto k =
          std::find(plan.partial_idx.begin(), plan.partial_idx.end(), s) - plan.partial_idx.begin();
      delta += ns.weight * partial_dense[static_cast<size_t>(k)];
    }
  }
  Vector prev(n_hyps);
  for (Eigen::Index h = 0; h < n_hyps; ++h) prev[h] = live[static_cast<size_t>(h)].score;
  const Matrix totals = delta.colwise() + prev;

  std::vector<Candidate> cands;
  for (size_t h = 0; h < live.size(); ++h)
    for (size_t j = 0; j < step.candidates[h].size(); ++j) {
      const TokenId c = step.candidates[h][j];
      cands.push_back({h, j, c, totals(Eigen::Index(h), c)});
    }
  return cands;
}

template <typename ScoreStep>
NBestList run_search(const EmissionMatrix& x, const Vocabulary& vocab, const ScorerSet& scorers,
                     const BeamConfig& config, ScoreStep score_step) {
  const Plan plan = make_plan(x, vocab, scorers, config);

  Hypothesis init;
  init.yseq = {plan.sos};
  for (const NamedScorer& ns : plan.all) {
    init.scores[ns.name] = 0.0;
    init.states[ns.name] = ns.full ? ns.full->init_state(x) : ns.partial->init_state(x);
  }
  std::vector<Hypothesis> live{std::move(init)};
  std::vector<Hypothesis> finished;
  std::vector<Scalar> finished_scores;
  std::vector<Scalar> step_best;

  for (int length = 0; length <= plan.len.max_len && !live.empty(); ++length) {
    StepScores step;
    std::vector<Candidate> cands = score_step(plan, x, live, length, step);
    const std::vector<Candidate> selected = select_best(std::move(cands), live, plan.beam);
    std::vector<Hypothesis> next;
    const size_t before = finished.size();
    step_best.push_back(advance(plan, live, step, selected, next, finished));
    for (size_t i = before; i < finished.size(); ++i) finished_scores.push_back(finished[i].score);
    live = std::move(next);
    if (end_detect(finished_scores, step_best, plan.end_window, plan.end_margin)) break;
  }

  const std::vector<Hypothesis>& pool = finished.empty() ? live : finished;
  NBestList out;
  out.reserve(pool.size());
  for (const Hypothesis& h : pool) {
    NBestEntry e;
    auto first = h.yseq.begin() + 1;
    auto last = h.finished ? h.yseq.end() - 1 : h.yseq.end();
    e.yseq.assign(first, last);
    e.score = h.score;
    e.scores = h.scores;
    out.push_back(std::move(e));
  }
  sort_nbest(out);
  return out;
}

}  // namespace

NBestList beam_search(const EmissionMatrix& x, const Vocabulary& vocab, const ScorerSet& scorers,
                      const BeamConfig& config) {
  return run_search(x, vocab, scorers, config, score_sequential);
}

NBestList batch_beam_search(const EmissionMatrix& x, const Vocabulary& vocab,
                            const ScorerSet& scorers, const BeamConfig& config) {
  return run_search(x, vocab, scorers, config, score_batched);
}

}  // namespace seqdec
