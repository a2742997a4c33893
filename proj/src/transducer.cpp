#include "seqdec/transducer.hpp"

#include "json_util.hpp"
#include "seqdec/logmath.hpp"

#include <cmath>
#include <set>

namespace seqdec {

Matrix TransducerModel::batch_joint(int t, std::span<const ScorerState> states) const {
  Matrix out(static_cast<Eigen::Index>(states.size()), num_labels() + 1);
  for (size_t i = 0; i < states.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = joint(t, states[i]).transpose();
  return out;
}

TableTransducer::TableTransducer(int context_order, int frames, int num_labels,
                                 std::map<TokenSeq, Matrix> rows)
    : order_(context_order), frames_(frames), labels_(num_labels), rows_(std::move(rows)) {
  if (order_ < 0) throw ConfigError("context_order must be >= 0");
  if (frames_ < 1) throw ConfigError("T must be >= 1");
  if (labels_ < 1) throw ConfigError("vocab_size must be >= 1");
  uniform_ = Vector::Constant(labels_ + 1, -std::log(static_cast<Scalar>(labels_ + 1)));
  for (const auto& [ctx, table] : rows_) {
    const std::string where = "context '" + detail::format_id_list(ctx) + "'";
    if (static_cast<int>(ctx.size()) > order_) throw FormatError(where + " longer than context_order");
    for (TokenId l : ctx)
      if (l < 0 || l >= labels_) throw FormatError(where + " holds a non-label id");
    if (table.rows() != frames_ || table.cols() != labels_ + 1)
      throw FormatError(where + ": expected T rows of V+1 log-probs");
    for (int t = 0; t < frames_; ++t) {
      if (table.row(t).hasNaN() || std::abs(logsumexp(table.row(t))) > EmissionMatrix::kRowTolerance)
        throw FormatError(where + ", frame " + std::to_string(t) + ": row is not normalized");
    }
  }
}

const Matrix* TableTransducer::table_for(const TokenSeq& context) const {
  auto it = rows_.find(context);
  return it == rows_.end() ? nullptr : &it->second;
}

ScorerState TableTransducer::pred_init() const { return ScorerState::make(TokenSeq{}); }

ScorerState TableTransducer::pred_step(const ScorerState& state, TokenId label) const {
  if (label < 0 || label >= labels_) throw UsageError("pred_step needs a label id");
  TokenSeq ctx = state.get<TokenSeq>();
  ctx.push_back(label);
  if (static_cast<int>(ctx.size()) > order_) ctx.erase(ctx.begin(), ctx.end() - order_);
  return ScorerState::make(std::move(ctx));
}

Vector TableTransducer::joint(int t, const ScorerState& state) const {
  if (t < 0 || t >= frames_) throw UsageError("frame index out of range");
  const Matrix* table = table_for(state.get<TokenSeq>());
  return table ? Vector(table->row(t).transpose()) : uniform_;
}

Matrix TableTransducer::batch_joint(int t, std::span<const ScorerState> states) const {
  if (t < 0 || t >= frames_) throw UsageError("frame index out of range");
  Matrix out(static_cast<Eigen::Index>(states.size()), labels_ + 1);
  for (size_t i = 0; i < states.size(); ++i) {
    const Matrix* table = table_for(states[i].get<TokenSeq>());
    if (table)
      out.row(static_cast<Eigen::Index>(i)) = table->row(t);
    else
      out.row(static_cast<Eigen::Index>(i)) = uniform_.transpose();
  }
  return out;
}

TableTransducer load_table_transducer(const std::filesystem::path& path) {
  const auto doc = detail::read_json_file(path);
  try {
    const int k = doc.at("context_order").get<int>();
    const int frames = doc.at("T").get<int>();
    const int v = doc.at("vocab_size").get<int>();
    if (frames < 1 || v < 1) throw FormatError("need T >= 1 and vocab_size >= 1");
    std::map<TokenSeq, Matrix> rows;
    for (const auto& [key, per_frame] : doc.at("rows").items()) {
      if (!per_frame.is_array() || static_cast<int>(per_frame.size()) != frames)
        throw FormatError("context '" + key + "': expected T rows");
      Matrix m(frames, v + 1);
      for (int t = 0; t < frames; ++t)
        m.row(t) = detail::vector_from_json(per_frame[static_cast<size_t>(t)], v + 1,
                                            "context '" + key + "', frame " + std::to_string(t))
                       .transpose();
      rows.emplace(detail::parse_id_list(key), std::move(m));
    }
    return TableTransducer(k, frames, v, std::move(rows));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void save_table_transducer(const TableTransducer& model, const std::filesystem::path& path) {
  nlohmann::json rows = nlohmann::json::object();
  for (const auto& [ctx, table] : model.rows()) {
    nlohmann::json per_frame = nlohmann::json::array();
    for (int t = 0; t < model.frames(); ++t)
      per_frame.push_back(detail::vector_to_json(table.row(t).transpose()));
    rows[detail::format_id_list(ctx)] = std::move(per_frame);
  }
  nlohmann::json doc{{"context_order", model.context_order()},
                     {"T", model.frames()},
                     {"vocab_size", model.num_labels()},
                     {"rows", rows}};
  detail::write_json_file(doc, path);
}

TransducerAlgorithm parse_transducer_algorithm(std::string_view name) {
  if (name == "greedy") return TransducerAlgorithm::Greedy;
  if (name == "beam") return TransducerAlgorithm::Beam;
  if (name == "tsd") return TransducerAlgorithm::Tsd;
  if (name == "alsd") return TransducerAlgorithm::Alsd;
  if (name == "nsc") return TransducerAlgorithm::Nsc;
  throw ConfigError("unknown transducer algorithm '" + std::string(name) + "'");
}

std::string_view to_string(TransducerAlgorithm algorithm) {
  switch (algorithm) {
    case TransducerAlgorithm::Greedy: return "greedy";
    case TransducerAlgorithm::Beam: return "beam";
    case TransducerAlgorithm::Tsd: return "tsd";
    case TransducerAlgorithm::Alsd: return "alsd";
    case TransducerAlgorithm::Nsc: return "nsc";
  }
  return "unknown";
}

Vector transducer_fuse_lm(const Vector& joint_logp, const Vector& lm_logp, Scalar weight) {
  if (lm_logp.size() + 1 != joint_logp.size())
    throw ConfigError("LM vocabulary size " + std::to_string(lm_logp.size()) +
                      " does not match the transducer's " + std::to_string(joint_logp.size() - 1) +
                      " labels");
  Vector out = joint_logp;
  if (weight != 0.0) out.head(lm_logp.size()) += weight * lm_logp;
  return out;
}

int alsd_u_max(Scalar u_max_ratio, int frames) {
  return static_cast<int>(std::floor(u_max_ratio * frames));
}

namespace {

struct Hyp {
  TokenSeq yseq;
  Scalar score = 0.0;
  Scalar lm_score = 0.0;  // unweighted LM log-prob of yseq
  ScorerState pred;
  ScorerState lm_state;
};

void rank(std::vector<Hyp>& hyps) {
  rank_by_score(
      hyps, [](const Hyp& h) { return h.score; }, [](const Hyp& h) -> const TokenSeq& { return h.yseq; });
}

std::vector<Hyp> top(std::vector<Hyp> hyps, int beam) {
  rank(hyps);
  if (hyps.size() > static_cast<size_t>(beam)) hyps.resize(static_cast<size_t>(beam));
  return hyps;
}

using HypMap = std::map<TokenSeq, Hyp>;

/// Same label sequence at the same lattice node: probabilities add.
void merge_into(HypMap& pool, Hyp h) {
  auto it = pool.find(h.yseq);
  if (it == pool.end()) {
    pool.emplace(h.yseq, std::move(h));
    return;
  }
  it->second.score = log_add(it->second.score, h.score);
}

std::vector<Hyp> values(HypMap& pool) {
  std::vector<Hyp> out;
  out.reserve(pool.size());
  for (auto& [_, h] : pool) out.push_back(std::move(h));
  return out;
}

std::vector<ScorerState> preds(const std::vector<Hyp>& hyps) {
  std::vector<ScorerState> out;
  out.reserve(hyps.size());
  for (const Hyp& h : hyps) out.push_back(h.pred);
  return out;
}

/// Prediction/LM bookkeeping shared by the beam-family decoders.
class Expander {
 public:
  Expander(const TransducerModel& model, const TransducerBeamConfig& config)
      : model_(model), config_(config), placeholder_(Matrix::Constant(1, 2, -std::log(2.0))) {
    if (config.beam_size < 1) throw ConfigError("beam_size must be >= 1");
    if (config.lm && config.lm->vocab_size() != model.num_labels())
      throw ConfigError("LM vocabulary size " + std::to_string(config.lm->vocab_size()) +
                        " does not match the transducer's " + std::to_string(model.num_labels()) +
                        " labels");
  }

  int beam() const { return config_.beam_size; }
  int label_beam() const { return std::min(config_.beam_size, model_.num_labels()); }
  TokenId blank() const { return model_.blank_id(); }

  Hyp initial() const {
    Hyp h;
    h.pred = model_.pred_init();
    if (config_.lm) h.lm_state = config_.lm->init_state(placeholder_);
    return h;
  }

  /// Joint row of `h` at a frame with the LM folded into the label entries.
  struct Scored {
    Vector logp;
    Vector lm;  // empty without LM
    ScorerState lm_scored;
  };

  Scored scored(const Hyp& h, Vector joint_row) const {
    Scored s;
    if (!config_.lm) {
      s.logp = std::move(joint_row);
      return s;
    }
    FullScore fs = config_.lm->score(h.yseq, h.lm_state, placeholder_);
    s.logp = transducer_fuse_lm(joint_row, fs.scores, config_.lm_weight);
    s.lm = std::move(fs.scores);
    s.lm_scored = std::move(fs.state);
    return s;
  }

  Scored scored_at(int t, const Hyp& h) const { return scored(h, model_.joint(t, h.pred)); }

  Hyp with_blank(const Hyp& h, const Scored& s) const {
    Hyp out = h;
    out.score += s.logp[blank()];
    return out;
  }

  Hyp with_label(const Hyp& h, const Scored& s, TokenId k) const {
    Hyp out;
    out.yseq = h.yseq;
    out.yseq.push_back(k);
    out.score = h.score + s.logp[k];
    out.pred = model_.pred_step(h.pred, k);
    if (config_.lm) {
      out.lm_score = h.lm_score + s.lm[k];
      out.lm_state = config_.lm->select_state(s.lm_scored, h.yseq, k);
    }
    return out;
  }

  /// Best `count` labels by fused score, ties to the lower id.
  std::vector<TokenId> top_labels(const Scored& s, int count) const {
    std::vector<TokenId> ids(static_cast<size_t>(model_.num_labels()));
    for (TokenId k = 0; k < model_.num_labels(); ++k) ids[static_cast<size_t>(k)] = k;
    std::stable_sort(ids.begin(), ids.end(),
                     [&](TokenId a, TokenId b) { return s.logp[a] > s.logp[b]; });
    ids.resize(static_cast<size_t>(std::min<int>(count, model_.num_labels())));
    return ids;
  }

  NBestList to_nbest(std::vector<Hyp> hyps) const {
    rank(hyps);
    if (hyps.size() > static_cast<size_t>(beam())) hyps.resize(static_cast<size_t>(beam()));
    NBestList out;
    for (const Hyp& h : hyps) {
      NBestEntry e;
      e.yseq = h.yseq;
      e.score = h.score;
      if (config_.lm) {
        e.scores["lm"] = h.lm_score;
        e.scores["transducer"] = h.score - weighted(config_.lm_weight, h.lm_score);
      } else {
        e.scores["transducer"] = h.score;
      }
      out.push_back(std::move(e));
    }
    return out;
  }

 private:
  const TransducerModel& model_;
  const TransducerBeamConfig& config_;
  EmissionMatrix placeholder_;  // LM scorers take an emission they do not read
};

bool ranks_before(const Hyp& a, const Hyp& b) {
  if (a.score == b.score || std::abs(a.score - b.score) <= kTieTolerance) return a.yseq < b.yseq;
  return a.score > b.score;
}

}  // namespace

TransducerHypothesis transducer_greedy(const TransducerModel& model) {
  TransducerHypothesis hyp;
  hyp.pred_state = model.pred_init();
  const TokenId blank = model.blank_id();
  for (int t = 0; t < model.frames(); ++t) {
    const Vector logp = model.joint(t, hyp.pred_state);
    Eigen::Index best = 0;
    logp.maxCoeff(&best);
    hyp.score += logp[best];
    if (best == blank) continue;
    hyp.yseq.push_back(static_cast<TokenId>(best));
    hyp.pred_state = model.pred_step(hyp.pred_state, static_cast<TokenId>(best));
    // Moving on to the next frame is a blank in the alignment lattice.
    hyp.score += model.joint(t, hyp.pred_state)[blank];
  }
  return hyp;
}

NBestList transducer_beam(const TransducerModel& model, const TransducerBeamConfig& config) {
  if (config.max_sym_exp < 0) throw ConfigError("max_sym_exp must be >= 0");
  const Expander ex(model, config);
  std::vector<Hyp> kept{ex.initial()};

  struct Pending {
    Hyp hyp;
    int emitted;  // labels emitted within the current frame
  };

  for (int t = 0; t < model.frames(); ++t) {
    std::vector<Pending> queue;
    for (Hyp& h : kept) queue.push_back({std::move(h), 0});
    HypMap done;
    while (!queue.empty()) {
      auto best = queue.begin();
      for (auto it = queue.begin() + 1; it != queue.end(); ++it)
        if (ranks_before(it->hyp, best->hyp)) best = it;
      Pending cur = std::move(*best);
      queue.erase(best);

      const auto s = ex.scored_at(t, cur.hyp);
      merge_into(done, ex.with_blank(cur.hyp, s));
      if (config.max_sym_exp == 0 || cur.emitted < config.max_sym_exp)
        for (TokenId k : ex.top_labels(s, ex.label_beam()))
          queue.push_back({ex.with_label(cur.hyp, s, k), cur.emitted + 1});

      Scalar queue_max = kNegInf;
      for (const Pending& p : queue) queue_max = std::max(queue_max, p.hyp.score);
      const auto settled = std::count_if(done.begin(), done.end(),
                                         [&](const auto& kv) { return kv.second.score > queue_max; });
      if (settled >= ex.beam()) break;
    }
    kept = top(values(done), ex.beam());
  }
  return ex.to_nbest(std::move(kept));
}

NBestList transducer_tsd(const TransducerModel& model, const TransducerBeamConfig& config) {
  if (config.max_exp_per_step < 1) throw ConfigError("max_exp_per_step must be >= 1");
  const Expander ex(model, config);
  std::vector<Hyp> kept{ex.initial()};
  for (int t = 0; t < model.frames(); ++t) {
    HypMap closed;
    std::vector<Hyp> frontier = kept;
    for (int round = 0; round <= config.max_exp_per_step && !frontier.empty(); ++round) {
      const Matrix joint = model.batch_joint(t, preds(frontier));
      std::vector<Hyp> expanded;
      for (size_t i = 0; i < frontier.size(); ++i) {
        const auto s = ex.scored(frontier[i], joint.row(static_cast<Eigen::Index>(i)).transpose());
        merge_into(closed, ex.with_blank(frontier[i], s));
        if (round == config.max_exp_per_step) continue;
        for (TokenId k : ex.top_labels(s, ex.label_beam()))
          expanded.push_back(ex.with_label(frontier[i], s, k));
      }
      frontier = top(std::move(expanded), ex.beam());
    }
    kept = top(values(closed), ex.beam());
  }
  return ex.to_nbest(std::move(kept));
}

NBestList transducer_alsd(const TransducerModel& model, const TransducerBeamConfig& config) {
  if (!(config.u_max_ratio > 0.0)) throw ConfigError("u_max_ratio must be > 0");
  const Expander ex(model, config);
  const int frames = model.frames();
  const int u_max = alsd_u_max(config.u_max_ratio, frames);
  std::vector<Hyp> live{ex.initial()};
  HypMap finals;
  for (int i = 0; i < frames + u_max && !live.empty(); ++i) {
    // Hypotheses sharing a frame are scored as one batch.
    std::map<int, std::vector<Hyp>> by_frame;
    for (Hyp& h : live) {
      const int t = i - static_cast<int>(h.yseq.size());
      if (t >= 0 && t < frames) by_frame[t].push_back(std::move(h));
    }
    HypMap next;
    for (auto& [t, group] : by_frame) {
      const Matrix joint = model.batch_joint(t, preds(group));
      for (size_t j = 0; j < group.size(); ++j) {
        const Hyp& h = group[j];
        const auto s = ex.scored(h, joint.row(static_cast<Eigen::Index>(j)).transpose());
        if (t == frames - 1)
          merge_into(finals, ex.with_blank(h, s));
        else
          merge_into(next, ex.with_blank(h, s));
        if (static_cast<int>(h.yseq.size()) < u_max)
          for (TokenId k : ex.top_labels(s, ex.label_beam())) merge_into(next, ex.with_label(h, s, k));
      }
    }
    live = top(values(next), ex.beam());
  }
  if (finals.empty()) return ex.to_nbest(std::move(live));
  return ex.to_nbest(values(finals));
}

NBestList transducer_nsc(const TransducerModel& model, const TransducerBeamConfig& config) {
  if (config.n_steps < 1) throw ConfigError("n_steps must be >= 1");
  const Expander ex(model, config);
  std::vector<Hyp> kept{ex.initial()};
  for (int t = 0; t < model.frames(); ++t) {
    std::vector<Hyp> hyps = std::move(kept);
    std::stable_sort(hyps.begin(), hyps.end(), [](const Hyp& a, const Hyp& b) {
      if (a.yseq.size() != b.yseq.size()) return a.yseq.size() > b.yseq.size();
      return a.yseq < b.yseq;
    });

    // Prefix merge: mass that a shorter hypothesis sends to a longer one by
    // emitting the missing labels at this frame. Longest first, so each
    // update reads not-yet-updated shorter scores.
    for (size_t j = 0; j + 1 < hyps.size(); ++j) {
      for (size_t i = j + 1; i < hyps.size(); ++i) {
        const TokenSeq& longer = hyps[j].yseq;
        const TokenSeq& shorter = hyps[i].yseq;
        if (shorter.size() >= longer.size()) continue;
        if (longer.size() - shorter.size() > static_cast<size_t>(config.n_steps)) continue;
        if (!std::equal(shorter.begin(), shorter.end(), longer.begin())) continue;
        Hyp walk = hyps[i];
        for (size_t u = shorter.size(); u < longer.size(); ++u)
          walk = ex.with_label(walk, ex.scored_at(t, walk), longer[u]);
        hyps[j].score = log_add(hyps[j].score, walk.score);
      }
    }

    std::set<TokenSeq> at_start;
    for (const Hyp& h : hyps) at_start.insert(h.yseq);

    HypMap closed;
    for (int step = 0; step <= config.n_steps && !hyps.empty(); ++step) {
      const Matrix joint = model.batch_joint(t, preds(hyps));
      HypMap expanded;
      for (size_t i = 0; i < hyps.size(); ++i) {
        const auto s = ex.scored(hyps[i], joint.row(static_cast<Eigen::Index>(i)).transpose());
        merge_into(closed, ex.with_blank(hyps[i], s));
        if (step == config.n_steps) continue;
        for (TokenId k : ex.top_labels(s, ex.label_beam())) {
          Hyp n = ex.with_label(hyps[i], s, k);
          // Already counted by the prefix merge.
          if (at_start.count(n.yseq)) continue;
          merge_into(expanded, std::move(n));
        }
      }
      hyps = top(values(expanded), ex.beam());
    }
    kept = top(values(closed), ex.beam());
  }
  return ex.to_nbest(std::move(kept));
}

NBestList transducer_decode(const TransducerModel& model, const TransducerBeamConfig& config) {
  switch (config.algorithm) {
    case TransducerAlgorithm::Greedy: {
      const TransducerHypothesis h = transducer_greedy(model);
      return {NBestEntry{h.yseq, h.score, {{"transducer", h.score}}}};
    }
    case TransducerAlgorithm::Beam: return transducer_beam(model, config);
    case TransducerAlgorithm::Tsd: return transducer_tsd(model, config);
    case TransducerAlgorithm::Alsd: return transducer_alsd(model, config);
    case TransducerAlgorithm::Nsc: return transducer_nsc(model, config);
  }
  throw ConfigError("unknown transducer algorithm");
}

}  // namespace seqdec
