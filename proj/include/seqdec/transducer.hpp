#pragma once

#include "seqdec/hypothesis.hpp"
#include "seqdec/scorer.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string_view>

namespace seqdec {

/// Transducer model contract. Labels are 0..V-1 and blank is V.
class TransducerModel {
 public:
  virtual ~TransducerModel() = default;

  virtual int num_labels() const = 0;
  virtual int frames() const = 0;
  TokenId blank_id() const { return num_labels(); }

  virtual ScorerState pred_init() const = 0;
  virtual ScorerState pred_step(const ScorerState& state, TokenId label) const = 0;
  /// V+1 log-probabilities over labels and blank at frame t.
  virtual Vector joint(int t, const ScorerState& state) const = 0;

  /// One row per prediction state; the default loops over joint().
  virtual Matrix batch_joint(int t, std::span<const ScorerState> states) const;
};

/// Reference transducer: the joint output depends on the frame and the last
/// k emitted labels only.
class TableTransducer final : public TransducerModel {
 public:
  /// Each table entry is a T x (V+1) matrix. Unseen contexts are uniform.
  TableTransducer(int context_order, int frames, int num_labels, std::map<TokenSeq, Matrix> rows);

  int num_labels() const override { return labels_; }
  int frames() const override { return frames_; }
  int context_order() const { return order_; }
  const std::map<TokenSeq, Matrix>& rows() const { return rows_; }

  ScorerState pred_init() const override;
  ScorerState pred_step(const ScorerState& state, TokenId label) const override;
  Vector joint(int t, const ScorerState& state) const override;
  Matrix batch_joint(int t, std::span<const ScorerState> states) const override;

 private:
  const Matrix* table_for(const TokenSeq& context) const;

  int order_;
  int frames_;
  int labels_;
  std::map<TokenSeq, Matrix> rows_;
  Vector uniform_;
};

TableTransducer load_table_transducer(const std::filesystem::path& path);
void save_table_transducer(const TableTransducer& model, const std::filesystem::path& path);

enum class TransducerAlgorithm { Greedy, Beam, Tsd, Alsd, Nsc };

TransducerAlgorithm parse_transducer_algorithm(std::string_view name);
std::string_view to_string(TransducerAlgorithm algorithm);

struct TransducerBeamConfig {
  int beam_size = 4;
  TransducerAlgorithm algorithm = TransducerAlgorithm::Beam;
  /// Beam: labels emitted per frame before blank is forced; 0 means unbounded.
  int max_sym_exp = 0;
  /// TSD: label-expansion rounds per frame.
  int max_exp_per_step = 2;
  /// ALSD: output length bound is floor(u_max_ratio * T).
  Scalar u_max_ratio = 1.0;
  /// NSC: label emissions per frame.
  int n_steps = 1;
  /// Optional shallow-fusion LM over the V labels.
  std::shared_ptr<const FullScorer> lm;
  Scalar lm_weight = 0.0;
};

struct TransducerHypothesis {
  TokenSeq yseq;  // labels only, never blank
  Scalar score = 0.0;
  ScorerState pred_state;
};

/// One argmax per frame; a label emission moves straight to the next frame.
/// The score is the log-probability of that single alignment path, including
/// the blank that closes a frame after an emission.
TransducerHypothesis transducer_greedy(const TransducerModel& model);

/// Breadth-first label beam (no prefix search). Same-sequence hypotheses
/// meeting at a frame boundary are merged by log-sum-exp.
NBestList transducer_beam(const TransducerModel& model, const TransducerBeamConfig& config);
/// Time-synchronous decoding.
NBestList transducer_tsd(const TransducerModel& model, const TransducerBeamConfig& config);
/// Alignment-length synchronous decoding.
NBestList transducer_alsd(const TransducerModel& model, const TransducerBeamConfig& config);
/// N-step constrained beam search.
NBestList transducer_nsc(const TransducerModel& model, const TransducerBeamConfig& config);

/// Dispatches on config.algorithm. Greedy returns a single entry.
NBestList transducer_decode(const TransducerModel& model, const TransducerBeamConfig& config);

/// Adds weight * lm to the label entries of a joint row; blank is unchanged.
Vector transducer_fuse_lm(const Vector& joint_logp, const Vector& lm_logp, Scalar weight);

/// ALSD output-length bound.
int alsd_u_max(Scalar u_max_ratio, int frames);

}  // namespace seqdec
