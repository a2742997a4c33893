#pragma once

#include "seqdec/emission.hpp"
#include "seqdec/scorer_state.hpp"
#include "seqdec/types.hpp"

#include <memory>
#include <span>
#include <string>
#include <vector>

namespace seqdec {

using PrefixView = std::span<const TokenId>;

/// Members shared by full and partial scorers.
class ScorerBase {
 public:
  explicit ScorerBase(std::string name) : name_(std::move(name)) {}
  virtual ~ScorerBase() = default;

  const std::string& name() const { return name_; }
  virtual int vocab_size() const = 0;
  virtual ScorerState init_state(const EmissionMatrix& x) const = 0;
  /// Adjustment added once when a hypothesis ends; zero unless a model needs it.
  virtual Scalar final_score(const ScorerState& /*state*/) const { return 0.0; }

 private:
  std::string name_;
};

struct FullScore {
  Vector scores;      // one log-prob per vocabulary entry
  ScorerState state;  // passed to select_state for the chosen token
};

/// Scores every vocabulary extension of a prefix.
class FullScorer : public ScorerBase {
 public:
  using ScorerBase::ScorerBase;

  virtual FullScore score(PrefixView prefix, const ScorerState& state,
                          const EmissionMatrix& x) const = 0;
  virtual ScorerState select_state(const ScorerState& scored, PrefixView prefix,
                                   TokenId token) const = 0;

  /// One row per prefix. The default stacks score(); models override it to
  /// fill the matrix directly.
  virtual Matrix batch_score(std::span<const PrefixView> prefixes,
                             std::span<const ScorerState> states, const EmissionMatrix& x,
                             std::vector<ScorerState>& scored) const;
};

struct PartialScore {
  Vector scores;                    // one entry per requested candidate, in request order
  std::vector<ScorerState> states;  // next state per candidate
};

/// Scores only a requested subset of extensions.
class PartialScorer : public ScorerBase {
 public:
  using ScorerBase::ScorerBase;

  virtual PartialScore score_partial(PrefixView prefix, const ScorerState& state,
                                     std::span<const TokenId> candidates,
                                     const EmissionMatrix& x) const = 0;

  virtual std::vector<PartialScore> batch_score_partial(
      std::span<const PrefixView> prefixes, std::span<const ScorerState> states,
      std::span<const std::vector<TokenId>> candidates, const EmissionMatrix& x) const;
};

/// Adapts a full scorer to the partial contract by gathering requested entries.
class FullAsPartial final : public PartialScorer {
 public:
  explicit FullAsPartial(std::shared_ptr<const FullScorer> inner);

  int vocab_size() const override { return inner_->vocab_size(); }
  ScorerState init_state(const EmissionMatrix& x) const override { return inner_->init_state(x); }
  Scalar final_score(const ScorerState& state) const override { return inner_->final_score(state); }
  PartialScore score_partial(PrefixView prefix, const ScorerState& state,
                             std::span<const TokenId> candidates,
                             const EmissionMatrix& x) const override;

 private:
  std::shared_ptr<const FullScorer> inner_;
};

std::shared_ptr<PartialScorer> wrap_full_as_partial(std::shared_ptr<const FullScorer> scorer);

/// Adds a constant per emitted token; with a positive weight it offsets the
/// bias toward short outputs.
class LengthBonus final : public FullScorer {
 public:
  LengthBonus(std::string name, int vocab_size) : FullScorer(std::move(name)), vocab_(vocab_size) {}
  int vocab_size() const override { return vocab_; }
  ScorerState init_state(const EmissionMatrix&) const override { return ScorerState::make(0); }
  FullScore score(PrefixView, const ScorerState& state, const EmissionMatrix&) const override {
    return {Vector::Ones(vocab_), state};
  }
  ScorerState select_state(const ScorerState& scored, PrefixView, TokenId) const override {
    return scored;
  }

 private:
  int vocab_;
};

}  // namespace seqdec
