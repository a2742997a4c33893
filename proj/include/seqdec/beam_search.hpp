#pragma once

#include "seqdec/hypothesis.hpp"
#include "seqdec/scorer.hpp"
#include "seqdec/vocabulary.hpp"

#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string_view>

namespace seqdec {

struct BeamConfig {
  int beam_size = 4;
  /// 0 selects min(V, ceil(1.5 * beam_size)).
  int pre_beam_size = 0;
  WeightMap weights;
  Scalar max_len_ratio = 1.0;
  Scalar min_len_ratio = 0.0;
  /// Hard cap on output labels; overrides max_len_ratio when set.
  std::optional<int> max_len;
  /// 0 disables end detection.
  int end_detect_window = 3;
  Scalar end_detect_margin = -10.0;
};

BeamConfig parse_beam_config(std::string_view json_text);
BeamConfig load_beam_config(const std::filesystem::path& path);

struct ScorerSet {
  std::vector<std::shared_ptr<const FullScorer>> full;
  std::vector<std::shared_ptr<const PartialScorer>> partial;
};

/// Label-synchronous joint beam search, one hypothesis at a time.
NBestList beam_search(const EmissionMatrix& x, const Vocabulary& vocab, const ScorerSet& scorers,
                      const BeamConfig& config);

/// Same search with scoring done once per step over a (hyps x V) matrix.
/// Returns exactly what beam_search returns.
NBestList batch_beam_search(const EmissionMatrix& x, const Vocabulary& vocab,
                            const ScorerSet& scorers, const BeamConfig& config);

/// True iff the finished pool is non-empty and each of the last `window`
/// step-best scores is below best_finished + margin.
bool end_detect(std::span<const Scalar> finished_scores, std::span<const Scalar> step_best_scores,
                int window, Scalar margin);

/// Output-length bounds a search uses for an emission of `frames` frames.
struct LengthBounds {
  int min_len;
  int max_len;
};
LengthBounds length_bounds(const BeamConfig& config, int frames);

}  // namespace seqdec
