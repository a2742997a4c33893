#pragma once

#include "seqdec/emission.hpp"

#include <span>
#include <vector>

namespace seqdec {

/// ln p(labels | emission) by the CTC forward algorithm. -inf when the
/// labels cannot fit in the available frames.
Scalar ctc_forward(const EmissionMatrix& x, std::span<const TokenId> labels, TokenId blank);

/// Frame-wise argmax, repeats collapsed, blanks removed. Ties go to the lower id.
TokenSeq ctc_greedy(const EmissionMatrix& x, TokenId blank);

/// Collapse a frame path into its label sequence.
TokenSeq ctc_collapse(std::span<const TokenId> path, TokenId blank);

struct TokenSpan {
  TokenId token;
  int start;  // first frame, inclusive
  int end;    // one past the last frame
};

struct Alignment {
  TokenSeq path;  // one id per frame, blank included
  std::vector<TokenSpan> spans;
  Scalar log_prob = kNegInf;  // probability of this single path
};

/// Best (Viterbi) CTC path for a known label sequence. Throws InfeasibleError
/// when no path exists.
Alignment ctc_forced_align(const EmissionMatrix& x, std::span<const TokenId> labels, TokenId blank);

enum class SegmentKind { Speech, Nonspeech };

struct Segment {
  int start;
  int end;
  SegmentKind kind;

  friend bool operator==(const Segment&, const Segment&) = default;
};

struct VadOptions {
  Scalar on_threshold = 0.5;  // speech iff 1 - p(blank) >= on_threshold
  int min_gap_frames = 0;     // speech runs separated by fewer frames are joined
  int margin_frames = 0;      // padding added on both sides of each speech run
};

/// Joins speech segments separated by fewer than `min_gap` frames (and any
/// that touch or overlap). A fixed point of itself.
std::vector<Segment> merge_speech(std::vector<Segment> speech, int min_gap);

/// Speech/nonspeech segmentation from the blank posterior alone. The result
/// tiles [0, T).
std::vector<Segment> ctc_vad(const EmissionMatrix& x, TokenId blank, const VadOptions& options);

}  // namespace seqdec
