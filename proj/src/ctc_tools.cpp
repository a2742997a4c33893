#include "seqdec/ctc_tools.hpp"

#include "seqdec/logmath.hpp"

#include <algorithm>

namespace seqdec {

namespace {

/// Blank-interleaved expansion: blank, l0, blank, l1, ..., blank.
TokenSeq expand(std::span<const TokenId> labels, TokenId blank, int vocab) {
  TokenSeq ext;
  ext.reserve(2 * labels.size() + 1);
  ext.push_back(blank);
  for (TokenId l : labels) {
    if (l == blank) throw UsageError("label sequence contains the blank id");
    if (l < 0 || l >= vocab) throw UsageError("label id out of range");
    ext.push_back(l);
    ext.push_back(blank);
  }
  return ext;
}

bool can_skip(const TokenSeq& ext, size_t s, TokenId blank) {
  return s >= 2 && ext[s] != blank && ext[s] != ext[s - 2];
}

}  // namespace

Scalar ctc_forward(const EmissionMatrix& x, std::span<const TokenId> labels, TokenId blank) {
  const TokenSeq ext = expand(labels, blank, x.vocab_size());
  const size_t states = ext.size();
  Vector alpha = Vector::Constant(static_cast<Eigen::Index>(states), kNegInf);
  Vector next(alpha.size());
  alpha[0] = x(0, blank);
  if (states > 1) alpha[1] = x(0, ext[1]);
  for (int t = 1; t < x.frames(); ++t) {
    for (size_t s = 0; s < states; ++s) {
      const auto i = static_cast<Eigen::Index>(s);
      Scalar acc = alpha[i];
      if (s >= 1) acc = log_add(acc, alpha[i - 1]);
      if (can_skip(ext, s, blank)) acc = log_add(acc, alpha[i - 2]);
      next[i] = acc + x(t, ext[s]);
    }
    alpha.swap(next);
  }
  const auto last = static_cast<Eigen::Index>(states - 1);
  return states > 1 ? log_add(alpha[last], alpha[last - 1]) : alpha[last];
}

TokenSeq ctc_collapse(std::span<const TokenId> path, TokenId blank) {
  TokenSeq out;
  TokenId prev = -1;
  for (TokenId p : path) {
    if (p != prev && p != blank) out.push_back(p);
    prev = p;
  }
  return out;
}

TokenSeq ctc_greedy(const EmissionMatrix& x, TokenId blank) {
  TokenSeq path(static_cast<size_t>(x.frames()));
  for (int t = 0; t < x.frames(); ++t) {
    Eigen::Index best = 0;
    x.row(t).maxCoeff(&best);  // first maximum, i.e. lowest id on ties
    path[static_cast<size_t>(t)] = static_cast<TokenId>(best);
  }
  return ctc_collapse(path, blank);
}

Alignment ctc_forced_align(const EmissionMatrix& x, std::span<const TokenId> labels, TokenId blank) {
  const TokenSeq ext = expand(labels, blank, x.vocab_size());
  const int frames = x.frames();
  const auto states = static_cast<Eigen::Index>(ext.size());
  Matrix delta = Matrix::Constant(frames, states, kNegInf);
  Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> back(frames, states);
  back.setConstant(-1);

  delta(0, 0) = x(0, blank);
  if (states > 1) delta(0, 1) = x(0, ext[1]);
  for (int t = 1; t < frames; ++t) {
    for (Eigen::Index s = 0; s < states; ++s) {
      // Candidates in preference order: stay, advance one, skip a blank.
      Scalar best = delta(t - 1, s);
      int from = static_cast<int>(s);
      if (s >= 1 && delta(t - 1, s - 1) > best) {
        best = delta(t - 1, s - 1);
        from = static_cast<int>(s - 1);
      }
      if (can_skip(ext, static_cast<size_t>(s), blank) && delta(t - 1, s - 2) > best) {
        best = delta(t - 1, s - 2);
        from = static_cast<int>(s - 2);
      }
      if (best == kNegInf) continue;
      delta(t, s) = best + x(t, ext[static_cast<size_t>(s)]);
      back(t, s) = from;
    }
  }

  Eigen::Index s = states - 1;
  if (states > 1 && delta(frames - 1, states - 2) > delta(frames - 1, states - 1)) s = states - 2;
  if (delta(frames - 1, s) == kNegInf)
    throw InfeasibleError("label sequence of length " + std::to_string(labels.size()) +
                          " cannot be aligned to " + std::to_string(frames) + " frames");

  Alignment out;
  out.log_prob = delta(frames - 1, s);
  std::vector<Eigen::Index> state_path(static_cast<size_t>(frames));
  for (int t = frames - 1; t >= 0; --t) {
    state_path[static_cast<size_t>(t)] = s;
    if (t > 0) s = back(t, s);
  }
  out.path.reserve(static_cast<size_t>(frames));
  for (int t = 0; t < frames; ++t) {
    const Eigen::Index st = state_path[static_cast<size_t>(t)];
    out.path.push_back(ext[static_cast<size_t>(st)]);
    if (st % 2 == 0) continue;
    const bool continues = !out.spans.empty() && t > 0 && state_path[static_cast<size_t>(t - 1)] == st;
    if (continues)
      out.spans.back().end = t + 1;
    else
      out.spans.push_back({ext[static_cast<size_t>(st)], t, t + 1});
  }
  return out;
}

std::vector<Segment> merge_speech(std::vector<Segment> speech, int min_gap) {
  std::sort(speech.begin(), speech.end(),
            [](const Segment& a, const Segment& b) { return a.start < b.start; });
  std::vector<Segment> out;
  for (const Segment& seg : speech) {
    if (!out.empty() && seg.start - out.back().end < std::max(min_gap, 1))
      out.back().end = std::max(out.back().end, seg.end);
    else
      out.push_back(seg);
  }
  return out;
}

std::vector<Segment> ctc_vad(const EmissionMatrix& x, TokenId blank, const VadOptions& options) {
  if (!(options.on_threshold >= 0.0 && options.on_threshold <= 1.0))
    throw UsageError("on_threshold must lie in [0, 1]");
  if (options.min_gap_frames < 0 || options.margin_frames < 0)
    throw UsageError("gap and margin must be non-negative");
  const int frames = x.frames();

  std::vector<Segment> runs;
  for (int t = 0; t < frames; ++t) {
    const bool active = 1.0 - std::exp(x(t, blank)) >= options.on_threshold;
    if (!active) continue;
    if (!runs.empty() && runs.back().end == t)
      runs.back().end = t + 1;
    else
      runs.push_back({t, t + 1, SegmentKind::Speech});
  }
  runs = merge_speech(std::move(runs), options.min_gap_frames);
  for (Segment& seg : runs) {
    seg.start = std::max(0, seg.start - options.margin_frames);
    seg.end = std::min(frames, seg.end + options.margin_frames);
  }
  // Padding can close gaps; merge again so the result is a fixed point.
  runs = merge_speech(std::move(runs), options.min_gap_frames);

  std::vector<Segment> out;
  int cursor = 0;
  for (const Segment& seg : runs) {
    if (seg.start > cursor) out.push_back({cursor, seg.start, SegmentKind::Nonspeech});
    out.push_back(seg);
    cursor = seg.end;
  }
  if (cursor < frames) out.push_back({cursor, frames, SegmentKind::Nonspeech});
  return out;
}

}  // namespace seqdec
