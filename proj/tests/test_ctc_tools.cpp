#include "doctest.h"
#include "support.hpp"

#include "seqdec/ctc_prefix.hpp"
#include "seqdec/ctc_tools.hpp"
#include "seqdec/oracle.hpp"

using namespace seqdec;
using seqdec::test::Rng;

namespace {

/// Every path of length T over V symbols, as a flat counter.
template <typename Fn>
void for_each_path(int frames, int vocab, Fn fn) {
  TokenSeq path(static_cast<size_t>(frames), 0);
  while (true) {
    fn(path);
    int i = 0;
    while (i < frames && ++path[static_cast<size_t>(i)] == vocab) path[static_cast<size_t>(i++)] = 0;
    if (i == frames) return;
  }
}

TokenSeq naive_collapse(const TokenSeq& path, TokenId blank) {
  TokenSeq out;
  TokenId prev = -1;
  for (TokenId s : path) {
    if (s != prev && s != blank) out.push_back(s);
    prev = s;
  }
  return out;
}

TokenSeq argmax_path(const EmissionMatrix& x) {
  TokenSeq p;
  for (int t = 0; t < x.frames(); ++t) {
    TokenId best = 0;
    for (TokenId c = 1; c < x.vocab_size(); ++c)
      if (x(t, c) > x(t, best)) best = c;
    p.push_back(best);
  }
  return p;
}

std::vector<Segment> speech_only(const std::vector<Segment>& s) {
  std::vector<Segment> out;
  for (const auto& seg : s)
    if (seg.kind == SegmentKind::Speech) out.push_back(seg);
  return out;
}

void check_tiling(const std::vector<Segment>& s, int frames) {
  REQUIRE_FALSE(s.empty());
  CHECK(s.front().start == 0);
  CHECK(s.back().end == frames);
  for (size_t i = 0; i < s.size(); ++i) {
    CHECK(s[i].end > s[i].start);
    if (i) {
      CHECK(s[i].start == s[i - 1].end);
      CHECK(s[i].kind != s[i - 1].kind);
    }
  }
}

/// Blank posterior given per frame; the remaining mass goes to label 1.
EmissionMatrix blank_track(std::initializer_list<double> p_blank) {
  Matrix m(static_cast<Eigen::Index>(p_blank.size()), 2);
  Eigen::Index t = 0;
  for (double p : p_blank) {
    m(t, 0) = std::log(p);
    m(t, 1) = std::log(1.0 - p);
    ++t;
  }
  return EmissionMatrix(m);
}

}  // namespace

TEST_CASE("CTC forward small cases") {
  CHECK(ctc_forward(test::emission_from_probs({{0.5, 0.5}}), TokenSeq{1}, 0) == doctest::Approx(std::log(0.5)));
  CHECK(ctc_forward(test::emission_from_probs({{0.5, 0.5}, {0.5, 0.5}}), TokenSeq{1}, 0) ==
        doctest::Approx(std::log(0.75)));
  // "aa" needs a blank between the two labels.
  CHECK(ctc_forward(test::emission_from_probs({{0.5, 0.5}, {0.5, 0.5}}), TokenSeq{1, 1}, 0) == kNegInf);
  CHECK(ctc_forward(test::emission_from_probs({{0.5, 0.5}}), TokenSeq{}, 0) == doctest::Approx(std::log(0.5)));
  CHECK_THROWS_AS(ctc_forward(test::emission_from_probs({{0.5, 0.5}}), TokenSeq{0}, 0), UsageError);
}

TEST_CASE("CTC forward equals the brute-force path sum") {
  Rng rng(50);
  for (int trial = 0; trial < 60; ++trial) {
    const int v = 2 + trial % 2;
    const int frames = 1 + trial % 5;
    const EmissionMatrix x = test::random_emission(rng, frames, v);
    std::map<TokenSeq, double> mass;
    for_each_path(frames, v, [&](const TokenSeq& p) {
      double prob = 1;
      for (int t = 0; t < frames; ++t) prob *= std::exp(x(t, p[static_cast<size_t>(t)]));
      mass[naive_collapse(p, 0)] += prob;
    });
    double total = 0;
    for (const auto& [labels, m] : mass) {
      total += m;
      if (labels.size() > 3) continue;
      CHECK(std::exp(ctc_forward(x, labels, 0)) == doctest::Approx(m).epsilon(1e-9));
      CHECK(std::exp(oracle_ctc_prob(x, labels, 0)) == doctest::Approx(m).epsilon(1e-9));
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("prefix scorer at eos equals the forward score") {
  Rng rng(51);
  for (int trial = 0; trial < 40; ++trial) {
    const int v = 5;
    const EmissionMatrix x = test::random_emission(rng, 2 + trial % 6, v);
    std::uniform_int_distribution<TokenId> lab(1, 3);
    TokenSeq labels(static_cast<size_t>(trial % 4));
    for (auto& l : labels) l = lab(rng);
    CtcPrefixState s = ctc_prefix_init(x, 0);
    Scalar total = 0;
    for (TokenId l : labels) {
      const TokenId c[] = {l};
      auto r = ctc_prefix_score_partial(s, c, x, 0, 4);
      total += r.scores[0];
      s = r.states[0];
    }
    const TokenId eos[] = {4};
    total += ctc_prefix_score_partial(s, eos, x, 0, 4).scores[0];
    const Scalar f = ctc_forward(x, labels, 0);
    if (f == kNegInf)
      CHECK(total == kNegInf);
    else
      CHECK(std::abs(total - f) <= 1e-9);
  }
}

TEST_CASE("CTC greedy") {
  CHECK(ctc_greedy(test::emission_from_probs({{0.9, 0.1}, {0.8, 0.2}}), 0).empty());
  const EmissionMatrix x = test::emission_from_probs(
      {{0.1, 0.8, 0.1}, {0.1, 0.8, 0.1}, {0.8, 0.1, 0.1}, {0.1, 0.1, 0.8}});
  CHECK(ctc_greedy(x, 0) == TokenSeq{1, 2});
  Rng rng(52);
  for (int trial = 0; trial < 50; ++trial) {
    const EmissionMatrix r = test::random_emission(rng, 1 + trial % 8, 4);
    CHECK(ctc_greedy(r, 0) == naive_collapse(argmax_path(r), 0));
    CHECK(ctc_collapse(argmax_path(r), 0) == naive_collapse(argmax_path(r), 0));
  }
}

TEST_CASE("forced alignment examples") {
  const Alignment a = ctc_forced_align(test::emission_from_probs({{0.9, 0.1}, {0.1, 0.9}}), TokenSeq{1}, 0);
  CHECK(a.path == TokenSeq{0, 1});
  REQUIRE(a.spans.size() == 1);
  CHECK(a.spans[0].token == 1);
  CHECK(a.spans[0].start == 1);
  CHECK(a.spans[0].end == 2);
  CHECK(a.log_prob == doctest::Approx(2 * std::log(0.9)));

  // Three frames for "aa": the only feasible path is a, blank, a.
  const Alignment d =
      ctc_forced_align(test::emission_from_probs({{0.2, 0.8}, {0.3, 0.7}, {0.6, 0.4}}), TokenSeq{1, 1}, 0);
  CHECK(d.path == TokenSeq{1, 0, 1});
  CHECK(d.spans.size() == 2);
  CHECK_THROWS_AS(ctc_forced_align(test::emission_from_probs({{0.5, 0.5}, {0.5, 0.5}}), TokenSeq{1, 1}, 0),
                  InfeasibleError);
}

TEST_CASE("forced alignment is the best valid path") {
  Rng rng(53);
  for (int trial = 0; trial < 60; ++trial) {
    const int v = 3;
    const int frames = 2 + trial % 4;
    const EmissionMatrix x = test::random_emission(rng, frames, v);
    std::uniform_int_distribution<TokenId> lab(1, 2);
    TokenSeq labels(static_cast<size_t>(1 + trial % 2));
    for (auto& l : labels) l = lab(rng);
    Scalar best = kNegInf;
    for_each_path(frames, v, [&](const TokenSeq& p) {
      if (naive_collapse(p, 0) != labels) return;
      Scalar s = 0;
      for (int t = 0; t < frames; ++t) s += x(t, p[static_cast<size_t>(t)]);
      best = std::max(best, s);
    });
    if (best == kNegInf) {
      CHECK_THROWS_AS(ctc_forced_align(x, labels, 0), InfeasibleError);
      continue;
    }
    const Alignment a = ctc_forced_align(x, labels, 0);
    CHECK(a.log_prob == doctest::Approx(best).epsilon(1e-12));
    CHECK(naive_collapse(a.path, 0) == labels);
    CHECK(a.log_prob <= ctc_forward(x, labels, 0) + 1e-12);
    Scalar path_score = 0;
    for (int t = 0; t < frames; ++t) path_score += x(t, a.path[static_cast<size_t>(t)]);
    CHECK(path_score == doctest::Approx(a.log_prob).epsilon(1e-12));
    REQUIRE(a.spans.size() == labels.size());
    for (size_t i = 0; i < a.spans.size(); ++i) {
      CHECK(a.spans[i].token == labels[i]);
      CHECK(a.spans[i].start < a.spans[i].end);
      CHECK(a.spans[i].end <= frames);
      if (i) CHECK(a.spans[i].start >= a.spans[i - 1].end);
      for (int t = a.spans[i].start; t < a.spans[i].end; ++t) CHECK(a.path[static_cast<size_t>(t)] == labels[i]);
    }
  }
}

TEST_CASE("VAD examples") {
  const auto quiet = ctc_vad(blank_track({1.0, 1.0, 1.0}), 0, {});
  REQUIRE(quiet.size() == 1);
  CHECK(quiet[0] == Segment{0, 3, SegmentKind::Nonspeech});

  const auto busy = ctc_vad(blank_track({1e-300, 1e-300}), 0, {});
  REQUIRE(busy.size() == 1);
  CHECK(busy[0] == Segment{0, 2, SegmentKind::Speech});

  const auto joined = ctc_vad(blank_track({0.1, 0.1, 0.9, 0.1}), 0, {.on_threshold = 0.5, .min_gap_frames = 2});
  REQUIRE(joined.size() == 1);
  CHECK(joined[0] == Segment{0, 4, SegmentKind::Speech});

  const auto apart = ctc_vad(blank_track({0.1, 0.9, 0.9, 0.1, 0.9}), 0, {.on_threshold = 0.5});
  CHECK(speech_only(apart) == std::vector<Segment>{{0, 1, SegmentKind::Speech}, {3, 4, SegmentKind::Speech}});

  const auto padded =
      ctc_vad(blank_track({0.9, 0.9, 0.1, 0.9, 0.9, 0.9}), 0, {.on_threshold = 0.5, .margin_frames = 1});
  CHECK(speech_only(padded) == std::vector<Segment>{{1, 4, SegmentKind::Speech}});
  CHECK_THROWS_AS(ctc_vad(blank_track({0.5}), 0, {.on_threshold = 2.0}), UsageError);
}

TEST_CASE("VAD segments tile the input and merging is idempotent") {
  Rng rng(54);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> small(0, 3);
  for (int trial = 0; trial < 100; ++trial) {
    const int frames = 1 + trial % 12;
    Matrix m(frames, 2);
    for (int t = 0; t < frames; ++t) {
      const double p = u(rng);
      m(t, 0) = std::log(p);
      m(t, 1) = std::log1p(-p);
    }
    const VadOptions opt{.on_threshold = u(rng), .min_gap_frames = small(rng), .margin_frames = small(rng)};
    const auto segs = ctc_vad(EmissionMatrix(m), 0, opt);
    check_tiling(segs, frames);
    const auto speech = speech_only(segs);
    CHECK(merge_speech(speech, opt.min_gap_frames) == speech);
    const auto once = merge_speech(speech, 3);
    CHECK(merge_speech(once, 3) == once);
  }
}
