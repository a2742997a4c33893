#include "doctest.h"
#include "support.hpp"

#include "seqdec/beam_search.hpp"
#include "seqdec/ctc_prefix.hpp"
#include "seqdec/oracle.hpp"

using namespace seqdec;
using seqdec::test::Rng;

namespace {

std::vector<std::string> label_names(int n) {
  std::vector<std::string> out;
  for (int i = 0; i < n; ++i) out.push_back("l" + std::to_string(i));
  return out;
}

/// Exposes a partial scorer as a full one by scoring every token.
class PartialAsFull final : public FullScorer {
 public:
  explicit PartialAsFull(std::shared_ptr<const PartialScorer> inner, TokenId blank)
      : FullScorer(inner->name()), inner_(std::move(inner)), blank_(blank) {}
  int vocab_size() const override { return inner_->vocab_size(); }
  ScorerState init_state(const EmissionMatrix& x) const override { return inner_->init_state(x); }
  FullScore score(PrefixView prefix, const ScorerState& state, const EmissionMatrix& x) const override {
    std::vector<TokenId> all;
    for (TokenId c = 0; c < vocab_size(); ++c)
      if (c != blank_) all.push_back(c);
    PartialScore ps = inner_->score_partial(prefix, state, all, x);
    Vector out = Vector::Constant(vocab_size(), kNegInf);
    Cache cache;
    for (size_t i = 0; i < all.size(); ++i) {
      out[all[i]] = ps.scores[static_cast<Eigen::Index>(i)];
      cache.next[all[i]] = ps.states[i];
    }
    return {out, ScorerState::make(std::move(cache))};
  }
  ScorerState select_state(const ScorerState& scored, PrefixView, TokenId token) const override {
    return scored.get<Cache>().next.at(token);
  }

 private:
  struct Cache {
    std::map<TokenId, ScorerState> next;
    bool operator==(const Cache&) const = default;
  };
  std::shared_ptr<const PartialScorer> inner_;
  TokenId blank_;
};

struct Instance {
  Vocabulary vocab;
  EmissionMatrix x;
  ScorerSet scorers;
  BeamConfig config;
};

Instance random_instance(Rng& rng, int labels, int frames, int beam, bool with_ctc = true) {
  Vocabulary vocab = Vocabulary::with_labels(label_names(labels));
  const int v = vocab.size();
  EmissionMatrix x = test::random_emission(rng, frames, v, 4.0);
  ScorerSet s;
  s.full.push_back(std::make_shared<TableScorer>(test::random_table(rng, "att", 1, v)));
  std::uniform_real_distribution<double> w(0.1, 1.0);
  BeamConfig cfg;
  cfg.beam_size = beam;
  cfg.weights["att"] = w(rng);
  if (with_ctc) {
    s.partial.push_back(std::make_shared<CtcPrefixScorer>("ctc", v, vocab.blank_id(), vocab.eos_id()));
    cfg.weights["ctc"] = w(rng);
  }
  return {std::move(vocab), std::move(x), std::move(s), cfg};
}

void check_same(const NBestList& a, const NBestList& b, double tol) {
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].yseq == b[i].yseq);
    CHECK(std::abs(a[i].score - b[i].score) <= tol);
  }
}

}  // namespace

TEST_CASE("beam of one with a single table scorer follows the step argmax") {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const Vocabulary vocab = Vocabulary::with_labels(label_names(4));
    const EmissionMatrix x = test::random_emission(rng, 6, vocab.size());
    const auto att = std::make_shared<TableScorer>(test::random_table(rng, "att", 1, vocab.size(), 5.0));
    BeamConfig cfg;
    cfg.beam_size = 1;
    cfg.weights = {{"att", 1.0}};
    const NBestList out = beam_search(x, vocab, {{att}, {}}, cfg);

    TokenSeq greedy;
    TokenId last = vocab.sos_id();
    const int max_len = length_bounds(cfg, x.frames()).max_len;
    while (true) {
      const Vector& row = att->row_for(TokenSeq{last});
      TokenId best = vocab.eos_id();
      if (static_cast<int>(greedy.size()) < max_len)
        for (TokenId c : vocab.label_ids())
          if (row[c] > row[best] || (row[c] == row[best] && c < best)) best = c;
      if (best == vocab.eos_id()) break;
      greedy.push_back(best);
      last = best;
    }
    REQUIRE(out.size() == 1);
    CHECK(out[0].yseq == greedy);
    CHECK(batch_beam_search(x, vocab, {{att}, {}}, cfg)[0].yseq == greedy);
  }
}

TEST_CASE("exhaustive beam finds the brute-force optimum") {
  Rng rng(77);
  for (int trial = 0; trial < 25; ++trial) {
    Instance in = random_instance(rng, 1 + trial % 3, 2 + trial % 4, 512);
    in.config.max_len = 1 + trial % 4;
    in.config.end_detect_window = 0;
    const NBestList out = beam_search(in.x, in.vocab, in.scorers, in.config);
    const OracleResult best = oracle_best_sequence(in.scorers, in.config.weights, in.x, in.vocab, *in.config.max_len);
    REQUIRE_FALSE(out.empty());
    CHECK(out[0].yseq == best.yseq);
    CHECK(out[0].score == doctest::Approx(best.score).epsilon(1e-6));
  }
}

TEST_CASE("n-best entries satisfy the score consistency invariant") {
  Rng rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    const Instance in = random_instance(rng, 3 + trial % 5, 4 + trial % 4, 1 + trial % 6);
    const NBestList out = batch_beam_search(in.x, in.vocab, in.scorers, in.config);
    Scalar prev = std::numeric_limits<Scalar>::infinity();
    for (const auto& e : out) {
      Hypothesis h;
      h.score = e.score;
      h.scores = e.scores;
      CHECK(validate_hypothesis(h, in.config.weights));
      CHECK(e.score <= prev + kTieTolerance);
      prev = e.score;
    }
  }
}

TEST_CASE("batched search equals sequential search") {
  Rng rng(1234);
  for (int trial = 0; trial < 30; ++trial) {
    const Instance in = random_instance(rng, 2 + trial % 20, 3 + trial % 8, 1 + trial % 8);
    const NBestList a = beam_search(in.x, in.vocab, in.scorers, in.config);
    const NBestList b = batch_beam_search(in.x, in.vocab, in.scorers, in.config);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].yseq == b[i].yseq);
      CHECK(a[i].score == b[i].score);
      CHECK(a[i].scores == b[i].scores);
    }
  }
}

TEST_CASE("a zero-weight scorer changes nothing") {
  Rng rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    Instance in = random_instance(rng, 3 + trial % 4, 5, 1 + trial % 4, false);
    const NBestList without = beam_search(in.x, in.vocab, in.scorers, in.config);
    in.scorers.partial.push_back(
        std::make_shared<CtcPrefixScorer>("ctc", in.vocab.size(), in.vocab.blank_id(), in.vocab.eos_id()));
    in.config.weights["ctc"] = 0.0;
    const NBestList with = beam_search(in.x, in.vocab, in.scorers, in.config);
    REQUIRE(with.size() == without.size());
    for (size_t i = 0; i < with.size(); ++i) {
      CHECK(with[i].yseq == without[i].yseq);
      CHECK(std::abs(with[i].score - without[i].score) <= 1e-12);
      CHECK(with[i].scores.count("ctc") == 1);
    }
  }
}

TEST_CASE("full-width pre-beam equals scoring every candidate") {
  Rng rng(5);
  for (int trial = 0; trial < 15; ++trial) {
    Instance in = random_instance(rng, 3 + trial % 4, 3 + trial % 3, 1 + trial % 4);
    in.config.pre_beam_size = in.vocab.size();
    const NBestList a = beam_search(in.x, in.vocab, in.scorers, in.config);
    ScorerSet all_full{in.scorers.full, {}};
    all_full.full.push_back(std::make_shared<PartialAsFull>(in.scorers.partial[0], in.vocab.blank_id()));
    const NBestList b = beam_search(in.x, in.vocab, all_full, in.config);
    check_same(a, b, 1e-9);
  }
}

TEST_CASE("exhaustive width is never beaten by a narrower beam") {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    Instance in = random_instance(rng, 2 + trial % 2, 3 + trial % 2, 1);
    in.config.max_len = 3;
    in.config.end_detect_window = 0;
    Scalar best_narrow = kNegInf;
    for (int b = 1; b <= 4; ++b) {
      in.config.beam_size = b;
      best_narrow = std::max(best_narrow, beam_search(in.x, in.vocab, in.scorers, in.config)[0].score);
    }
    in.config.beam_size = 256;
    CHECK(beam_search(in.x, in.vocab, in.scorers, in.config)[0].score >= best_narrow - 1e-12);
  }
}

TEST_CASE("length bounds are respected") {
  Rng rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    Instance in = random_instance(rng, 4, 8, 3);
    in.config.min_len_ratio = 0.25;
    in.config.max_len_ratio = 0.5;
    for (const auto& e : batch_beam_search(in.x, in.vocab, in.scorers, in.config)) {
      CHECK(e.yseq.size() >= 2);
      CHECK(e.yseq.size() <= 4);
    }
  }
  BeamConfig c;
  CHECK(length_bounds(c, 7).max_len == 7);
  c.max_len_ratio = 0.01;
  CHECK(length_bounds(c, 7).max_len == 1);
  c.max_len = 3;
  CHECK(length_bounds(c, 7).max_len == 3);
}

TEST_CASE("end detection") {
  const std::vector<Scalar> none;
  const std::vector<Scalar> steps{-20.0, -15.0, -12.0};
  CHECK_FALSE(end_detect(none, steps, 3, -10.0));
  const std::vector<Scalar> fin{-1.0};
  CHECK(end_detect(fin, steps, 3, -10.0));
  const std::vector<Scalar> rising{-5.0, -4.0, -3.0};
  CHECK_FALSE(end_detect(fin, rising, 3, -10.0));
  CHECK_FALSE(end_detect(fin, steps, 0, -10.0));
  CHECK_FALSE(end_detect(fin, std::vector<Scalar>{-20.0}, 3, -10.0));
}

TEST_CASE("configuration errors") {
  Rng rng(3);
  Instance in = random_instance(rng, 3, 4, 2);
  CHECK_THROWS_AS(beam_search(in.x, in.vocab, {}, in.config), ConfigError);
  BeamConfig bad = in.config;
  bad.weights["ghost"] = 1.0;
  CHECK_THROWS_AS(beam_search(in.x, in.vocab, in.scorers, bad), ConfigError);
  bad = in.config;
  bad.weights.erase("ctc");
  CHECK_THROWS_AS(beam_search(in.x, in.vocab, in.scorers, bad), ConfigError);
  bad = in.config;
  bad.pre_beam_size = 1;
  bad.beam_size = 2;
  CHECK_THROWS_AS(beam_search(in.x, in.vocab, in.scorers, bad), ConfigError);
  bad = in.config;
  bad.weights["att"] = 0.0;
  CHECK_THROWS_AS(beam_search(in.x, in.vocab, in.scorers, bad), ConfigError);
  bad = in.config;
  bad.beam_size = 0;
  CHECK_THROWS_AS(batch_beam_search(in.x, in.vocab, in.scorers, bad), ConfigError);
}

TEST_CASE("beam config JSON") {
  const BeamConfig c = parse_beam_config(
      R"({"beam_size": 6, "pre_beam_size": 9, "weights": {"att": 0.7, "ctc": 0.3},
          "max_len_ratio": 0.5, "min_len_ratio": 0.1, "end_detect": {"window": 4, "margin": -5}})");
  CHECK(c.beam_size == 6);
  CHECK(c.pre_beam_size == 9);
  CHECK(c.weights.at("ctc") == 0.3);
  CHECK(c.max_len_ratio == 0.5);
  CHECK(c.min_len_ratio == 0.1);
  CHECK(c.end_detect_window == 4);
  CHECK(c.end_detect_margin == -5.0);
  CHECK_FALSE(c.max_len.has_value());
  CHECK_THROWS_AS(parse_beam_config("[1]"), ConfigError);
  CHECK_THROWS_AS(parse_beam_config(R"({"beam_size": "x"})"), ConfigError);
  CHECK_THROWS_AS(parse_beam_config("{"), ConfigError);
}
