#include "doctest.h"
#include "support.hpp"

#include "seqdec/ctc_tools.hpp"
#include "seqdec/maskctc.hpp"

#include <algorithm>

using namespace seqdec;
using seqdec::test::Rng;

namespace {

// blank, sos, eos, mask, then labels a b c d
Vocabulary mask_vocab() {
  return Vocabulary::from_names({"<b>", "<s>", "</s>", "<mask>", "a", "b", "c", "d"}, "<b>", "<s>", "</s>", "<mask>");
}

constexpr TokenId kMask = 3;

/// One frame per token, separated by blank frames. Each token frame puts
/// `conf` on the token; the rest is spread over the other entries.
EmissionMatrix spelled(const std::vector<std::pair<TokenId, double>>& tokens, int vocab) {
  Matrix m(static_cast<Eigen::Index>(2 * tokens.size()), vocab);
  for (size_t i = 0; i < tokens.size(); ++i) {
    const auto [tok, conf] = tokens[i];
    const auto r = static_cast<Eigen::Index>(2 * i);
    m.row(r).setConstant(std::log((1 - conf) / (vocab - 1)));
    m(r, tok) = std::log(conf);
    m.row(r + 1).setConstant(std::log(0.01 / (vocab - 1)));
    m(r + 1, 0) = std::log(0.99);
  }
  return EmissionMatrix(m);
}

Vector peaked(int vocab, TokenId at, double p) {
  Vector v = Vector::Constant(vocab, std::log((1 - p) / (vocab - 1)));
  v[at] = std::log(p);
  return v;
}

/// An MLM that knows the truth: for every mask pattern consistent with
/// `truth` it predicts the true token at each masked position.
TableMLM oracle_mlm(const TokenSeq& truth, int vocab, Rng& rng) {
  std::uniform_real_distribution<double> conf(0.6, 0.95);
  std::map<TableMLM::Pattern, std::map<int, Vector>> patterns;
  const size_t n = truth.size();
  for (unsigned bits = 1; bits < (1u << n); ++bits) {
    TableMLM::Pattern p(n);
    std::map<int, Vector> rows;
    for (size_t i = 0; i < n; ++i) {
      if (bits & (1u << i)) {
        rows.emplace(static_cast<int>(i), peaked(vocab, truth[i], conf(rng)));
      } else {
        p[i] = truth[i];
      }
    }
    patterns.emplace(std::move(p), std::move(rows));
  }
  return TableMLM(vocab, std::move(patterns));
}

/// Predicts the same peaked row at every masked position and counts calls.
class CountingMLM final : public MLMScorer {
 public:
  explicit CountingMLM(int vocab) : vocab_(vocab) {}
  int vocab_size() const override { return vocab_; }
  Matrix predict(const TokenSeq& tokens, TokenId mask_id) const override {
    ++calls;
    const auto masked = std::count(tokens.begin(), tokens.end(), mask_id);
    Matrix m(masked, vocab_);
    for (Eigen::Index r = 0; r < masked; ++r) m.row(r) = peaked(vocab_, 4 + static_cast<TokenId>(r % 4), 0.7).transpose();
    return m;
  }
  mutable int calls = 0;

 private:
  int vocab_;
};

}  // namespace

TEST_CASE("confidence collapse") {
  const EmissionMatrix x = test::emission_from_probs({{0.05, 0.9, 0.05}, {0.9, 0.05, 0.05}, {0.05, 0.9, 0.05}});
  const ConfidentTokens c = ctc_confidence_collapse(x, 0);
  CHECK(c.tokens == TokenSeq{1, 1});
  REQUIRE(c.confidences.size() == 2);
  CHECK(c.confidences[0] == doctest::Approx(0.9));
  CHECK(c.confidences[1] == doctest::Approx(0.9));
  CHECK(ctc_confidence_collapse(test::emission_from_probs({{0.9, 0.1}}), 0).tokens.empty());

  const EmissionMatrix rep = test::emission_from_probs({{0.1, 0.6, 0.3}, {0.1, 0.8, 0.1}});
  const ConfidentTokens r = ctc_confidence_collapse(rep, 0);
  CHECK(r.tokens == TokenSeq{1});
  CHECK(r.confidences[0] == doctest::Approx(0.8));

  Rng rng(60);
  for (int trial = 0; trial < 40; ++trial) {
    const EmissionMatrix e = test::random_emission(rng, 1 + trial % 5, 4);
    CHECK(ctc_confidence_collapse(e, 0).tokens == ctc_greedy(e, 0));
  }
}

TEST_CASE("threshold zero masks nothing and calls the MLM zero times") {
  const Vocabulary v = mask_vocab();
  const EmissionMatrix x = spelled({{4, 0.3}, {5, 0.4}, {6, 0.9}}, v.size());
  const CountingMLM mlm(v.size());
  const MaskCtcResult r = mask_ctc_decode(x, v, mlm, {.threshold = 0.0, .iterations = 3});
  CHECK(r.tokens == TokenSeq{4, 5, 6});
  CHECK(mlm_call_count(r.trace) == 0);
  CHECK(mlm.calls == 0);
  CHECK(r.trace.masked == std::vector<int>{0});
}

TEST_CASE("all masked with one iteration fills every position at once") {
  const Vocabulary v = mask_vocab();
  const EmissionMatrix x = spelled({{4, 0.3}, {4, 0.3}, {6, 0.3}}, v.size());
  std::map<TableMLM::Pattern, std::map<int, Vector>> patterns;
  patterns[{std::nullopt, std::nullopt, std::nullopt}] = {
      {0, peaked(v.size(), 7, 0.5)}, {1, peaked(v.size(), 5, 0.6)}, {2, peaked(v.size(), 4, 0.7)}};
  const TableMLM mlm(v.size(), patterns);
  const MaskCtcResult r = mask_ctc_decode(x, v, mlm, {.threshold = 0.5, .iterations = 1});
  CHECK(r.tokens == TokenSeq{7, 5, 4});
  CHECK(r.trace.mlm_calls == 1);
  CHECK(r.trace.masked == std::vector<int>{3, 0});
}

TEST_CASE("a truthful MLM repairs low-confidence tokens") {
  Rng rng(61);
  const Vocabulary v = mask_vocab();
  std::uniform_int_distribution<TokenId> lab(4, 7);
  std::uniform_real_distribution<double> low(0.3, 0.45), high(0.8, 0.95);
  std::bernoulli_distribution unsure(0.5);
  for (int trial = 0; trial < 30; ++trial) {
    const size_t n = 2 + static_cast<size_t>(trial % 4);
    TokenSeq truth(n);
    for (auto& t : truth) t = lab(rng);
    // Distinct neighbours keep the collapse length equal to n.
    for (size_t i = 1; i < n; ++i)
      while (truth[i] == truth[i - 1]) truth[i] = lab(rng);
    std::vector<std::pair<TokenId, double>> frames;
    for (TokenId t : truth) {
      if (unsure(rng)) {
        TokenId wrong = t == 7 ? 4 : t + 1;
        frames.emplace_back(wrong, low(rng));
      } else {
        frames.emplace_back(t, high(rng));
      }
    }
    const TableMLM mlm = oracle_mlm(truth, v.size(), rng);
    const MaskCtcResult r = mask_ctc_decode(spelled(frames, v.size()), v, mlm, {.threshold = 0.5, .iterations = 2});
    CHECK(r.tokens == truth);
    CHECK(r.trace.mlm_calls <= 2);
  }
}

TEST_CASE("MLM calls are bounded by K and do not grow with length") {
  const Vocabulary v = mask_vocab();
  std::vector<int> counts;
  for (int len : {2, 4, 8, 16}) {
    std::vector<std::pair<TokenId, double>> frames;
    for (int i = 0; i < len; ++i) frames.emplace_back(4 + i % 4, 0.3);
    const CountingMLM mlm(v.size());
    const MaskCtcResult r = mask_ctc_decode(spelled(frames, v.size()), v, mlm, {.threshold = 0.9, .iterations = 2});
    CHECK(mlm.calls == r.trace.mlm_calls);
    counts.push_back(r.trace.mlm_calls);
    for (size_t i = 1; i < r.trace.masked.size(); ++i) CHECK(r.trace.masked[i] < r.trace.masked[i - 1]);
    CHECK(r.trace.masked.back() == 0);
    CHECK(std::count(r.tokens.begin(), r.tokens.end(), kMask) == 0);
  }
  CHECK(counts == std::vector<int>{2, 2, 2, 2});

  Rng rng(62);
  for (int trial = 0; trial < 30; ++trial) {
    const EmissionMatrix x = test::random_emission(rng, 3 + trial % 12, v.size(), 2.0);
    const CountingMLM mlm(v.size());
    const MaskCtcResult r = mask_ctc_decode(x, v, mlm, {.threshold = 0.9, .iterations = 3});
    CHECK(mlm_call_count(r.trace) <= 3);
    CHECK(r.tokens.size() == ctc_greedy(x, 0).size());
  }
}

TEST_CASE("confident input is returned unchanged") {
  const Vocabulary v = mask_vocab();
  const EmissionMatrix x = spelled({{4, 0.95}, {6, 0.97}}, v.size());
  const CountingMLM mlm(v.size());
  const MaskCtcResult r = mask_ctc_decode(x, v, mlm, {.threshold = 0.9, .iterations = 4});
  CHECK(r.tokens == ctc_confidence_collapse(x, 0).tokens);
  CHECK(r.trace.mlm_calls == 0);
}

TEST_CASE("Mask-CTC configuration errors") {
  const Vocabulary v = mask_vocab();
  const EmissionMatrix x = spelled({{4, 0.5}}, v.size());
  const CountingMLM mlm(v.size());
  CHECK_THROWS_AS(mask_ctc_decode(x, v, mlm, {.threshold = 0.5, .iterations = 0}), ConfigError);
  CHECK_THROWS_AS(mask_ctc_decode(x, v, mlm, {.threshold = 1.5, .iterations = 1}), ConfigError);
  const Vocabulary plain = Vocabulary::with_labels({"a", "b", "c", "d", "e"});
  CHECK_THROWS_AS(mask_ctc_decode(x, plain, mlm, {}), ConfigError);
  const CountingMLM small(4);
  CHECK_THROWS_AS(mask_ctc_decode(x, v, small, {}), ConfigError);
}

TEST_CASE("table MLM patterns and JSON") {
  CHECK(parse_mlm_pattern("3,_,5") == TableMLM::Pattern{3, std::nullopt, 5});
  CHECK(format_mlm_pattern({std::nullopt, 4}) == "_,4");
  CHECK_THROWS_AS(parse_mlm_pattern("3,x"), FormatError);
  Rng rng(63);
  const TableMLM m = oracle_mlm({4, 5, 6}, 8, rng);
  test::TempDir dir("mlm");
  save_table_mlm(m, dir / "m.json");
  const TableMLM back = load_table_mlm(dir / "m.json");
  CHECK(back.vocab_size() == 8);
  REQUIRE(back.patterns().size() == m.patterns().size());
  for (const auto& [p, rows] : m.patterns()) {
    const auto& other = back.patterns().at(p);
    for (const auto& [pos, row] : rows) CHECK((other.at(pos) - row).cwiseAbs().maxCoeff() <= 1e-15);
  }
  const Matrix unseen = m.predict({kMask, 9, kMask}, kMask);
  CHECK(unseen.rows() == 2);
  CHECK(unseen(0, 0) == doctest::Approx(-std::log(8.0)));
  CHECK_THROWS_AS(TableMLM(8, {{{4, std::nullopt}, {{0, peaked(8, 4, 0.5)}}}}), FormatError);
}
