#pragma once

#include "support.hpp"

#include "seqdec/ngram.hpp"
#include "seqdec/scorer.hpp"
#include "seqdec/vocabulary.hpp"
#include "seqdec/word_lm.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

namespace seqdec::test {

/// Linear-domain Katz evaluator over a plain table.
struct BackoffTable {
  std::map<WordSeq, std::pair<double, double>> p;  // prob, backoff weight

  double prob(WordSeq ctx, const std::string& w) const {
    WordSeq key = ctx;
    key.push_back(w);
    if (auto it = p.find(key); it != p.end()) return it->second.first;
    if (ctx.empty()) return 0.0;
    double alpha = 1.0;
    if (auto it = p.find(ctx); it != p.end()) alpha = it->second.second;
    ctx.erase(ctx.begin());
    return alpha * prob(ctx, w);
  }
};

inline std::vector<double> random_simplex(Rng& rng, size_t n) {
  std::uniform_real_distribution<double> u(0.1, 1.0);
  std::vector<double> v(n);
  double s = 0;
  for (auto& x : v) s += (x = u(rng));
  for (auto& x : v) x /= s;
  return v;
}

/// Random normalized backoff model of the given order over `words`.
/// Backoff weights are solved so every context distribution sums to one.
inline BackoffTable random_backoff(Rng& rng, int order, const std::vector<std::string>& words) {
  BackoffTable t;
  std::vector<std::string> predicted = words;
  predicted.push_back("</s>");
  const auto uni = random_simplex(rng, predicted.size());
  for (size_t i = 0; i < predicted.size(); ++i) t.p[{predicted[i]}] = {uni[i], 1.0};
  t.p[{"<s>"}] = {0.0, 1.0};
  std::vector<std::string> history = words;
  history.push_back("<s>");
  std::bernoulli_distribution keep(0.5);
  std::vector<WordSeq> contexts;
  for (const auto& w : history) contexts.push_back({w});
  for (int n = 2; n <= order; ++n) {
    std::vector<WordSeq> next_contexts;
    for (const WordSeq& ctx : contexts) {
      std::vector<std::string> chosen;
      for (const auto& w : predicted)
        if (keep(rng)) chosen.push_back(w);
      if (chosen.size() == predicted.size()) chosen.pop_back();
      if (chosen.empty()) continue;
      // Explicit mass for the chosen words, leaving room for the rest.
      const auto share = random_simplex(rng, chosen.size() + 1);
      double explicit_mass = 0, lower_mass = 0;
      WordSeq shorter(ctx.begin() + 1, ctx.end());
      for (size_t i = 0; i < chosen.size(); ++i) {
        WordSeq key = ctx;
        key.push_back(chosen[i]);
        t.p[key] = {share[i], 1.0};
        explicit_mass += share[i];
        lower_mass += t.prob(shorter, chosen[i]);
        if (chosen[i] != "</s>" && n < order) next_contexts.push_back(key);
      }
      t.p[ctx].second = (1.0 - explicit_mass) / (1.0 - lower_mass);
    }
    contexts = std::move(next_contexts);
  }
  return t;
}

inline std::string to_arpa_text(const BackoffTable& t, int order) {
  std::map<int, std::vector<std::string>> lines;
  char buf[128];
  for (const auto& [k, v] : t.p) {
    std::string line;
    std::snprintf(buf, sizeof buf, "%.17g", v.first > 0 ? std::log10(v.first) : -99.0);
    line += buf;
    for (const auto& w : k) line += " " + w;
    if (v.second != 1.0) {
      std::snprintf(buf, sizeof buf, " %.17g", std::log10(v.second));
      line += buf;
    }
    lines[static_cast<int>(k.size())].push_back(line);
  }
  std::string out = "\\data\\\n";
  for (int n = 1; n <= order; ++n) out += "ngram " + std::to_string(n) + "=" + std::to_string(lines[n].size()) + "\n";
  for (int n = 1; n <= order; ++n) {
    out += "\n\\" + std::to_string(n) + "-grams:\n";
    for (const auto& l : lines[n]) out += l + "\n";
  }
  return out + "\n\\end\\\n";
}

inline Vocabulary char_vocab() { return Vocabulary::with_labels({"<space>", "a", "b", "c"}); }

/// Sum of scorer steps over `chars` followed by eos.
inline Scalar total_score(const FullScorer& s, const Vocabulary& v, const TokenSeq& chars) {
  const EmissionMatrix x(Matrix::Constant(1, v.size(), -std::log(static_cast<double>(v.size()))));
  TokenSeq prefix{v.sos_id()};
  ScorerState st = s.init_state(x);
  Scalar total = 0;
  for (TokenId c : chars) {
    const FullScore fs = s.score(prefix, st, x);
    total += fs.scores[c];
    st = s.select_state(fs.state, prefix, c);
    prefix.push_back(c);
  }
  return total + s.score(prefix, st, x).scores[v.eos_id()];
}

inline TokenSeq spell_sentence(const std::vector<std::string>& words, const Vocabulary& v) {
  TokenSeq out;
  for (size_t i = 0; i < words.size(); ++i) {
    if (i) out.push_back(*v.find("<space>"));
    const auto s = spell(words[i], v);
    out.insert(out.end(), s->begin(), s->end());
  }
  return out;
}

inline std::vector<std::string> random_lexicon(Rng& rng, int n) {
  std::set<std::string> words;
  std::uniform_int_distribution<int> len(1, 3), ch(0, 2);
  while (static_cast<int>(words.size()) < n) {
    std::string w;
    for (int i = len(rng); i > 0; --i) w += static_cast<char>('a' + ch(rng));
    words.insert(w);
  }
  return {words.begin(), words.end()};
}

}  // namespace seqdec::test
