#include "seqdec/ngram.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

namespace seqdec {

NGramModel::NGramModel(int order, std::map<WordSeq, Entry> entries)
    : order_(order), entries_(std::move(entries)) {
  if (order_ < 1) throw ConfigError("n-gram order must be >= 1");
  for (const auto& [ngram, _] : entries_) {
    if (ngram.empty() || static_cast<int>(ngram.size()) > order_)
      throw ConfigError("n-gram length outside 1..order");
    if (ngram.size() == 1) vocab_.push_back(ngram.front());
  }
}

bool NGramModel::contains(const std::string& word) const { return entries_.count(WordSeq{word}) > 0; }

const NGramModel::Entry* NGramModel::find(const WordSeq& ngram) const {
  auto it = entries_.find(ngram);
  return it == entries_.end() ? nullptr : &it->second;
}

std::optional<std::string> NGramModel::resolve(const std::string& word) const {
  if (contains(word)) return word;
  if (contains("<unk>")) return std::string("<unk>");
  return std::nullopt;
}

namespace {

constexpr Scalar kLn10 = std::numbers::ln10_v<Scalar>;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void fail(const std::string& source, int line, const std::string& what) {
  throw FormatError(source + ":" + std::to_string(line) + ": " + what);
}

Scalar parse_log10(const std::string& tok, const std::string& source, int line) {
  try {
    size_t used = 0;
    const double v = std::stod(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v * kLn10;
  } catch (const std::exception&) {
    fail(source, line, "bad number '" + tok + "'");
  }
}

}  // namespace

NGramModel parse_arpa(std::istream& in, const std::string& source) {
  std::string raw;
  int line_no = 0;
  auto next_line = [&](std::string& out) {
    while (std::getline(in, raw)) {
      ++line_no;
      out = trim(raw);
      if (!out.empty()) return true;
    }
    return false;
  };

  std::string line;
  if (!next_line(line) || line != "\\data\\") fail(source, line_no, "missing \\data\\ header");

  std::map<int, long> counts;
  while (next_line(line) && line.rfind("ngram ", 0) == 0) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(source, line_no, "bad count line");
    try {
      const int n = std::stoi(line.substr(6, eq - 6));
      const long c = std::stol(line.substr(eq + 1));
      if (n < 1 || c < 0 || counts.count(n)) throw std::invalid_argument(line);
      counts[n] = c;
    } catch (const std::exception&) {
      fail(source, line_no, "bad count line '" + line + "'");
    }
  }
  if (counts.empty()) fail(source, line_no, "no ngram counts");
  const int order = counts.rbegin()->first;
  for (int n = 1; n <= order; ++n)
    if (!counts.count(n)) fail(source, line_no, "missing count for " + std::to_string(n) + "-grams");

  std::map<WordSeq, NGramModel::Entry> entries;
  std::map<int, long> seen;
  int section = 0;
  bool ended = false;
  // `line` holds the first line after the counts.
  do {
    if (line == "\\end\\") {
      ended = true;
      break;
    }
    if (line.front() == '\\') {
      int n = 0;
      if (std::sscanf(line.c_str(), "\\%d-grams:", &n) != 1 || !counts.count(n))
        fail(source, line_no, "unexpected section '" + line + "'");
      if (section && seen[section] != counts[section])
        fail(source, line_no, std::to_string(section) + "-gram count mismatch");
      section = n;
      seen[n] = 0;
      continue;
    }
    if (!section) fail(source, line_no, "n-gram line outside a section");
    std::istringstream fields(line);
    std::vector<std::string> toks;
    for (std::string tok; fields >> tok;) toks.push_back(tok);
    const size_t n = static_cast<size_t>(section);
    if (toks.size() != n + 1 && toks.size() != n + 2)
      fail(source, line_no, "expected " + std::to_string(section) + " words");
    NGramModel::Entry e{parse_log10(toks[0], source, line_no), 0.0};
    if (toks.size() == n + 2) e.backoff = parse_log10(toks.back(), source, line_no);
    WordSeq ngram(toks.begin() + 1, toks.begin() + 1 + static_cast<std::ptrdiff_t>(n));
    if (!entries.emplace(std::move(ngram), e).second) fail(source, line_no, "duplicate n-gram");
    ++seen[section];
  } while (next_line(line));

  if (!ended) fail(source, line_no, "missing \\end\\");
  if (section && seen[section] != counts[section])
    fail(source, line_no, std::to_string(section) + "-gram count mismatch");
  for (const auto& [n, c] : counts)
    if (seen[n] != c) fail(source, line_no, std::to_string(n) + "-gram count mismatch");
  return NGramModel(order, std::move(entries));
}

NGramModel load_arpa(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  return parse_arpa(in, path.string());
}

void save_arpa(const NGramModel& model, const std::filesystem::path& path) {
  std::map<int, std::vector<const std::pair<const WordSeq, NGramModel::Entry>*>> by_order;
  for (const auto& kv : model.entries()) by_order[static_cast<int>(kv.first.size())].push_back(&kv);
  std::ofstream out(path);
  out << std::setprecision(17) << "\\data\\\n";
  for (int n = 1; n <= model.order(); ++n) out << "ngram " << n << "=" << by_order[n].size() << "\n";
  for (int n = 1; n <= model.order(); ++n) {
    out << "\n\\" << n << "-grams:\n";
    for (const auto* kv : by_order[n]) {
      out << kv->second.logprob / kLn10;
      for (const auto& w : kv->first) out << ' ' << w;
      if (kv->second.backoff != 0.0) out << ' ' << kv->second.backoff / kLn10;
      out << '\n';
    }
  }
  out << "\n\\end\\\n";
  if (!out) throw FormatError("cannot write " + path.string());
}

Scalar ngram_score(const NGramModel& model, std::span<const std::string> context,
                   const std::string& word) {
  const auto w = model.resolve(word);
  if (!w) return kNegInf;
  const size_t keep = std::min(context.size(), static_cast<size_t>(model.order() - 1));
  WordSeq ctx;
  for (size_t i = context.size() - keep; i < context.size(); ++i)
    ctx.push_back(model.resolve(context[i]).value_or(context[i]));

  Scalar backoff = 0.0;
  for (size_t start = 0; start <= ctx.size(); ++start) {
    WordSeq ngram(ctx.begin() + static_cast<std::ptrdiff_t>(start), ctx.end());
    ngram.push_back(*w);
    if (const auto* e = model.find(ngram)) return backoff + e->logprob;
    ngram.pop_back();
    if (ngram.empty()) break;
    if (const auto* c = model.find(ngram)) backoff += c->backoff;
  }
  return kNegInf;
}

Scalar ngram_sentence_score(const NGramModel& model, std::span<const std::string> words) {
  WordSeq history{"<s>"};
  Scalar total = 0.0;
  for (const auto& w : words) {
    total += ngram_score(model, history, w);
    history.push_back(w);
  }
  return total + ngram_score(model, history, "</s>");
}

}  // namespace seqdec
