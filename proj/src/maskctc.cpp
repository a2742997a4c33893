#include "seqdec/maskctc.hpp"

#include "json_util.hpp"
#include "seqdec/logmath.hpp"

#include <cmath>
#include <numeric>

namespace seqdec {

TableMLM::TableMLM(int vocab_size, std::map<Pattern, std::map<int, Vector>> patterns)
    : vocab_(vocab_size), patterns_(std::move(patterns)) {
  if (vocab_ < 2) throw ConfigError("MLM vocab_size must be >= 2");
  for (const auto& [pattern, rows] : patterns_) {
    const std::string key = format_mlm_pattern(pattern);
    for (const auto& [pos, row] : rows) {
      if (pos < 0 || pos >= static_cast<int>(pattern.size()) || pattern[static_cast<size_t>(pos)])
        throw FormatError("pattern '" + key + "': position " + std::to_string(pos) + " is not a mask");
      if (row.size() != vocab_) throw FormatError("pattern '" + key + "': row has the wrong width");
      if (row.hasNaN() || std::abs(logsumexp(row)) > EmissionMatrix::kRowTolerance)
        throw FormatError("pattern '" + key + "', position " + std::to_string(pos) +
                          ": row is not normalized");
    }
  }
}

Matrix TableMLM::predict(const TokenSeq& tokens, TokenId mask_id) const {
  Pattern key;
  std::vector<int> masked;
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] == mask_id) {
      key.push_back(std::nullopt);
      masked.push_back(static_cast<int>(i));
    } else {
      key.push_back(tokens[i]);
    }
  }
  Matrix out = Matrix::Constant(static_cast<Eigen::Index>(masked.size()), vocab_,
                                -std::log(static_cast<Scalar>(vocab_)));
  auto it = patterns_.find(key);
  if (it == patterns_.end()) return out;
  for (size_t r = 0; r < masked.size(); ++r) {
    auto row = it->second.find(masked[r]);
    if (row != it->second.end()) out.row(static_cast<Eigen::Index>(r)) = row->second.transpose();
  }
  return out;
}

TableMLM::Pattern parse_mlm_pattern(const std::string& key) {
  TableMLM::Pattern out;
  if (key.empty()) return out;
  size_t start = 0;
  while (true) {
    const size_t comma = key.find(',', start);
    const std::string item = key.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    if (item == "_") {
      out.push_back(std::nullopt);
    } else {
      const TokenSeq id = detail::parse_id_list(item);
      if (id.size() != 1) throw FormatError("bad pattern key '" + key + "'");
      out.push_back(id.front());
    }
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string format_mlm_pattern(const TableMLM::Pattern& pattern) {
  std::string out;
  for (size_t i = 0; i < pattern.size(); ++i) {
    if (i) out += ',';
    out += pattern[i] ? std::to_string(*pattern[i]) : "_";
  }
  return out;
}

TableMLM load_table_mlm(const std::filesystem::path& path) {
  const auto doc = detail::read_json_file(path);
  try {
    const int v = doc.at("vocab_size").get<int>();
    std::map<TableMLM::Pattern, std::map<int, Vector>> patterns;
    for (const auto& [key, rows] : doc.at("patterns").items()) {
      std::map<int, Vector> by_pos;
      for (const auto& [pos, row] : rows.items()) {
        const TokenSeq p = detail::parse_id_list(pos);
        if (p.size() != 1) throw FormatError("pattern '" + key + "': bad position '" + pos + "'");
        by_pos[p.front()] = detail::vector_from_json(row, v, "pattern '" + key + "'");
      }
      patterns[parse_mlm_pattern(key)] = std::move(by_pos);
    }
    return TableMLM(v, std::move(patterns));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void save_table_mlm(const TableMLM& mlm, const std::filesystem::path& path) {
  nlohmann::json patterns = nlohmann::json::object();
  for (const auto& [pattern, rows] : mlm.patterns()) {
    nlohmann::json by_pos = nlohmann::json::object();
    for (const auto& [pos, row] : rows) by_pos[std::to_string(pos)] = detail::vector_to_json(row);
    patterns[format_mlm_pattern(pattern)] = std::move(by_pos);
  }
  detail::write_json_file({{"vocab_size", mlm.vocab_size()}, {"patterns", patterns}}, path);
}

ConfidentTokens ctc_confidence_collapse(const EmissionMatrix& x, TokenId blank) {
  ConfidentTokens out;
  TokenId prev = -1;
  for (int t = 0; t < x.frames(); ++t) {
    Eigen::Index best = 0;
    x.row(t).maxCoeff(&best);
    const auto tok = static_cast<TokenId>(best);
    const Scalar p = std::exp(x(t, tok));
    if (tok != blank) {
      if (tok == prev)
        out.confidences.back() = std::max(out.confidences.back(), p);
      else {
        out.tokens.push_back(tok);
        out.confidences.push_back(p);
      }
    }
    prev = tok;
  }
  return out;
}

MaskCtcResult mask_ctc_decode(const EmissionMatrix& x, const Vocabulary& vocab, const MLMScorer& mlm,
                              const MaskCtcConfig& config) {
  if (!vocab.mask_id()) throw ConfigError("Mask-CTC needs a mask token in the vocabulary");
  if (!(config.threshold >= 0.0 && config.threshold <= 1.0))
    throw ConfigError("threshold must lie in [0, 1]");
  if (config.iterations < 1) throw ConfigError("iterations must be >= 1");
  if (mlm.vocab_size() != vocab.size()) throw ConfigError("MLM vocabulary size differs");
  const TokenId mask = *vocab.mask_id();

  const ConfidentTokens ctc = ctc_confidence_collapse(x, vocab.blank_id());
  MaskCtcResult out;
  out.tokens = ctc.tokens;
  int remaining = 0;
  for (size_t i = 0; i < out.tokens.size(); ++i) {
    if (ctc.confidences[i] < config.threshold) {
      out.tokens[i] = mask;
      ++remaining;
    }
  }
  out.trace.masked.push_back(remaining);

  const std::vector<TokenId> fillers = vocab.label_ids();
  for (int iter = 0; iter < config.iterations && remaining > 0; ++iter) {
    const Matrix pred = mlm.predict(out.tokens, mask);
    ++out.trace.mlm_calls;
    std::vector<size_t> positions;
    for (size_t i = 0; i < out.tokens.size(); ++i)
      if (out.tokens[i] == mask) positions.push_back(i);
    if (pred.rows() != static_cast<Eigen::Index>(positions.size()))
      throw UsageError("MLM returned a row count different from the masked count");

    struct Choice {
      size_t pos;
      TokenId token;
      Scalar logp;
    };
    std::vector<Choice> choices;
    for (size_t r = 0; r < positions.size(); ++r) {
      Choice c{positions[r], -1, kNegInf};
      for (TokenId k : fillers) {
        const Scalar lp = pred(static_cast<Eigen::Index>(r), k);
        if (c.token < 0 || lp > c.logp) c = {positions[r], k, lp};
      }
      choices.push_back(c);
    }
    std::stable_sort(choices.begin(), choices.end(),
                     [](const Choice& a, const Choice& b) { return a.logp > b.logp; });
    const int fill = (remaining + (config.iterations - iter) - 1) / (config.iterations - iter);
    for (int i = 0; i < fill; ++i) out.tokens[choices[static_cast<size_t>(i)].pos] = choices[static_cast<size_t>(i)].token;
    remaining -= fill;
    out.trace.masked.push_back(remaining);
  }
  return out;
}

int mlm_call_count(const MaskCtcTrace& trace) { return trace.mlm_calls; }

}  // namespace seqdec
