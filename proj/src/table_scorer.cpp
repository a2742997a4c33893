#include "seqdec/table_scorer.hpp"

#include "json_util.hpp"
#include "seqdec/logmath.hpp"

namespace seqdec {

namespace {

void check_row(const Vector& row, int vocab, const std::string& where) {
  if (row.size() != vocab) throw FormatError(where + ": row length differs from vocab_size");
  if (row.hasNaN()) throw FormatError(where + ": NaN log-probability");
  if (std::abs(logsumexp(row)) > EmissionMatrix::kRowTolerance)
    throw FormatError(where + ": row is not normalized");
}

}  // namespace

TableScorer::TableScorer(std::string name, int context_order, int vocab_size,
                         std::map<TokenSeq, Vector> rows, std::optional<Vector> fallback)
    : FullScorer(std::move(name)), order_(context_order), vocab_(vocab_size), rows_(std::move(rows)) {
  if (order_ < 0) throw ConfigError("context_order must be >= 0");
  if (vocab_ < 2) throw ConfigError("vocab_size must be >= 2");
  fallback_ = fallback ? std::move(*fallback)
                       : Vector::Constant(vocab_, -std::log(static_cast<Scalar>(vocab_)));
  check_row(fallback_, vocab_, "fallback");
  for (const auto& [ctx, row] : rows_) {
    if (static_cast<int>(ctx.size()) > order_)
      throw FormatError("context '" + detail::format_id_list(ctx) + "' longer than context_order");
    check_row(row, vocab_, "context '" + detail::format_id_list(ctx) + "'");
  }
}

const Vector& TableScorer::row_for(const TokenSeq& context) const {
  auto it = rows_.find(context);
  return it == rows_.end() ? fallback_ : it->second;
}

TokenSeq TableScorer::context_of(PrefixView prefix) const {
  const size_t k = std::min(prefix.size(), static_cast<size_t>(order_));
  return TokenSeq(prefix.end() - static_cast<std::ptrdiff_t>(k), prefix.end());
}

ScorerState TableScorer::init_state(const EmissionMatrix&) const {
  return ScorerState::make(TokenSeq{});
}

FullScore TableScorer::score(PrefixView prefix, const ScorerState& state,
                             const EmissionMatrix&) const {
  return {row_for(context_of(prefix)), state};
}

ScorerState TableScorer::select_state(const ScorerState&, PrefixView prefix, TokenId token) const {
  TokenSeq extended(prefix.begin(), prefix.end());
  extended.push_back(token);
  return ScorerState::make(context_of(extended));
}

Matrix TableScorer::batch_score(std::span<const PrefixView> prefixes,
                                std::span<const ScorerState> states, const EmissionMatrix&,
                                std::vector<ScorerState>& scored) const {
  Matrix out(static_cast<Eigen::Index>(prefixes.size()), vocab_);
  for (size_t i = 0; i < prefixes.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = row_for(context_of(prefixes[i])).transpose();
  scored.assign(states.begin(), states.end());
  return out;
}

TableScorer load_table_scorer(const std::filesystem::path& path, std::string name) {
  const auto doc = detail::read_json_file(path);
  try {
    const int k = doc.at("context_order").get<int>();
    const int v = doc.at("vocab_size").get<int>();
    std::map<TokenSeq, Vector> rows;
    for (const auto& [key, row] : doc.at("rows").items())
      rows.emplace(detail::parse_id_list(key), detail::vector_from_json(row, v, "context '" + key + "'"));
    std::optional<Vector> fallback;
    if (doc.contains("fallback")) fallback = detail::vector_from_json(doc["fallback"], v, "fallback");
    return TableScorer(std::move(name), k, v, std::move(rows), std::move(fallback));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void save_table_scorer(const TableScorer& scorer, const std::filesystem::path& path) {
  nlohmann::json rows = nlohmann::json::object();
  for (const auto& [ctx, row] : scorer.rows()) rows[detail::format_id_list(ctx)] = detail::vector_to_json(row);
  nlohmann::json doc{{"context_order", scorer.context_order()},
                     {"vocab_size", scorer.vocab_size()},
                     {"rows", rows},
                     {"fallback", detail::vector_to_json(scorer.fallback())}};
  detail::write_json_file(doc, path);
}

}  // namespace seqdec
