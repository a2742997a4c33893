#pragma once

#include "seqdec/types.hpp"

#include "json.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace seqdec::detail {

using nlohmann::json;

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

inline void write_json_file(const json& doc, const std::filesystem::path& path) {
  std::ofstream out(path);
  out << doc.dump(2) << '\n';
  if (!out) throw FormatError("cannot write " + path.string());
}

/// Log-prob entry; JSON null and the string "-inf" stand for -inf.
inline Scalar logprob_from_json(const json& x) {
  if (x.is_null() || (x.is_string() && x.get<std::string>() == "-inf")) return kNegInf;
  if (!x.is_number()) throw FormatError("expected a number, got " + x.dump());
  return x.get<Scalar>();
}

inline Vector vector_from_json(const json& arr, Eigen::Index expected, const std::string& where) {
  if (!arr.is_array() || static_cast<Eigen::Index>(arr.size()) != expected)
    throw FormatError(where + ": expected " + std::to_string(expected) + " log-probs");
  Vector v(expected);
  for (Eigen::Index i = 0; i < expected; ++i)
    v[i] = logprob_from_json(arr[static_cast<size_t>(i)]);
  return v;
}

inline json vector_to_json(const Eigen::Ref<const Vector>& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

/// "3,1,4" -> {3,1,4}; "" -> {}.
inline TokenSeq parse_id_list(const std::string& key) {
  TokenSeq out;
  if (key.empty()) return out;
  std::stringstream ss(key);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      size_t used = 0;
      out.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw FormatError("bad context key '" + key + "'");
    }
  }
  return out;
}

inline std::string format_id_list(const TokenSeq& ids) {
  std::string out;
  for (size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(ids[i]);
  }
  return out;
}

template <typename T>
T get_or(const json& obj, const char* key, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("field '") + key + "': " + e.what());
  }
}

}  // namespace seqdec::detail
