#include "seqdec/emission.hpp"

#include "seqdec/logmath.hpp"

#include "json.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace seqdec {

static_assert(std::endian::native == std::endian::little,
              "raw-f32 emission I/O assumes a little-endian host");

namespace {

std::string frame_error(int t, const std::string& what) {
  return "frame " + std::to_string(t) + ": " + what;
}

}  // namespace

EmissionMatrix::EmissionMatrix(Matrix logprobs) : data_(std::move(logprobs)) {
  if (data_.rows() < 1) throw FormatError("emission needs at least one frame");
  if (data_.cols() < 2) throw FormatError("emission needs at least two symbols");
  for (int t = 0; t < frames(); ++t) {
    auto r = data_.row(t);
    if (r.hasNaN()) throw FormatError(frame_error(t, "NaN log-probability"));
    if ((r.array() == std::numeric_limits<Scalar>::infinity()).any())
      throw FormatError(frame_error(t, "+inf log-probability"));
    const Scalar dev = logsumexp(r);
    if (std::abs(dev) <= kRowTolerance) continue;
    if (!(std::abs(dev) <= kRenormTolerance))
      throw FormatError(frame_error(t, "row log-sum " + std::to_string(dev) +
                                           " exceeds normalization bound"));
    r.array() -= dev;
  }
}

EmissionFormat emission_format_for(const std::filesystem::path& path) {
  return path.extension() == ".json" ? EmissionFormat::Json : EmissionFormat::RawF32;
}

EmissionFormat parse_emission_format(std::string_view name) {
  if (name == "json") return EmissionFormat::Json;
  if (name == "raw-f32") return EmissionFormat::RawF32;
  throw ConfigError("unknown emission format '" + std::string(name) + "'");
}

namespace {

EmissionMatrix load_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  if (!doc.is_object() || !doc.contains("T") || !doc.contains("V") || !doc.contains("logprobs"))
    throw FormatError(path.string() + ": expected object with T, V, logprobs");
  if (!doc["T"].is_number_integer() || !doc["V"].is_number_integer())
    throw FormatError(path.string() + ": T and V must be integers");
  const auto t_count = doc["T"].get<std::int64_t>();
  const auto v_count = doc["V"].get<std::int64_t>();
  const auto& rows = doc["logprobs"];
  if (t_count < 1 || v_count < 2) throw FormatError(path.string() + ": need T >= 1 and V >= 2");
  if (!rows.is_array() || static_cast<std::int64_t>(rows.size()) != t_count)
    throw FormatError(path.string() + ": logprobs must hold T rows");
  Matrix m(t_count, v_count);
  for (std::int64_t t = 0; t < t_count; ++t) {
    const auto& row = rows[static_cast<size_t>(t)];
    if (!row.is_array() || static_cast<std::int64_t>(row.size()) != v_count)
      throw FormatError(frame_error(static_cast<int>(t), "row length differs from V"));
    for (std::int64_t v = 0; v < v_count; ++v) {
      const auto& x = row[static_cast<size_t>(v)];
      // JSON has no infinity; null (what the writer emits) and "-inf" both mean -inf.
      if (x.is_null() || (x.is_string() && x.get<std::string>() == "-inf"))
        m(t, v) = kNegInf;
      else if (x.is_number())
        m(t, v) = x.get<Scalar>();
      else
        throw FormatError(frame_error(static_cast<int>(t), "non-numeric entry"));
    }
  }
  return EmissionMatrix(std::move(m));
}

EmissionMatrix load_raw(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::array<char, 4> magic{};
  std::uint32_t header[2] = {0, 0};
  in.read(magic.data(), 4);
  in.read(reinterpret_cast<char*>(header), sizeof header);
  if (!in || std::memcmp(magic.data(), "EMIS", 4) != 0)
    throw FormatError(path.string() + ": malformed raw-f32 header");
  const std::uint64_t t_count = header[0], v_count = header[1];
  if (t_count < 1 || v_count < 2) throw FormatError(path.string() + ": need T >= 1 and V >= 2");
  std::vector<float> buf(t_count * v_count);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 4));
  if (in.gcount() != static_cast<std::streamsize>(buf.size() * 4))
    throw FormatError(path.string() + ": dimension mismatch, expected " +
                      std::to_string(t_count * v_count) + " floats");
  if (in.peek() != std::char_traits<char>::eof())
    throw FormatError(path.string() + ": trailing bytes after T*V floats");
  Matrix m = Eigen::Map<const MatrixT<float>>(buf.data(), Eigen::Index(t_count),
                                              Eigen::Index(v_count))
                 .cast<Scalar>();
  return EmissionMatrix(std::move(m));
}

}  // namespace

EmissionMatrix load_emission(const std::filesystem::path& path, EmissionFormat format) {
  return format == EmissionFormat::Json ? load_json(path) : load_raw(path);
}

void save_emission(const EmissionMatrix& emission, const std::filesystem::path& path,
                   EmissionFormat format) {
  if (format == EmissionFormat::Json) {
    nlohmann::json rows = nlohmann::json::array();
    for (int t = 0; t < emission.frames(); ++t) {
      nlohmann::json row = nlohmann::json::array();
      for (int v = 0; v < emission.vocab_size(); ++v) row.push_back(emission(t, v));
      rows.push_back(std::move(row));
    }
    nlohmann::json doc{{"T", emission.frames()}, {"V", emission.vocab_size()}, {"logprobs", rows}};
    std::ofstream out(path);
    out << doc.dump() << '\n';
    if (!out) throw FormatError("cannot write " + path.string());
    return;
  }
  std::ofstream out(path, std::ios::binary);
  const std::uint32_t header[2] = {static_cast<std::uint32_t>(emission.frames()),
                                   static_cast<std::uint32_t>(emission.vocab_size())};
  out.write("EMIS", 4);
  out.write(reinterpret_cast<const char*>(header), sizeof header);
  const MatrixT<float> f = emission.data().cast<float>();
  out.write(reinterpret_cast<const char*>(f.data()), static_cast<std::streamsize>(f.size() * 4));
  if (!out) throw FormatError("cannot write " + path.string());
}

}  // namespace seqdec
