#pragma once

#include "seqdec/types.hpp"

#include <filesystem>
#include <string_view>

namespace seqdec {

/// T x V per-frame log-posteriors. Every row is normalized to within
/// kRowTolerance in the log domain; construction enforces it.
class EmissionMatrix {
 public:
  static constexpr Scalar kRowTolerance = 1e-4;
  /// Rows off by more than kRowTolerance but at most this much are renormalized.
  static constexpr Scalar kRenormTolerance = 1e-3;

  /// Validates (and where allowed renormalizes) the rows of `logprobs`.
  explicit EmissionMatrix(Matrix logprobs);

  int frames() const { return static_cast<int>(data_.rows()); }
  int vocab_size() const { return static_cast<int>(data_.cols()); }

  Scalar operator()(int t, TokenId v) const { return data_(t, v); }
  auto row(int t) const { return data_.row(t); }
  auto col(TokenId v) const { return data_.col(v); }
  const Matrix& data() const { return data_; }

 private:
  Matrix data_;
};

enum class EmissionFormat { Json, RawF32 };

/// Picks the format from the file extension: ".json" is JSON, anything else raw-f32.
EmissionFormat emission_format_for(const std::filesystem::path& path);
EmissionFormat parse_emission_format(std::string_view name);

EmissionMatrix load_emission(const std::filesystem::path& path, EmissionFormat format);
void save_emission(const EmissionMatrix& emission, const std::filesystem::path& path,
                   EmissionFormat format);

}  // namespace seqdec
