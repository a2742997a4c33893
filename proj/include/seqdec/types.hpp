#pragma once

#include <Eigen/Core>

#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace seqdec {

/// Scalar used for every score in the library. Scores are natural-log
/// probabilities; the impossible event is negative infinity.
using Scalar = double;

template <typename T>
using VectorT = Eigen::Matrix<T, Eigen::Dynamic, 1>;

template <typename T>
using MatrixT = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Vector = VectorT<Scalar>;
using Matrix = MatrixT<Scalar>;

using TokenId = int;
using TokenSeq = std::vector<TokenId>;

template <typename T = Scalar>
constexpr T neg_inf() {
  return -std::numeric_limits<T>::infinity();
}

inline constexpr Scalar kNegInf = neg_inf<Scalar>();

// Error taxonomy. The CLI maps these onto exit codes.

/// Caller violated an operation precondition.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Invalid search or model configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input file could not be parsed or failed validation.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The request has no solution, e.g. an alignment that cannot fit in T frames.
class InfeasibleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace seqdec
