#pragma once

#include "seqdec/types.hpp"

#include <algorithm>
#include <cmath>
#include <span>

namespace seqdec {

/// ln(exp(a) + exp(b)) without overflow. -inf is the additive identity.
template <typename T>
inline T log_add(T a, T b) {
  if (a < b) std::swap(a, b);
  if (b == neg_inf<T>()) return a;
  return a + std::log1p(std::exp(b - a));
}

/// Stable ln(sum(exp(v))) over an Eigen expression.
template <typename Derived>
typename Derived::Scalar logsumexp(const Eigen::DenseBase<Derived>& values) {
  using T = typename Derived::Scalar;
  if (values.size() == 0) throw UsageError("logsumexp of an empty list");
  const T peak = values.maxCoeff();
  if (peak == neg_inf<T>()) return peak;
  if (peak == std::numeric_limits<T>::infinity()) return peak;
  return peak + std::log((values.derived().array() - peak).exp().sum());
}

template <typename T>
T logsumexp(std::span<const T> values) {
  if (values.empty()) throw UsageError("logsumexp of an empty list");
  return logsumexp(Eigen::Map<const VectorT<T>>(values.data(), Eigen::Index(values.size())));
}

/// Weighted contribution of one scorer. A zero weight contributes nothing
/// even when the score is -inf.
template <typename T>
inline T weighted(T weight, T score) {
  return weight == T(0) ? T(0) : weight * score;
}

/// Equality for scores that may both be -inf.
template <typename T>
inline bool score_near(T a, T b, T tol) {
  if (a == b) return true;
  return std::abs(a - b) <= tol;
}

}  // namespace seqdec
