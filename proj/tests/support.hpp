#pragma once

#include "seqdec/emission.hpp"
#include "seqdec/logmath.hpp"
#include "seqdec/table_scorer.hpp"
#include "seqdec/transducer.hpp"

#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>

namespace seqdec::test {

using Rng = std::mt19937_64;

/// Rows are log-softmax of uniform logits in [0, spread).
inline Matrix random_log_rows(Rng& rng, int rows, int cols, double spread = 3.0) {
  std::uniform_real_distribution<double> u(0.0, spread);
  Matrix m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) m(r, c) = u(rng);
    m.row(r).array() -= logsumexp(m.row(r));
  }
  return m;
}

inline EmissionMatrix random_emission(Rng& rng, int frames, int vocab, double spread = 3.0) {
  return EmissionMatrix(random_log_rows(rng, frames, vocab, spread));
}

/// Emission from linear-domain probabilities.
inline EmissionMatrix emission_from_probs(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index r = 0;
  for (const auto& row : rows) {
    Eigen::Index c = 0;
    for (double p : row) m(r, c++) = std::log(p);
    ++r;
  }
  return EmissionMatrix(m);
}

inline Vector log_vec(std::initializer_list<double> probs) {
  Vector v(static_cast<Eigen::Index>(probs.size()));
  Eigen::Index i = 0;
  for (double p : probs) v[i++] = std::log(p);
  return v;
}

/// k=0: one row. k=1: a row for every single-token context.
inline TableScorer random_table(Rng& rng, const std::string& name, int k, int vocab, double spread = 3.0) {
  std::map<TokenSeq, Vector> rows;
  if (k == 0) {
    rows.emplace(TokenSeq{}, random_log_rows(rng, 1, vocab, spread).row(0).transpose());
  } else {
    const Matrix m = random_log_rows(rng, vocab, vocab, spread);
    for (TokenId c = 0; c < vocab; ++c) rows.emplace(TokenSeq{c}, m.row(c).transpose());
  }
  return TableScorer(name, k, vocab, std::move(rows));
}

/// Context order 0 or 1 over `labels` labels and T frames.
inline TableTransducer random_transducer(Rng& rng, int k, int frames, int labels, double spread = 3.0) {
  std::map<TokenSeq, Matrix> rows;
  rows.emplace(TokenSeq{}, random_log_rows(rng, frames, labels + 1, spread));
  if (k >= 1)
    for (TokenId l = 0; l < labels; ++l) rows.emplace(TokenSeq{l}, random_log_rows(rng, frames, labels + 1, spread));
  return TableTransducer(k, frames, labels, std::move(rows));
}

/// Fresh scratch directory, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("seqdec_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace seqdec::test
