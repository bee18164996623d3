#pragma once

// The gold semantic matrix, Pearson correlation, and correlation-based
// nearest-neighbor lookup. Correlation (not cosine) is the similarity
// throughout; constant vectors raise UndefinedCorrelationError rather than
// silently contributing 0.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "lexilearn/common.hpp"
#include "lexilearn/io.hpp"

namespace lexilearn {

// Dense word-by-dimension matrix of gold embeddings, row-aligned with the
// paired FormMatrix.
struct SemanticMatrix {
  Eigen::MatrixXd values;
  std::vector<std::string> row_words;

  std::size_t rows() const { return static_cast<std::size_t>(values.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(values.cols()); }

  std::uint64_t content_hash() const {
    std::uint64_t h = kFnvOffset;
    for (const auto& w : row_words) h = fnv1a64(w, h);
    for (Eigen::Index i = 0; i < values.rows(); ++i) {
      for (Eigen::Index j = 0; j < values.cols(); ++j) {
        const double v = values(i, j);
        h = fnv1a64(&v, sizeof(v), h);
      }
    }
    return h;
  }
};

inline bool row_is_constant(const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  for (Eigen::Index j = 1; j < row.size(); ++j) {
    if (row[j] != row[0]) return false;
  }
  return true;
}

// Row i is emb[word i]. Missing words are reported all at once (a vocabulary
// mismatch is easier to fix when the full list is visible); constant rows are
// rejected because Pearson correlation is undefined for them.
inline SemanticMatrix build_semantic_matrix(
    const std::vector<std::string>& words, const EmbeddingTable& emb) {
  std::vector<std::string> missing;
  for (const auto& w : words) {
    if (!emb.find(w)) missing.push_back(w);
  }
  if (!missing.empty()) {
    std::string msg = "words missing from embeddings:";
    for (const auto& w : missing) msg += " " + w;
    throw DataError(msg);
  }
  SemanticMatrix s;
  s.row_words = words;
  s.values.resize(static_cast<Eigen::Index>(words.size()),
                  static_cast<Eigen::Index>(emb.dim()));
  for (std::size_t i = 0; i < words.size(); ++i) {
    const std::vector<double>& vec = *emb.find(words[i]);
    for (std::size_t j = 0; j < vec.size(); ++j) {
      s.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          vec[j];
    }
    if (row_is_constant(s.values.row(static_cast<Eigen::Index>(i)))) {
      throw DataError("constant embedding vector for word '" + words[i] +
                      "'");
    }
  }
  return s;
}

// Product-moment correlation, accumulated in extended precision. Result is
// clamped to [-1, 1] against roundoff.
inline double pearson(const Eigen::Ref<const Eigen::VectorXd>& a,
                      const Eigen::Ref<const Eigen::VectorXd>& b) {
  if (a.size() != b.size()) {
    throw DataError("pearson: length mismatch (" + std::to_string(a.size()) +
                    " vs " + std::to_string(b.size()) + ")");
  }
  if (a.size() < 2) throw DataError("pearson: need at least 2 components");
  const Eigen::Index n = a.size();
  long double ma = 0.0L, mb = 0.0L;
  for (Eigen::Index i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  long double saa = 0.0L, sbb = 0.0L, sab = 0.0L;
  for (Eigen::Index i = 0; i < n; ++i) {
    const long double da = a[i] - ma;
    const long double db = b[i] - mb;
    saa += da * da;
    sbb += db * db;
    sab += da * db;
  }
  if (saa == 0.0L || sbb == 0.0L) {
    throw UndefinedCorrelationError(
        "pearson correlation undefined for a constant vector");
  }
  const long double r = sab / std::sqrt(saa * sbb);
  return static_cast<double>(std::clamp(r, -1.0L, 1.0L));
}

// Exhaustive scan for the row maximizing pearson(query, row); ties break to
// the lowest row id.
struct NeighborResult {
  std::size_t row;
  double correlation;
};

inline NeighborResult nearest_by_correlation(
    const Eigen::Ref<const Eigen::VectorXd>& query, const SemanticMatrix& s) {
  if (static_cast<std::size_t>(query.size()) != s.dim()) {
    throw DataError("nearest_by_correlation: query length " +
                    std::to_string(query.size()) + " != matrix dim " +
                    std::to_string(s.dim()));
  }
  if (s.rows() == 0) throw DataError("nearest_by_correlation: empty matrix");
  NeighborResult best{0, -2.0};
  for (std::size_t i = 0; i < s.rows(); ++i) {
    const double r =
        pearson(query, s.values.row(static_cast<Eigen::Index>(i)).transpose());
    if (r > best.correlation) best = {i, r};
  }
  return best;
}

}  // namespace lexilearn
