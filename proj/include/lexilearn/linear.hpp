#pragma once

// Linear form-to-meaning mappings: the endstate least-squares solve, the
// frequency-weighted solve (token frequencies as per-row weights), the
// incremental delta-rule trainer, and the symmetric production solve.
//
// Solver policy: normal equations via LDLT when well conditioned; on
// numerically singular normal equations with ridge = 0 the solve falls back
// to an SVD pseudo-inverse with singular-value cutoff
// max(rows, cols) * machine_eps * sigma_max, which yields the minimum-norm
// least-squares solution. The path taken is recorded in metadata.

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lexilearn/common.hpp"
#include "lexilearn/form.hpp"
#include "lexilearn/io.hpp"
#include "lexilearn/semantics.hpp"

namespace lexilearn {

enum class MapKind : std::uint8_t {
  endstate = 0,
  frequency_informed = 1,
  incremental = 2,
};

inline const char* to_string(MapKind kind) {
  switch (kind) {
    case MapKind::endstate: return "endstate";
    case MapKind::frequency_informed: return "frequency_informed";
    case MapKind::incremental: return "incremental";
  }
  return "unknown";
}

struct LinearMap {
  Eigen::MatrixXd weights;
  MapKind kind = MapKind::endstate;
  double ridge = 0.0;
  std::map<std::string, std::string> metadata;
};

namespace detail {

// Minimum-norm (Tikhonov-damped when ridge > 0) solution from a thin SVD of
// the weighted design matrix.
inline Eigen::MatrixXd svd_solve(const Eigen::MatrixXd& a,
                                 const Eigen::MatrixXd& b, double ridge) {
  Eigen::BDCSVD<Eigen::MatrixXd> svd(a,
                                     Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& sigma = svd.singularValues();
  const double cutoff = static_cast<double>(std::max(a.rows(), a.cols())) *
                        std::numeric_limits<double>::epsilon() *
                        (sigma.size() > 0 ? sigma[0] : 0.0);
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(sigma.size());
  for (Eigen::Index i = 0; i < sigma.size(); ++i) {
    if (sigma[i] > cutoff && sigma[i] > 0.0) {
      inv[i] = (ridge > 0.0) ? sigma[i] / (sigma[i] * sigma[i] + ridge)
                             : 1.0 / sigma[i];
    }
  }
  return svd.matrixV() * inv.asDiagonal() * (svd.matrixU().transpose() * b);
}

// LDLT on the normal equations; returns nullopt when the pivots reveal rank
// deficiency (or the factorization fails numerically).
inline std::optional<Eigen::MatrixXd> normal_equation_solve(
    const Eigen::MatrixXd& gram, const Eigen::MatrixXd& rhs) {
  Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
  if (ldlt.info() != Eigen::Success) return std::nullopt;
  const Eigen::VectorXd d = ldlt.vectorD();
  const double dmax = d.size() > 0 ? d.maxCoeff() : 0.0;
  const double tol = static_cast<double>(gram.rows()) *
                     std::numeric_limits<double>::epsilon() * dmax;
  if (dmax <= 0.0 || d.minCoeff() <= tol) return std::nullopt;
  return ldlt.solve(rhs);
}

struct WeightedSystem {
  Eigen::MatrixXd gram;       // A' W A + ridge I
  Eigen::MatrixXd rhs;        // A' W B
  std::function<Eigen::MatrixXd()> weighted_a;  // sqrt(W) A, built lazily
  Eigen::MatrixXd weighted_b;                   // sqrt(W) B
};

inline Eigen::MatrixXd solve_system(const WeightedSystem& sys, double ridge,
                                    std::string* solver_tag) {
  if (auto x = normal_equation_solve(sys.gram, sys.rhs)) {
    *solver_tag = "normal_equations_ldlt";
    return *x;
  }
  *solver_tag = "svd_pinv";
  return svd_solve(sys.weighted_a(), sys.weighted_b, ridge);
}

inline void check_paired_shapes(const FormMatrix& c, const SemanticMatrix& s) {
  if (c.rows() == 0) throw DataError("form matrix has no rows");
  if (c.rows() != s.rows()) {
    throw DataError("row count mismatch: form matrix has " +
                    std::to_string(c.rows()) + " rows, semantic matrix has " +
                    std::to_string(s.rows()));
  }
}

inline Eigen::VectorXd frequency_weights(const std::vector<std::string>& words,
                                         const FrequencyTable& freq) {
  Eigen::VectorXd w(static_cast<Eigen::Index>(words.size()));
  std::vector<std::string> missing;
  for (std::size_t i = 0; i < words.size(); ++i) {
    const auto f = freq.get(words[i]);
    if (!f || *f == 0) {
      missing.push_back(words[i]);
      continue;
    }
    w[static_cast<Eigen::Index>(i)] = static_cast<double>(*f);
  }
  if (!missing.empty()) {
    std::string msg = "words without frequency:";
    for (const auto& m : missing) msg += " " + m;
    throw DataError(msg);
  }
  return w;
}

inline LinearMap solve_form_to_meaning(const FormMatrix& c,
                                       const SemanticMatrix& s,
                                       const Eigen::VectorXd* weights,
                                       double ridge, MapKind kind) {
  check_paired_shapes(c, s);
  if (ridge < 0.0) throw DataError("ridge must be non-negative");
  const Eigen::SparseMatrix<double, Eigen::RowMajor> csp = c.to_sparse();

  WeightedSystem sys;
  if (weights) {
    const Eigen::VectorXd sqrt_w = weights->cwiseSqrt();
    const auto wc = (weights->asDiagonal() * csp).eval();
    sys.gram = Eigen::MatrixXd(csp.transpose() * wc);
    sys.rhs = csp.transpose() * (weights->asDiagonal() * s.values);
    sys.weighted_b = sqrt_w.asDiagonal() * s.values;
    sys.weighted_a = [&c, sqrt_w]() -> Eigen::MatrixXd {
      return sqrt_w.asDiagonal() * c.to_dense();
    };
  } else {
    sys.gram = Eigen::MatrixXd(csp.transpose() * csp);
    sys.rhs = csp.transpose() * s.values;
    sys.weighted_b = s.values;
    sys.weighted_a = [&c]() -> Eigen::MatrixXd { return c.to_dense(); };
  }
  if (ridge > 0.0) {
    sys.gram.diagonal().array() += ridge;
  }

  LinearMap map;
  map.kind = kind;
  map.ridge = ridge;
  std::string solver;
  map.weights = detail::solve_system(sys, ridge, &solver);
  if (!map.weights.allFinite()) {
    throw DataError("linear solve produced non-finite weights");
  }
  map.metadata["solver"] = solver;
  map.metadata["ridge"] = format_double(ridge);
  map.metadata["c_hash"] = hash_hex(c.content_hash());
  map.metadata["s_hash"] = hash_hex(s.content_hash());
  return map;
}

}  // namespace detail

// F minimizing ||CF - S||^2 + ridge ||F||^2; with ridge = 0 on a
// rank-deficient system, the minimum-norm least-squares solution.
inline LinearMap solve_endstate(const FormMatrix& c, const SemanticMatrix& s,
                                double ridge = 0.0) {
  return detail::solve_form_to_meaning(c, s, nullptr, ridge,
                                       MapKind::endstate);
}

// Frequency-informed learning: weighted least squares with each row's squared
// error weighted by its raw corpus token frequency. Raw counts (not
// probabilities) are fine: scaling all frequencies by a positive constant
// leaves the minimizer unchanged.
inline LinearMap solve_fil(const FormMatrix& c, const SemanticMatrix& s,
                           const FrequencyTable& freq, double ridge = 0.0) {
  detail::check_paired_shapes(c, s);
  const Eigen::VectorXd w = detail::frequency_weights(c.row_words, freq);
  LinearMap map = detail::solve_form_to_meaning(
      c, s, &w, ridge, MapKind::frequency_informed);
  return map;
}

// Order-sensitive delta-rule training from all-zero weights:
//   F <- F + rate * c_i' (s_i - c_i F)
// applied once per scheduled token. Strictly sequential; deterministic given
// the schedule.
inline LinearMap train_widrow_hoff(const FormMatrix& c,
                                   const SemanticMatrix& s,
                                   const std::vector<std::size_t>& schedule,
                                   double rate) {
  detail::check_paired_shapes(c, s);
  if (!(rate > 0.0)) throw DataError("learning rate must be positive");
  LinearMap map;
  map.kind = MapKind::incremental;
  map.weights = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(c.cols),
                                      static_cast<Eigen::Index>(s.dim()));
  Eigen::RowVectorXd error(static_cast<Eigen::Index>(s.dim()));
  for (std::size_t t = 0; t < schedule.size(); ++t) {
    const std::size_t row = schedule[t];
    if (row >= c.rows()) {
      throw DataError("schedule token " + std::to_string(t) +
                      " names invalid row " + std::to_string(row));
    }
    error = s.values.row(static_cast<Eigen::Index>(row));
    for (std::uint32_t j : c.row_cues[row]) {
      error -= map.weights.row(j);
    }
    bool finite = true;
    for (std::uint32_t j : c.row_cues[row]) {
      map.weights.row(j) += rate * error;
      finite = finite && map.weights.row(j).allFinite();
    }
    if (!finite) {
      throw DivergenceError("widrow-hoff diverged at token " +
                            std::to_string(t));
    }
  }
  map.metadata["rate"] = format_double(rate);
  map.metadata["tokens"] = std::to_string(schedule.size());
  map.metadata["c_hash"] = hash_hex(c.content_hash());
  map.metadata["s_hash"] = hash_hex(s.content_hash());
  return map;
}

// S_hat = C F, rows aligned with C rows.
inline Eigen::MatrixXd predict_semantics(const FormMatrix& c,
                                         const LinearMap& f) {
  if (static_cast<std::size_t>(f.weights.rows()) != c.cols) {
    throw DataError("shape mismatch: form matrix has " +
                    std::to_string(c.cols) + " cues, map expects " +
                    std::to_string(f.weights.rows()));
  }
  return c.to_sparse() * f.weights;
}

// Mirror of solve_endstate with the roles of C and S exchanged: G minimizing
// ||SG - C||^2 + ridge ||G||^2. Production decoding from C_hat is out of
// scope; the solve exists for symmetry.
inline LinearMap solve_production(const FormMatrix& c, const SemanticMatrix& s,
                                  double ridge = 0.0) {
  detail::check_paired_shapes(c, s);
  if (ridge < 0.0) throw DataError("ridge must be non-negative");
  const Eigen::MatrixXd& a = s.values;
  detail::WeightedSystem sys;
  sys.gram = a.transpose() * a;
  if (ridge > 0.0) sys.gram.diagonal().array() += ridge;
  const Eigen::MatrixXd b = c.to_dense();
  sys.rhs = a.transpose() * b;
  sys.weighted_b = b;
  sys.weighted_a = [&a]() -> Eigen::MatrixXd { return a; };

  LinearMap map;
  map.kind = MapKind::endstate;
  map.ridge = ridge;
  std::string solver;
  map.weights = detail::solve_system(sys, ridge, &solver);
  if (!map.weights.allFinite()) {
    throw DataError("linear solve produced non-finite weights");
  }
  map.metadata["solver"] = solver;
  map.metadata["direction"] = "meaning_to_form";
  map.metadata["c_hash"] = hash_hex(c.content_hash());
  map.metadata["s_hash"] = hash_hex(s.content_hash());
  return map;
}

// ---------------------------------------------------------------------------
// Checkpoint: binary dump of shape, kind, ridge, and row-major weights with a
// trailing content checksum. Reload is bit-exact.

namespace detail {

inline void put_bytes(std::string& out, const void* p, std::size_t n) {
  out.append(static_cast<const char*>(p), n);
}

template <typename T>
inline T take(const std::string& buf, std::size_t& off,
              const std::string& what) {
  if (off + sizeof(T) > buf.size()) {
    throw DataError("truncated checkpoint while reading " + what);
  }
  T v;
  std::memcpy(&v, buf.data() + off, sizeof(T));
  off += sizeof(T);
  return v;
}

}  // namespace detail

constexpr char kLinearMagic[4] = {'L', 'X', 'L', 'M'};

inline void save_linear_map(const LinearMap& map,
                            const std::filesystem::path& path) {
  std::string buf;
  detail::put_bytes(buf, kLinearMagic, 4);
  const std::uint32_t version = 1;
  detail::put_bytes(buf, &version, sizeof(version));
  const std::uint8_t kind = static_cast<std::uint8_t>(map.kind);
  detail::put_bytes(buf, &kind, sizeof(kind));
  detail::put_bytes(buf, &map.ridge, sizeof(map.ridge));
  const std::uint64_t rows = static_cast<std::uint64_t>(map.weights.rows());
  const std::uint64_t cols = static_cast<std::uint64_t>(map.weights.cols());
  detail::put_bytes(buf, &rows, sizeof(rows));
  detail::put_bytes(buf, &cols, sizeof(cols));
  for (std::uint64_t i = 0; i < rows; ++i) {
    for (std::uint64_t j = 0; j < cols; ++j) {
      const double v = map.weights(static_cast<Eigen::Index>(i),
                                   static_cast<Eigen::Index>(j));
      detail::put_bytes(buf, &v, sizeof(v));
    }
  }
  const std::uint64_t checksum = fnv1a64(buf.data(), buf.size());
  detail::put_bytes(buf, &checksum, sizeof(checksum));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint: " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out.flush()) throw DataError("write failure: " + path.string());
}

inline LinearMap load_linear_map(const std::filesystem::path& path) {
  const std::string buf = read_file_bytes(path);
  if (buf.size() < 4 + sizeof(std::uint64_t) ||
      std::memcmp(buf.data(), kLinearMagic, 4) != 0) {
    throw DataError("not a linear map checkpoint: " + path.string());
  }
  const std::uint64_t stored_sum =
      fnv1a64(buf.data(), buf.size() - sizeof(std::uint64_t));
  std::uint64_t file_sum;
  std::memcpy(&file_sum, buf.data() + buf.size() - sizeof(std::uint64_t),
              sizeof(file_sum));
  if (stored_sum != file_sum) {
    throw DataError("corrupt checkpoint (checksum mismatch): " +
                    path.string());
  }
  std::size_t off = 4;
  const auto version = detail::take<std::uint32_t>(buf, off, "version");
  if (version != 1) {
    throw DataError("unsupported checkpoint version " +
                    std::to_string(version));
  }
  LinearMap map;
  const auto kind = detail::take<std::uint8_t>(buf, off, "kind");
  if (kind > 2) throw DataError("invalid map kind in checkpoint");
  map.kind = static_cast<MapKind>(kind);
  map.ridge = detail::take<double>(buf, off, "ridge");
  const auto rows = detail::take<std::uint64_t>(buf, off, "rows");
  const auto cols = detail::take<std::uint64_t>(buf, off, "cols");
  const std::size_t need = static_cast<std::size_t>(rows) * cols;
  if (buf.size() - off - sizeof(std::uint64_t) != need * sizeof(double)) {
    throw DataError("checkpoint payload size mismatch: " + path.string());
  }
  map.weights.resize(static_cast<Eigen::Index>(rows),
                     static_cast<Eigen::Index>(cols));
  for (std::uint64_t i = 0; i < rows; ++i) {
    for (std::uint64_t j = 0; j < cols; ++j) {
      map.weights(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          detail::take<double>(buf, off, "weights");
    }
  }
  return map;
}

}  // namespace lexilearn
