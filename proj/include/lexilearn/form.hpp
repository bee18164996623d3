#pragma once

// Boundary-marked letter n-gram encoding of word forms and the sparse binary
// form matrix. N-grams are windows of Unicode scalar values, not bytes, so
// Estonian letters count as single characters.

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "lexilearn/common.hpp"

namespace lexilearn {

constexpr char32_t kBoundary = U'#';

// Overlapping n-grams of `#word#`, left to right, duplicates removed with
// the first occurrence kept. A one-letter word yields the single trigram
// `#a#`.
inline std::vector<std::string> extract_trigrams(std::string_view word,
                                                 std::size_t n = 3) {
  if (word.empty()) throw DataError("cannot extract n-grams of an empty word");
  if (has_ascii_whitespace(word)) {
    throw DataError("word '" + std::string(word) + "' contains whitespace");
  }
  if (n < 2) throw DataError("n-gram size must be >= 2");
  const auto cps = utf8_decode(word, "word '" + std::string(word) + "'");
  for (char32_t cp : cps) {
    if (cp == kBoundary) {
      throw DataError("word '" + std::string(word) +
                      "' contains the boundary symbol '#'");
    }
  }
  std::vector<char32_t> padded;
  padded.reserve(cps.size() + 2);
  padded.push_back(kBoundary);
  padded.insert(padded.end(), cps.begin(), cps.end());
  padded.push_back(kBoundary);
  if (padded.size() < n) {
    throw DataError("word '" + std::string(word) + "' is too short for " +
                    std::to_string(n) + "-grams");
  }
  std::vector<std::string> grams;
  std::unordered_set<std::string> seen;
  for (std::size_t i = 0; i + n <= padded.size(); ++i) {
    std::string g = utf8_encode(padded.data() + i, n);
    if (seen.insert(g).second) grams.push_back(std::move(g));
  }
  return grams;
}

// Ordered set of cues with stable integer column ids; order is first
// encounter over the input word list.
struct CueInventory {
  std::vector<std::string> cues;
  std::unordered_map<std::string, std::uint32_t> index;

  std::size_t size() const { return cues.size(); }

  std::uint32_t add(const std::string& cue) {
    auto it = index.find(cue);
    if (it != index.end()) return it->second;
    const auto id = static_cast<std::uint32_t>(cues.size());
    cues.push_back(cue);
    index.emplace(cue, id);
    return id;
  }

  const std::uint32_t* find(std::string_view cue) const {
    auto it = index.find(std::string(cue));
    return it == index.end() ? nullptr : &it->second;
  }
};

inline CueInventory build_cue_inventory(const std::vector<std::string>& words,
                                        std::size_t n = 3) {
  if (words.empty()) {
    throw DataError("cannot build a cue inventory from an empty word list");
  }
  CueInventory inv;
  for (const auto& word : words) {
    try {
      for (auto& g : extract_trigrams(word, n)) inv.add(g);
    } catch (const DataError& e) {
      throw DataError("cue inventory: " + std::string(e.what()));
    }
  }
  return inv;
}

// Sparse binary word-by-cue matrix. Cell (i, j) = 1 iff cue j occurs in
// word i; row order equals the input word-list order.
struct FormMatrix {
  std::size_t cols = 0;
  std::vector<std::string> row_words;
  // Sorted unique column ids per row.
  std::vector<std::vector<std::uint32_t>> row_cues;

  std::size_t rows() const { return row_words.size(); }

  Eigen::SparseMatrix<double, Eigen::RowMajor> to_sparse() const {
    Eigen::SparseMatrix<double, Eigen::RowMajor> m(
        static_cast<Eigen::Index>(rows()), static_cast<Eigen::Index>(cols));
    std::vector<Eigen::Triplet<double>> trips;
    for (std::size_t i = 0; i < row_cues.size(); ++i) {
      for (auto j : row_cues[i]) {
        trips.emplace_back(static_cast<int>(i), static_cast<int>(j), 1.0);
      }
    }
    m.setFromTriplets(trips.begin(), trips.end());
    return m;
  }

  Eigen::MatrixXd to_dense() const {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(
        static_cast<Eigen::Index>(rows()), static_cast<Eigen::Index>(cols));
    for (std::size_t i = 0; i < row_cues.size(); ++i) {
      for (auto j : row_cues[i]) m(static_cast<Eigen::Index>(i), j) = 1.0;
    }
    return m;
  }

  std::uint64_t content_hash() const {
    std::uint64_t h = kFnvOffset;
    h = fnv1a64(&cols, sizeof(cols), h);
    for (std::size_t i = 0; i < row_words.size(); ++i) {
      h = fnv1a64(row_words[i], h);
      h = fnv1a64(row_cues[i].data(),
                  row_cues[i].size() * sizeof(std::uint32_t), h);
    }
    return h;
  }

  bool operator==(const FormMatrix& other) const {
    return cols == other.cols && row_words == other.row_words &&
           row_cues == other.row_cues;
  }
};

inline FormMatrix build_form_matrix(const std::vector<std::string>& words,
                                    const CueInventory& inventory,
                                    std::size_t n = 3) {
  FormMatrix m;
  m.cols = inventory.size();
  m.row_words = words;
  m.row_cues.reserve(words.size());
  for (const auto& word : words) {
    std::vector<std::uint32_t> ids;
    for (auto& g : extract_trigrams(word, n)) {
      const std::uint32_t* id = inventory.find(g);
      if (!id) {
        throw DataError("word '" + word + "' has trigram '" + g +
                        "' missing from the cue inventory");
      }
      ids.push_back(*id);
    }
    std::sort(ids.begin(), ids.end());
    m.row_cues.push_back(std::move(ids));
  }
  return m;
}

// TSV dump: header of cue labels, one row per word of 0/1 cells.
inline void write_form_matrix_tsv(const FormMatrix& m,
                                  const CueInventory& inventory,
                                  const std::filesystem::path& path) {
  if (inventory.size() != m.cols) {
    throw DataError("form matrix dump: inventory size mismatch");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write form matrix: " + path.string());
  out << "word";
  for (const auto& cue : inventory.cues) out << "\t" << cue;
  out << "\n";
  for (std::size_t i = 0; i < m.rows(); ++i) {
    out << m.row_words[i];
    std::size_t k = 0;
    for (std::uint32_t j = 0; j < m.cols; ++j) {
      const bool on = k < m.row_cues[i].size() && m.row_cues[i][k] == j;
      if (on) ++k;
      out << "\t" << (on ? '1' : '0');
    }
    out << "\n";
  }
  if (!out.flush()) throw DataError("write failure: " + path.string());
}

// Reads the dump back into an inventory + matrix pair.
inline std::pair<CueInventory, FormMatrix> read_form_matrix_tsv(
    const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open form matrix: " + path.string());
  std::string line;
  if (!std::getline(in, line)) {
    throw DataError(path.string() + ": empty form matrix file");
  }
  CueInventory inv;
  {
    std::string_view sv = strip_cr(line);
    std::size_t start = sv.find('\t');
    if (sv.substr(0, start) != "word") {
      throw DataError(path.string() + ": header must start with 'word'");
    }
    while (start != std::string_view::npos) {
      const std::size_t next = sv.find('\t', start + 1);
      const std::string_view cue =
          sv.substr(start + 1, next == std::string_view::npos
                                   ? std::string_view::npos
                                   : next - start - 1);
      if (cue.empty()) throw DataError(path.string() + ": empty cue label");
      inv.add(std::string(cue));
      start = next;
    }
  }
  FormMatrix m;
  m.cols = inv.size();
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view sv = strip_cr(line);
    if (sv.empty()) continue;
    std::vector<std::string_view> cells;
    std::size_t pos = 0;
    while (true) {
      const std::size_t tab = sv.find('\t', pos);
      cells.push_back(sv.substr(
          pos, tab == std::string_view::npos ? std::string_view::npos
                                             : tab - pos));
      if (tab == std::string_view::npos) break;
      pos = tab + 1;
    }
    if (cells.size() != m.cols + 1) {
      throw DataError(path.string() + ":" + std::to_string(lineno) +
                      ": expected " + std::to_string(m.cols + 1) + " cells");
    }
    std::vector<std::uint32_t> ids;
    for (std::uint32_t j = 0; j < m.cols; ++j) {
      if (cells[j + 1] == "1") {
        ids.push_back(j);
      } else if (cells[j + 1] != "0") {
        throw DataError(path.string() + ":" + std::to_string(lineno) +
                        ": cell must be 0 or 1");
      }
    }
    m.row_words.emplace_back(cells[0]);
    m.row_cues.push_back(std::move(ids));
  }
  if (in.bad()) throw DataError("read failure: " + path.string());
  return {std::move(inv), std::move(m)};
}

}  // namespace lexilearn
