#pragma once

// Ingestion of external lexical data: frequency lists, embedding files,
// utterance corpora, lemma->form tables, pronunciation-count dictionaries.
// All tables are immutable after load and safe to share across readers.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "lexilearn/common.hpp"

namespace lexilearn {

// ---------------------------------------------------------------------------
// FrequencyTable: word -> corpus token count. Homograph frequencies are
// cumulated to a single entry; counts are 64-bit (the source corpus has
// 3.8e9 tokens, so 32-bit totals are not safe).

class FrequencyTable {
 public:
  void add(const std::string& word, std::uint64_t count) {
    auto [it, inserted] = entries_.try_emplace(word, count);
    if (!inserted) {
      if (it->second > UINT64_MAX - count) {
        throw DataError("frequency overflow for word '" + word + "'");
      }
      it->second += count;
    }
  }

  std::optional<std::uint64_t> get(std::string_view word) const {
    auto it = entries_.find(std::string(word));
    return it == entries_.end() ? std::nullopt
                                : std::optional<std::uint64_t>(it->second);
  }

  bool contains(std::string_view word) const {
    return entries_.count(std::string(word)) > 0;
  }

  std::size_t size() const { return entries_.size(); }

  const std::map<std::string, std::uint64_t>& entries() const {
    return entries_;
  }

  bool operator==(const FrequencyTable& other) const {
    return entries_ == other.entries_;
  }

 private:
  std::map<std::string, std::uint64_t> entries_;
};

// Each non-empty line is `word<TAB>count`, count >= 1. Duplicate words sum.
inline FrequencyTable load_frequency_list(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open frequency list: " + path.string());
  FrequencyTable table;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view sv = strip_cr(line);
    if (sv.empty()) continue;
    auto fail = [&](const std::string& why) -> void {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " +
                      why);
    };
    const std::size_t tab = sv.find('\t');
    if (tab == std::string_view::npos) fail("missing tab separator");
    const std::string_view word = sv.substr(0, tab);
    const std::string_view count_tok = sv.substr(tab + 1);
    if (word.empty()) fail("empty word");
    if (has_ascii_whitespace(word)) fail("word contains whitespace");
    std::uint64_t count = 0;
    if (!try_parse_u64(count_tok, count)) {
      fail("count is not a positive integer: '" + std::string(count_tok) +
           "'");
    }
    if (count == 0) fail("count must be >= 1");
    table.add(std::string(word), count);
  }
  if (in.bad()) throw DataError("read failure: " + path.string());
  return table;
}

// ---------------------------------------------------------------------------
// EmbeddingTable: word -> vector of `dim` reals. Text format: optional first
// line `N D`, then `word v1 ... vD` per line, whitespace separated.

class EmbeddingTable {
 public:
  std::size_t dim() const { return dim_; }
  std::size_t size() const { return entries_.size(); }
  std::uint64_t duplicate_count() const { return duplicates_; }

  const std::vector<double>* find(std::string_view word) const {
    auto it = entries_.find(std::string(word));
    return it == entries_.end() ? nullptr : &it->second;
  }

  const std::map<std::string, std::vector<double>>& entries() const {
    return entries_;
  }

  bool operator==(const EmbeddingTable& other) const {
    return dim_ == other.dim_ && entries_ == other.entries_;
  }

  // Last occurrence of a duplicated word wins; duplicates are tallied.
  void insert(const std::string& word, std::vector<double> vec) {
    if (dim_ == 0) {
      dim_ = vec.size();
    } else if (vec.size() != dim_) {
      throw DataError("inconsistent embedding dimension for word '" + word +
                      "': got " + std::to_string(vec.size()) + ", expected " +
                      std::to_string(dim_));
    }
    auto [it, inserted] = entries_.insert_or_assign(word, std::move(vec));
    (void)it;
    if (!inserted) ++duplicates_;
  }

 private:
  std::size_t dim_ = 0;
  std::map<std::string, std::vector<double>> entries_;
  std::uint64_t duplicates_ = 0;
};

inline EmbeddingTable load_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open embeddings: " + path.string());
  EmbeddingTable table;
  std::string line;
  std::size_t lineno = 0;
  std::size_t declared_dim = 0;
  bool first_content_line = true;
  while (std::getline(in, line)) {
    ++lineno;
    const auto toks = split_whitespace(strip_cr(line));
    if (toks.empty()) continue;
    if (first_content_line) {
      first_content_line = false;
      // A first line of exactly two integers is the `N D` header.
      std::uint64_t n = 0, d = 0;
      if (toks.size() == 2 && try_parse_u64(toks[0], n) &&
          try_parse_u64(toks[1], d)) {
        declared_dim = static_cast<std::size_t>(d);
        continue;
      }
    }
    const std::string word(toks[0]);
    if (toks.size() < 2) {
      throw DataError(path.string() + ":" + std::to_string(lineno) +
                      ": no vector components for word '" + word + "'");
    }
    std::vector<double> vec;
    vec.reserve(toks.size() - 1);
    for (std::size_t k = 1; k < toks.size(); ++k) {
      double v = 0;
      if (!try_parse_double(toks[k], v)) {
        throw DataError(path.string() + ":" + std::to_string(lineno) +
                        ": non-numeric component '" + std::string(toks[k]) +
                        "' for word '" + word + "'");
      }
      vec.push_back(v);
    }
    if (declared_dim != 0 && vec.size() != declared_dim) {
      throw DataError(path.string() + ":" + std::to_string(lineno) +
                      ": inconsistent embedding dimension for word '" + word +
                      "': got " + std::to_string(vec.size()) + ", expected " +
                      std::to_string(declared_dim));
    }
    try {
      table.insert(word, std::move(vec));
    } catch (const DataError& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " +
                      e.what());
    }
  }
  if (in.bad()) throw DataError("read failure: " + path.string());
  return table;
}

// 17 significant digits so reload reproduces every vector bit-exactly.
// Words are written in sorted order for byte-stable output.
inline void write_embeddings(const EmbeddingTable& table,
                             const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write embeddings: " + path.string());
  out << table.size() << " " << table.dim() << "\n";
  for (const auto& [word, vec] : table.entries()) {
    out << word;
    for (double v : vec) out << " " << format_double_17(v);
    out << "\n";
  }
  if (!out.flush()) throw DataError("write failure: " + path.string());
}

// ---------------------------------------------------------------------------
// UtteranceStream: one utterance per line, whitespace tokenized, empty lines
// skipped. With dedup on, each utterance yields its distinct words in first
// occurrence order.

class UtteranceStream {
 public:
  UtteranceStream(std::istream& in, bool dedup) : in_(in), dedup_(dedup) {}

  // False at end of stream. Throws DataError on stream failure.
  bool next(std::vector<std::string>& words) {
    std::string line;
    while (std::getline(in_, line)) {
      ++lineno_;
      const auto toks = split_whitespace(strip_cr(line));
      if (toks.empty()) continue;
      words.clear();
      if (dedup_) {
        std::unordered_set<std::string_view> seen;
        for (auto tok : toks) {
          if (seen.insert(tok).second) words.emplace_back(tok);
        }
      } else {
        for (auto tok : toks) words.emplace_back(tok);
      }
      return true;
    }
    if (in_.bad()) {
      throw DataError("corpus read failure at line " +
                      std::to_string(lineno_));
    }
    return false;
  }

  std::size_t line_number() const { return lineno_; }

 private:
  std::istream& in_;
  bool dedup_;
  std::size_t lineno_ = 0;
};

// ---------------------------------------------------------------------------
// LemmaFormTable: lemma -> set of distinct attested inflected forms.

class LemmaFormTable {
 public:
  void add(const std::string& lemma, const std::string& form) {
    entries_[lemma].insert(form);
  }

  // 0 when the lemma is unknown.
  std::size_t paradigm_size(std::string_view lemma) const {
    auto it = entries_.find(std::string(lemma));
    return it == entries_.end() ? 0 : it->second.size();
  }

  bool contains(std::string_view lemma) const {
    return entries_.count(std::string(lemma)) > 0;
  }

  std::size_t size() const { return entries_.size(); }

  const std::map<std::string, std::set<std::string>>& entries() const {
    return entries_;
  }

  bool operator==(const LemmaFormTable& other) const {
    return entries_ == other.entries_;
  }

 private:
  std::map<std::string, std::set<std::string>> entries_;
};

// Each line `lemma<TAB>form`; duplicate lines collapse (set semantics).
inline LemmaFormTable load_lemma_forms(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open lemma-form table: " + path.string());
  LemmaFormTable table;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view sv = strip_cr(line);
    if (sv.empty()) continue;
    const std::size_t tab = sv.find('\t');
    if (tab == std::string_view::npos || tab == 0 || tab + 1 == sv.size()) {
      throw DataError(path.string() + ":" + std::to_string(lineno) +
                      ": expected 'lemma<TAB>form'");
    }
    const std::string_view lemma = sv.substr(0, tab);
    const std::string_view form = sv.substr(tab + 1);
    if (has_ascii_whitespace(lemma) || has_ascii_whitespace(form)) {
      throw DataError(path.string() + ":" + std::to_string(lineno) +
                      ": lemma or form contains whitespace");
    }
    table.add(std::string(lemma), std::string(form));
  }
  if (in.bad()) throw DataError("read failure: " + path.string());
  return table;
}

// ---------------------------------------------------------------------------
// PronunciationDictionary: written form -> count of possible pronunciations.

class PronunciationDictionary {
 public:
  void add(const std::string& form, std::uint64_t count) {
    entries_[form] = count;
  }

  std::optional<std::uint64_t> get(std::string_view form) const {
    auto it = entries_.find(std::string(form));
    return it == entries_.end() ? std::nullopt
                                : std::optional<std::uint64_t>(it->second);
  }

  std::size_t size() const { return entries_.size(); }

  const std::map<std::string, std::uint64_t>& entries() const {
    return entries_;
  }

 private:
  std::map<std::string, std::uint64_t> entries_;
};

inline PronunciationDictionary load_pronunciation_dict(
    const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DataError("cannot open pronunciation dictionary: " + path.string());
  }
  PronunciationDictionary dict;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view sv = strip_cr(line);
    if (sv.empty()) continue;
    const std::size_t tab = sv.find('\t');
    if (tab == std::string_view::npos || tab == 0) {
      throw DataError(path.string() + ":" + std::to_string(lineno) +
                      ": expected 'form<TAB>pronunciation_count'");
    }
    std::uint64_t count = 0;
    if (!try_parse_u64(sv.substr(tab + 1), count) || count == 0) {
      throw DataError(path.string() + ":" + std::to_string(lineno) +
                      ": pronunciation count must be a positive integer");
    }
    dict.add(std::string(sv.substr(0, tab)), count);
  }
  if (in.bad()) throw DataError("read failure: " + path.string());
  return dict;
}

// Plain word list: one word per line, blank lines skipped.
inline std::vector<std::string> load_word_list(
    const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open word list: " + path.string());
  std::vector<std::string> words;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string_view sv = trim(strip_cr(line));
    if (sv.empty()) continue;
    if (has_ascii_whitespace(sv)) {
      throw DataError(path.string() + ":" + std::to_string(lineno) +
                      ": word contains whitespace");
    }
    words.emplace_back(sv);
  }
  if (in.bad()) throw DataError("read failure: " + path.string());
  return words;
}

}  // namespace lexilearn
