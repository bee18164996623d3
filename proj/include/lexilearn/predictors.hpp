#pragma once

// Classical per-word predictors and their transforms: Coltheart N over a
// configured lexicon, inflectional paradigm size, log/sqrt transforms, the
// binary pronunciation-entropy flag, and the manner class of the first
// segment. Characters are Unicode scalar values throughout.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "lexilearn/common.hpp"
#include "lexilearn/io.hpp"

namespace lexilearn {

// Running tallies for declared-default fallbacks (absent dictionary entries,
// unmapped manner characters, ...). Surfaced in the pipeline diagnostics
// report instead of being silently swallowed.
struct Diagnostics {
  std::map<std::string, std::uint64_t> counters;
  std::map<std::string, std::vector<std::string>> words;

  void tally(const std::string& what, const std::string& word) {
    ++counters[what];
    words[what].push_back(word);
  }

  std::uint64_t count(std::string_view what) const {
    auto it = counters.find(std::string(what));
    return it == counters.end() ? 0 : it->second;
  }
};

// ---------------------------------------------------------------------------
// Coltheart N: number of lexicon words of identical length differing in
// exactly one character position. The word itself never counts.

class NeighborLexicon {
 public:
  explicit NeighborLexicon(const std::vector<std::string>& words) {
    for (const auto& w : words) {
      auto cps = utf8_decode(w, "lexicon word '" + w + "'");
      if (cps.empty()) continue;
      buckets_[cps.size()].push_back(std::move(cps));
    }
  }

  std::size_t ncount(std::string_view word) const {
    if (word.empty()) throw DataError("ncount: empty word");
    const auto cps = utf8_decode(word, "word '" + std::string(word) + "'");
    auto it = buckets_.find(cps.size());
    if (it == buckets_.end()) return 0;
    std::size_t n = 0;
    for (const auto& cand : it->second) {
      std::size_t diffs = 0;
      for (std::size_t i = 0; i < cps.size() && diffs < 2; ++i) {
        if (cps[i] != cand[i]) ++diffs;
      }
      if (diffs == 1) ++n;
    }
    return n;
  }

 private:
  std::unordered_map<std::size_t, std::vector<std::vector<char32_t>>> buckets_;
};

inline std::size_t ncount(std::string_view word,
                          const std::vector<std::string>& lexicon) {
  return NeighborLexicon(lexicon).ncount(word);
}

// ---------------------------------------------------------------------------
// Paradigm size: count of distinct attested forms; 0 for unknown lemmas.

inline std::size_t paradigm_size(std::string_view lemma,
                                 const LemmaFormTable& table) {
  return table.paradigm_size(lemma);
}

// ---------------------------------------------------------------------------
// Transforms: ln(freq), sqrt(paradigm), ln(ncount + 1). The +1 offset exists
// because zero-neighbor words occur; frequency has no offset, so freq < 1 is
// an error that forces an explicit caller choice.

struct TransformedPredictors {
  double log_frequency;
  double paradigm_size_sqrt;
  double ncount_log;
};

inline TransformedPredictors transform_predictors(std::uint64_t freq,
                                                  std::size_t paradigm,
                                                  std::size_t neighbor_count) {
  if (freq < 1) throw DataError("frequency must be >= 1 for log transform");
  return {std::log(static_cast<double>(freq)),
          std::sqrt(static_cast<double>(paradigm)),
          std::log(static_cast<double>(neighbor_count) + 1.0)};
}

// ---------------------------------------------------------------------------
// Entropy flag: 0 for a single possible pronunciation, 1 for multiple.
// Words absent from the dictionary default to 0 with a diagnostics tally.

inline int entropy_flag(const std::string& word,
                        const PronunciationDictionary& dict,
                        Diagnostics* diag = nullptr) {
  const auto count = dict.get(word);
  if (!count) {
    if (diag) diag->tally("word_not_in_pronunciation_dict", word);
    return 0;
  }
  return *count >= 2 ? 1 : 0;
}

// ---------------------------------------------------------------------------
// Manner of articulation of the first segment, looked up in a configured
// character table (the letter-to-manner assignment is data, not built-in
// phonology).

enum class MannerClass : std::uint8_t {
  approximant,
  fricative,
  nasal,
  plosive,
  trill,
  vowel,
  unknown,
};

inline const char* to_string(MannerClass m) {
  switch (m) {
    case MannerClass::approximant: return "approximant";
    case MannerClass::fricative: return "fricative";
    case MannerClass::nasal: return "nasal";
    case MannerClass::plosive: return "plosive";
    case MannerClass::trill: return "trill";
    case MannerClass::vowel: return "vowel";
    case MannerClass::unknown: return "unknown";
  }
  return "unknown";
}

inline MannerClass manner_from_string(std::string_view s) {
  if (s == "approximant") return MannerClass::approximant;
  if (s == "fricative") return MannerClass::fricative;
  if (s == "nasal") return MannerClass::nasal;
  if (s == "plosive") return MannerClass::plosive;
  if (s == "trill") return MannerClass::trill;
  if (s == "vowel") return MannerClass::vowel;
  throw DataError("unknown manner class '" + std::string(s) + "'");
}

using MannerTable = std::unordered_map<char32_t, MannerClass>;

// TSV `character<TAB>class`, classes restricted to the six levels above.
inline MannerTable load_manner_table(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open manner table: " + path.string());
  MannerTable table;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view sv = strip_cr(line);
    if (sv.empty() || sv[0] == '#') continue;
    const std::size_t tab = sv.find('\t');
    if (tab == std::string_view::npos) {
      throw DataError(path.string() + ":" + std::to_string(lineno) +
                      ": expected 'character<TAB>class'");
    }
    const auto cps = utf8_decode(sv.substr(0, tab), "manner table character");
    if (cps.size() != 1) {
      throw DataError(path.string() + ":" + std::to_string(lineno) +
                      ": key must be a single character");
    }
    try {
      table[fold_lower(cps[0])] = manner_from_string(sv.substr(tab + 1));
    } catch (const DataError& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " +
                      e.what());
    }
  }
  if (in.bad()) throw DataError("read failure: " + path.string());
  return table;
}

inline MannerClass manner_of_first_segment(std::string_view word,
                                           const MannerTable& table,
                                           Diagnostics* diag = nullptr) {
  if (word.empty()) throw DataError("manner lookup: empty word");
  const auto cps = utf8_decode(word, "word '" + std::string(word) + "'");
  auto it = table.find(fold_lower(cps[0]));
  if (it == table.end()) {
    if (diag) diag->tally("unmapped_first_character", std::string(word));
    return MannerClass::unknown;
  }
  return it->second;
}

}  // namespace lexilearn
