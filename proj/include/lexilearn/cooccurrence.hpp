#pragma once

// Word-to-word Rescorla-Wagner network trained over utterances; a word's
// self-prediction weight (the diagonal of W) is its Contextual Independence.
//
// The update for an utterance with word set A (cues = outcomes = A):
//   for each outcome o:  delta(o) = lambda * (target(o) - sum_{c in A} w(c,o))
//   applied to w(c,o) for every cue c in A, target(o) = 1 iff o in A,
// with all activations taken from pre-update weights. Only the affected
// outcome set (A plus every outcome holding a nonzero weight from an active
// cue) is visited: any other outcome has zero activation and zero target,
// hence a zero delta, so the sparse update is mathematically exact. A word
// serves as a cue for itself, which is what makes the diagonal the
// self-prediction weight.
//
// Activation sums accumulate over active cue ids in ascending order; a dense
// implementation using the same order produces bit-identical weights.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <string>
#include <unordered_map>
#include <vector>

#include "lexilearn/common.hpp"
#include "lexilearn/io.hpp"

namespace lexilearn {

class CooccurrenceNetwork {
 public:
  explicit CooccurrenceNetwork(double rate) : rate_(rate) {
    if (!(rate > 0.0)) throw DataError("learning rate must be positive");
  }

  double rate() const { return rate_; }
  std::uint64_t utterances_seen() const { return utterances_seen_; }
  std::size_t vocab_size() const { return words_.size(); }
  const std::vector<std::string>& words() const { return words_; }

  std::uint32_t id_for(const std::string& word) {
    auto it = vocab_.find(word);
    if (it != vocab_.end()) return it->second;
    const auto id = static_cast<std::uint32_t>(words_.size());
    vocab_.emplace(word, id);
    words_.push_back(word);
    rows_.emplace_back();
    return id;
  }

  const std::uint32_t* find_id(std::string_view word) const {
    auto it = vocab_.find(std::string(word));
    return it == vocab_.end() ? nullptr : &it->second;
  }

  // 0 for any pair never updated.
  double weight(std::uint32_t cue, std::uint32_t outcome) const {
    if (cue >= rows_.size()) return 0.0;
    auto it = rows_[cue].find(outcome);
    return it == rows_[cue].end() ? 0.0 : it->second;
  }

  double weight(std::string_view cue, std::string_view outcome) const {
    const std::uint32_t* c = find_id(cue);
    const std::uint32_t* o = find_id(outcome);
    return (c && o) ? weight(*c, *o) : 0.0;
  }

  const std::unordered_map<std::uint32_t, double>& row(
      std::uint32_t cue) const {
    return rows_.at(cue);
  }

  // One Rescorla-Wagner step for a non-empty utterance. Within-utterance
  // duplicates collapse to presence.
  void update(const std::vector<std::string>& utterance) {
    if (utterance.empty()) throw DataError("empty utterance");
    std::vector<std::uint32_t> active;
    active.reserve(utterance.size());
    for (const auto& w : utterance) active.push_back(id_for(w));
    std::sort(active.begin(), active.end());
    active.erase(std::unique(active.begin(), active.end()), active.end());

    std::vector<std::uint32_t> affected = active;
    for (std::uint32_t c : active) {
      for (const auto& [o, w] : rows_[c]) affected.push_back(o);
    }
    std::sort(affected.begin(), affected.end());
    affected.erase(std::unique(affected.begin(), affected.end()),
                   affected.end());

    for (std::uint32_t o : affected) {
      double activation = 0.0;
      for (std::uint32_t c : active) {
        auto it = rows_[c].find(o);
        if (it != rows_[c].end()) activation += it->second;
      }
      const double target =
          std::binary_search(active.begin(), active.end(), o) ? 1.0 : 0.0;
      const double delta = rate_ * (target - activation);
      if (!std::isfinite(delta)) {
        throw DivergenceError("non-finite weight update for outcome '" +
                              words_[o] + "'");
      }
      if (delta == 0.0) continue;
      for (std::uint32_t c : active) rows_[c][o] += delta;
    }
    ++utterances_seen_;
  }

 private:
  double rate_;
  std::unordered_map<std::string, std::uint32_t> vocab_;
  std::vector<std::string> words_;
  std::vector<std::unordered_map<std::uint32_t, double>> rows_;
  std::uint64_t utterances_seen_ = 0;
};

// Single pass over the corpus in order, one update per utterance.
inline void train_cind(CooccurrenceNetwork& net, UtteranceStream& corpus) {
  std::vector<std::string> utterance;
  while (corpus.next(utterance)) {
    try {
      net.update(utterance);
    } catch (const DivergenceError& e) {
      throw DivergenceError(std::string(e.what()) + " (corpus line " +
                            std::to_string(corpus.line_number()) + ")");
    }
  }
}

// The word's diagonal weight in W; 0 for unseen words.
inline double contextual_independence(const CooccurrenceNetwork& net,
                                      std::string_view word) {
  return net.weight(word, word);
}

// ln(value + epsilon); the raw measure has a long right tail.
inline double log_transform_cind(double value, double epsilon) {
  if (value < 0.0) throw DataError("contextual independence must be >= 0");
  if (!(epsilon > 0.0)) throw DataError("epsilon must be positive");
  return std::log(value + epsilon);
}

// ---------------------------------------------------------------------------
// Checkpoint: sparse triplets `cue<TAB>outcome<TAB>weight` in (cue id,
// outcome id) order. Weights are printed with shortest round-trip precision,
// so reload is value-exact.

inline void write_cind_checkpoint(const CooccurrenceNetwork& net,
                                  const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint: " + path.string());
  for (std::uint32_t c = 0; c < net.vocab_size(); ++c) {
    std::vector<std::pair<std::uint32_t, double>> entries(net.row(c).begin(),
                                                          net.row(c).end());
    std::sort(entries.begin(), entries.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    for (const auto& [o, w] : entries) {
      out << net.words()[c] << "\t" << net.words()[o] << "\t"
          << format_double(w) << "\n";
    }
  }
  if (!out.flush()) throw DataError("write failure: " + path.string());
}

}  // namespace lexilearn
