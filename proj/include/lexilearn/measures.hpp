#pragma once

// DLM-derived per-word measures: Target Correlation and type-/token-based
// comprehension accuracy, for any comprehension mapping (linear or deep).
// The neighbor search space is exactly the gold rows of the modeled word
// list. Constant predicted rows are surfaced as undefined, never imputed.

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "lexilearn/common.hpp"
#include "lexilearn/io.hpp"
#include "lexilearn/semantics.hpp"

namespace lexilearn {

enum class ModelTag : std::uint8_t { FIL, ENDSTATE, FIDDL, WH };

inline const char* to_string(ModelTag tag) {
  switch (tag) {
    case ModelTag::FIL: return "FIL";
    case ModelTag::ENDSTATE: return "ENDSTATE";
    case ModelTag::FIDDL: return "FIDDL";
    case ModelTag::WH: return "WH";
  }
  return "unknown";
}

struct MeasureRecord {
  std::string word;
  double target_correlation = 0.0;
  bool correct_type = false;
  ModelTag model_tag = ModelTag::ENDSTATE;
  // False when the predicted row was constant and the correlation undefined;
  // such records are excluded from summaries and tallied.
  bool defined = true;
};

struct MeasureSet {
  std::vector<MeasureRecord> records;
  std::uint64_t undefined_count = 0;
};

// Record i pairs pearson(prediction row i, gold row i) with whether the
// nearest gold row (by correlation) of prediction row i is row i itself.
inline MeasureSet target_correlations(const Eigen::MatrixXd& prediction,
                                      const SemanticMatrix& gold,
                                      ModelTag tag, unsigned threads = 1) {
  if (prediction.rows() != gold.values.rows() ||
      prediction.cols() != gold.values.cols()) {
    throw DataError("prediction/gold shape mismatch");
  }
  MeasureSet out;
  out.records.resize(gold.rows());
  parallel_for(gold.rows(), threads, [&](std::size_t i) {
    MeasureRecord& rec = out.records[i];
    rec.word = gold.row_words[i];
    rec.model_tag = tag;
    const Eigen::VectorXd pred =
        prediction.row(static_cast<Eigen::Index>(i)).transpose();
    try {
      rec.target_correlation = pearson(
          pred, gold.values.row(static_cast<Eigen::Index>(i)).transpose());
      rec.correct_type = nearest_by_correlation(pred, gold).row == i;
    } catch (const UndefinedCorrelationError&) {
      rec.defined = false;
      rec.target_correlation = 0.0;
      rec.correct_type = false;
    }
  });
  for (const auto& rec : out.records) {
    if (!rec.defined) ++out.undefined_count;
  }
  return out;
}

// Fraction of rows whose nearest gold row is their own; undefined rows count
// as incorrect.
inline double type_accuracy(const Eigen::MatrixXd& prediction,
                            const SemanticMatrix& gold, unsigned threads = 1) {
  const MeasureSet set =
      target_correlations(prediction, gold, ModelTag::ENDSTATE, threads);
  std::size_t correct = 0;
  for (const auto& rec : set.records) correct += rec.correct_type ? 1 : 0;
  return gold.rows() == 0
             ? 0.0
             : static_cast<double>(correct) / static_cast<double>(gold.rows());
}

// Frequency-weighted accuracy: sum of frequencies of correctly recognized
// words over the total frequency mass.
inline double token_accuracy(const Eigen::MatrixXd& prediction,
                             const SemanticMatrix& gold,
                             const FrequencyTable& freq, unsigned threads = 1) {
  const MeasureSet set =
      target_correlations(prediction, gold, ModelTag::ENDSTATE, threads);
  long double correct_mass = 0.0L;
  long double total_mass = 0.0L;
  std::vector<std::string> missing;
  for (const auto& rec : set.records) {
    const auto f = freq.get(rec.word);
    if (!f || *f == 0) {
      missing.push_back(rec.word);
      continue;
    }
    total_mass += static_cast<long double>(*f);
    if (rec.correct_type) correct_mass += static_cast<long double>(*f);
  }
  if (!missing.empty()) {
    std::string msg = "words without frequency:";
    for (const auto& m : missing) msg += " " + m;
    throw DataError(msg);
  }
  return total_mass == 0.0L
             ? 0.0
             : static_cast<double>(correct_mass / total_mass);
}

// CSV dump: word,model_tag,target_correlation,correct_type. Undefined
// correlations are written as empty fields.
inline void write_measures_csv(const MeasureSet& set,
                               const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write measures: " + path.string());
  out << "word,model_tag,target_correlation,correct_type\n";
  for (const auto& rec : set.records) {
    out << csv_field(rec.word) << "," << to_string(rec.model_tag) << ",";
    if (rec.defined) out << format_double(rec.target_correlation);
    out << "," << (rec.correct_type ? 1 : 0) << "\n";
  }
  if (!out.flush()) throw DataError("write failure: " + path.string());
}

}  // namespace lexilearn
