#pragma once

// Pipeline orchestration: config parsing, the encode/train/measures/export
// stages with on-disk artifacts, manifest-based stale-cache detection, and
// parameter accounting. Stages communicate only via files; a full rerun from
// fixed inputs reproduces every output byte for byte.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "lexilearn/common.hpp"
#include "lexilearn/cooccurrence.hpp"
#include "lexilearn/deep.hpp"
#include "lexilearn/form.hpp"
#include "lexilearn/io.hpp"
#include "lexilearn/linear.hpp"
#include "lexilearn/measures.hpp"
#include "lexilearn/predictors.hpp"
#include "lexilearn/semantics.hpp"

namespace lexilearn {

namespace fs = std::filesystem;

// Epsilon inside ln(cind + eps); cind can be exactly 0 for barely-seen words.
constexpr double kCindLogEpsilon = 1e-9;

// ---------------------------------------------------------------------------
// Config: line-based `key = value`, '#' comments, unknown keys are errors.
// Relative paths resolve against the config file's directory.

struct PipelineConfig {
  fs::path frequency_list;
  fs::path embeddings;
  fs::path corpus;
  fs::path lemma_forms;
  fs::path pronunciation_dict;
  fs::path manner_table;
  fs::path stimuli;
  fs::path ncount_lexicon;
  fs::path pos_table;  // optional pass-through column
  fs::path output_dir;

  double ridge = 0.0;
  double lambda = 0.001;
  std::uint64_t scale = 1000;
  std::uint64_t hidden = 1000;
  double rate = 0.001;
  std::uint64_t batch = 512;
  std::optional<std::uint64_t> epochs;
  std::uint64_t seed = 1;
};

namespace detail {

inline const std::set<std::string>& known_config_keys() {
  static const std::set<std::string> keys = {
      "frequency_list", "embeddings", "corpus",         "lemma_forms",
      "pronunciation_dict", "manner_table", "stimuli",  "ncount_lexicon",
      "pos_table",      "output_dir", "ridge",          "lambda",
      "scale",          "hidden",     "rate",           "batch",
      "epochs",         "seed"};
  return keys;
}

inline double config_double(const KvFile& kv, const std::string& key,
                            double fallback) {
  const std::string* v = kv.find(key);
  if (!v) return fallback;
  double out = 0;
  if (!try_parse_double(*v, out)) {
    throw ConfigError("config key '" + key + "' is not a number: '" + *v +
                      "'");
  }
  return out;
}

inline std::uint64_t config_u64(const KvFile& kv, const std::string& key,
                                std::uint64_t fallback) {
  const std::string* v = kv.find(key);
  if (!v) return fallback;
  std::uint64_t out = 0;
  if (!try_parse_u64(*v, out)) {
    throw ConfigError("config key '" + key +
                      "' is not a non-negative integer: '" + *v + "'");
  }
  return out;
}

inline fs::path config_path(const KvFile& kv, const std::string& key,
                            const fs::path& base) {
  const std::string* v = kv.find(key);
  if (!v || v->empty()) return {};
  fs::path p(*v);
  return p.is_absolute() ? p : base / p;
}

}  // namespace detail

inline PipelineConfig load_pipeline_config(const fs::path& config_path) {
  const KvFile kv = load_kv_file(config_path);
  std::set<std::string> seen;
  for (const auto& [key, value] : kv.entries) {
    if (!detail::known_config_keys().count(key)) {
      throw ConfigError(config_path.string() + ": unknown config key '" + key +
                        "'");
    }
    if (!seen.insert(key).second) {
      throw ConfigError(config_path.string() + ": duplicate config key '" +
                        key + "'");
    }
  }
  const fs::path base = config_path.has_parent_path()
                            ? config_path.parent_path()
                            : fs::path(".");
  PipelineConfig cfg;
  cfg.frequency_list = detail::config_path(kv, "frequency_list", base);
  cfg.embeddings = detail::config_path(kv, "embeddings", base);
  cfg.corpus = detail::config_path(kv, "corpus", base);
  cfg.lemma_forms = detail::config_path(kv, "lemma_forms", base);
  cfg.pronunciation_dict = detail::config_path(kv, "pronunciation_dict", base);
  cfg.manner_table = detail::config_path(kv, "manner_table", base);
  cfg.stimuli = detail::config_path(kv, "stimuli", base);
  cfg.ncount_lexicon = detail::config_path(kv, "ncount_lexicon", base);
  cfg.pos_table = detail::config_path(kv, "pos_table", base);
  cfg.output_dir = detail::config_path(kv, "output_dir", base);
  if (cfg.output_dir.empty()) {
    throw ConfigError(config_path.string() + ": 'output_dir' is required");
  }
  cfg.ridge = detail::config_double(kv, "ridge", 0.0);
  if (cfg.ridge < 0.0) throw ConfigError("ridge must be non-negative");
  cfg.lambda = detail::config_double(kv, "lambda", 0.001);
  if (!(cfg.lambda > 0.0)) throw ConfigError("lambda must be positive");
  cfg.scale = detail::config_u64(kv, "scale", 1000);
  if (cfg.scale == 0) throw ConfigError("scale must be >= 1");
  cfg.hidden = detail::config_u64(kv, "hidden", 1000);
  if (cfg.hidden == 0) throw ConfigError("hidden must be >= 1");
  cfg.rate = detail::config_double(kv, "rate", 0.001);
  if (!(cfg.rate > 0.0)) throw ConfigError("rate must be positive");
  cfg.batch = detail::config_u64(kv, "batch", 512);
  if (cfg.batch == 0) throw ConfigError("batch must be >= 1");
  if (kv.has("epochs")) cfg.epochs = detail::config_u64(kv, "epochs", 0);
  cfg.seed = detail::config_u64(kv, "seed", 1);

  // Every referenced input path must exist at validation time.
  const std::pair<const char*, const fs::path*> inputs[] = {
      {"frequency_list", &cfg.frequency_list},
      {"embeddings", &cfg.embeddings},
      {"corpus", &cfg.corpus},
      {"lemma_forms", &cfg.lemma_forms},
      {"pronunciation_dict", &cfg.pronunciation_dict},
      {"manner_table", &cfg.manner_table},
      {"stimuli", &cfg.stimuli},
      {"ncount_lexicon", &cfg.ncount_lexicon},
      {"pos_table", &cfg.pos_table},
  };
  for (const auto& [key, path] : inputs) {
    if (!path->empty() && !fs::exists(*path)) {
      throw ConfigError(std::string("config key '") + key +
                        "' names a missing file: " + path->string());
    }
  }
  return cfg;
}

// ---------------------------------------------------------------------------
// Artifact locations under output_dir.

struct StagePaths {
  fs::path cue_inventory;
  fs::path form_matrix;
  fs::path semantic_matrix;
  fs::path encode_manifest;
  fs::path endstate_map, endstate_manifest;
  fs::path fil_map, fil_manifest;
  fs::path fiddl_net, fiddl_manifest;
  fs::path cind_values, cind_checkpoint, cind_manifest;
  fs::path measures_endstate, measures_fil, measures_fiddl;
  fs::path accuracy_summary, measures_manifest;
  fs::path predictor_table, diagnostics, export_manifest;
};

inline StagePaths stage_paths(const PipelineConfig& cfg) {
  const fs::path& out = cfg.output_dir;
  StagePaths p;
  p.cue_inventory = out / "cue_inventory.tsv";
  p.form_matrix = out / "form_matrix.tsv";
  p.semantic_matrix = out / "semantic_matrix.txt";
  p.encode_manifest = out / "encode.manifest";
  p.endstate_map = out / "endstate.map";
  p.endstate_manifest = out / "endstate.map.manifest";
  p.fil_map = out / "fil.map";
  p.fil_manifest = out / "fil.map.manifest";
  p.fiddl_net = out / "fiddl.net";
  p.fiddl_manifest = out / "fiddl.net.manifest";
  p.cind_values = out / "cind.tsv";
  p.cind_checkpoint = out / "cind_checkpoint.tsv";
  p.cind_manifest = out / "cind.manifest";
  p.measures_endstate = out / "measures_endstate.csv";
  p.measures_fil = out / "measures_fil.csv";
  p.measures_fiddl = out / "measures_fiddl.csv";
  p.accuracy_summary = out / "accuracy_summary.csv";
  p.measures_manifest = out / "measures.manifest";
  p.predictor_table = out / "predictors.csv";
  p.diagnostics = out / "diagnostics.txt";
  p.export_manifest = out / "export.manifest";
  return p;
}

namespace detail {

inline void require_path(const fs::path& p, const char* key,
                         const char* stage) {
  if (p.empty()) {
    throw ConfigError(std::string("config key '") + key +
                      "' is required for stage '" + stage + "'");
  }
}

inline void require_artifact(const fs::path& p, const std::string& hint) {
  if (!fs::exists(p)) {
    throw DataError("missing artifact " + p.string() + "; run `" + hint +
                    "` first");
  }
}

inline void manifest_input(KvFile& m, const std::string& name,
                           const fs::path& path) {
  m.set("input." + name + ".path", path.string());
  m.set("input." + name + ".fnv64", hash_file(path));
}

inline void manifest_artifact(KvFile& m, const std::string& name,
                              const fs::path& path) {
  m.set("artifact." + name + ".fnv64", hash_file(path));
}

// Stale-cache detection: the hash recorded when an artifact was consumed
// must match the file as it exists now.
inline void check_fresh(const KvFile& manifest, const fs::path& manifest_path,
                        const std::string& input_name,
                        const fs::path& current) {
  const std::string* recorded =
      manifest.find("input." + input_name + ".fnv64");
  if (!recorded) {
    throw DataError(manifest_path.string() + " does not record input '" +
                    input_name + "'");
  }
  if (*recorded != hash_file(current)) {
    throw DataError("stale artifact: " + current.string() +
                    " changed since " + manifest_path.string() +
                    " was written; re-run the producing stage");
  }
}

inline std::vector<std::string> load_unique_stimuli(const fs::path& path) {
  std::vector<std::string> words = load_word_list(path);
  if (words.empty()) throw DataError("stimulus list is empty");
  std::set<std::string> seen;
  for (const auto& w : words) {
    if (!seen.insert(w).second) {
      throw DataError("duplicate stimulus word '" + w + "'");
    }
  }
  return words;
}

inline void write_cue_inventory(const CueInventory& inv, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write cue inventory: " + path.string());
  for (const auto& cue : inv.cues) out << cue << "\n";
  if (!out.flush()) throw DataError("write failure: " + path.string());
}

inline void write_semantic_matrix(const SemanticMatrix& s,
                                  const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write semantic matrix: " + path.string());
  out << s.rows() << " " << s.dim() << "\n";
  for (std::size_t i = 0; i < s.rows(); ++i) {
    out << s.row_words[i];
    for (std::size_t j = 0; j < s.dim(); ++j) {
      out << " "
          << format_double_17(s.values(static_cast<Eigen::Index>(i),
                                       static_cast<Eigen::Index>(j)));
    }
    out << "\n";
  }
  if (!out.flush()) throw DataError("write failure: " + path.string());
}

struct EncodedArtifacts {
  CueInventory inventory;
  FormMatrix c;
  SemanticMatrix s;
};

inline EncodedArtifacts load_encoded(const StagePaths& paths) {
  require_artifact(paths.form_matrix, "lexilearn encode");
  require_artifact(paths.semantic_matrix, "lexilearn encode");
  EncodedArtifacts art;
  auto [inv, c] = read_form_matrix_tsv(paths.form_matrix);
  art.inventory = std::move(inv);
  art.c = std::move(c);
  const EmbeddingTable emb = load_embeddings(paths.semantic_matrix);
  art.s = build_semantic_matrix(art.c.row_words, emb);
  return art;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// encode: stimulus list + embeddings -> cue inventory, C, S artifacts.

inline void run_encode(const PipelineConfig& cfg) {
  detail::require_path(cfg.stimuli, "stimuli", "encode");
  detail::require_path(cfg.embeddings, "embeddings", "encode");
  const std::vector<std::string> words =
      detail::load_unique_stimuli(cfg.stimuli);
  const EmbeddingTable emb = load_embeddings(cfg.embeddings);
  const CueInventory inventory = build_cue_inventory(words);
  const FormMatrix c = build_form_matrix(words, inventory);
  const SemanticMatrix s = build_semantic_matrix(words, emb);

  fs::create_directories(cfg.output_dir);
  const StagePaths paths = stage_paths(cfg);
  detail::write_cue_inventory(inventory, paths.cue_inventory);
  write_form_matrix_tsv(c, inventory, paths.form_matrix);
  detail::write_semantic_matrix(s, paths.semantic_matrix);

  KvFile m;
  m.set("stage", "encode");
  detail::manifest_input(m, "stimuli", cfg.stimuli);
  detail::manifest_input(m, "embeddings", cfg.embeddings);
  m.set("word_count", std::to_string(words.size()));
  m.set("cue_count", std::to_string(inventory.size()));
  m.set("dim", std::to_string(s.dim()));
  detail::manifest_artifact(m, "cue_inventory", paths.cue_inventory);
  detail::manifest_artifact(m, "form_matrix", paths.form_matrix);
  detail::manifest_artifact(m, "semantic_matrix", paths.semantic_matrix);
  write_kv_file(paths.encode_manifest, m);
}

// ---------------------------------------------------------------------------
// train: endstate | fil | fiddl | cind.

inline void run_train(const PipelineConfig& cfg, const std::string& which) {
  fs::create_directories(cfg.output_dir);
  const StagePaths paths = stage_paths(cfg);

  if (which == "cind") {
    detail::require_path(cfg.corpus, "corpus", "train --which cind");
    std::ifstream in(cfg.corpus, std::ios::binary);
    if (!in) throw DataError("cannot open corpus: " + cfg.corpus.string());
    UtteranceStream stream(in, /*dedup=*/true);
    CooccurrenceNetwork net(cfg.lambda);
    train_cind(net, stream);

    std::ofstream values(paths.cind_values, std::ios::binary);
    if (!values) {
      throw DataError("cannot write " + paths.cind_values.string());
    }
    for (std::uint32_t i = 0; i < net.vocab_size(); ++i) {
      const double cind = net.weight(i, i);
      values << net.words()[i] << "\t" << format_double(cind) << "\t"
             << format_double(log_transform_cind(cind, kCindLogEpsilon))
             << "\n";
    }
    if (!values.flush()) {
      throw DataError("write failure: " + paths.cind_values.string());
    }
    write_cind_checkpoint(net, paths.cind_checkpoint);

    KvFile m;
    m.set("stage", "train");
    m.set("which", "cind");
    detail::manifest_input(m, "corpus", cfg.corpus);
    m.set("lambda", format_double(cfg.lambda));
    m.set("log_epsilon", format_double(kCindLogEpsilon));
    m.set("utterances", std::to_string(net.utterances_seen()));
    m.set("vocab", std::to_string(net.vocab_size()));
    detail::manifest_artifact(m, "cind_values", paths.cind_values);
    detail::manifest_artifact(m, "cind_checkpoint", paths.cind_checkpoint);
    write_kv_file(paths.cind_manifest, m);
    return;
  }

  const detail::EncodedArtifacts art = detail::load_encoded(paths);
  KvFile m;
  m.set("stage", "train");
  m.set("which", which);
  detail::manifest_input(m, "form_matrix", paths.form_matrix);
  detail::manifest_input(m, "semantic_matrix", paths.semantic_matrix);
  m.set("seed", std::to_string(cfg.seed));

  if (which == "endstate" || which == "fil") {
    LinearMap map;
    if (which == "endstate") {
      map = solve_endstate(art.c, art.s, cfg.ridge);
    } else {
      detail::require_path(cfg.frequency_list, "frequency_list",
                           "train --which fil");
      const FrequencyTable freq = load_frequency_list(cfg.frequency_list);
      detail::manifest_input(m, "frequency_list", cfg.frequency_list);
      map = solve_fil(art.c, art.s, freq, cfg.ridge);
    }
    const fs::path& ckpt =
        which == "endstate" ? paths.endstate_map : paths.fil_map;
    save_linear_map(map, ckpt);
    m.set("ridge", format_double(cfg.ridge));
    m.set("solver", map.metadata.at("solver"));
    m.set("parameters",
          std::to_string(static_cast<std::uint64_t>(map.weights.size())));
    detail::manifest_artifact(m, "checkpoint", ckpt);
    write_kv_file(which == "endstate" ? paths.endstate_manifest
                                      : paths.fil_manifest,
                  m);
    return;
  }

  if (which == "fiddl") {
    detail::require_path(cfg.frequency_list, "frequency_list",
                         "train --which fiddl");
    if (!cfg.epochs) {
      throw ConfigError("config key 'epochs' is required for train --which "
                        "fiddl");
    }
    const FrequencyTable freq = load_frequency_list(cfg.frequency_list);
    detail::manifest_input(m, "frequency_list", cfg.frequency_list);
    const TokenSchedule schedule =
        expand_token_schedule(freq, art.c.row_words, cfg.scale, cfg.seed);
    FiddlHyper hyper;
    hyper.hidden = cfg.hidden;
    hyper.rate = cfg.rate;
    hyper.batch = cfg.batch;
    hyper.epochs = *cfg.epochs;
    hyper.seed = cfg.seed;
    const DeepMap net = train_fiddl(art.c, art.s, schedule, hyper);
    save_deep_map(net, paths.fiddl_net);
    m.set("scale", std::to_string(cfg.scale));
    m.set("hidden", std::to_string(cfg.hidden));
    m.set("rate", format_double(cfg.rate));
    m.set("batch", std::to_string(cfg.batch));
    m.set("epochs", std::to_string(*cfg.epochs));
    m.set("adam_beta1", format_double(kAdamBeta1));
    m.set("adam_beta2", format_double(kAdamBeta2));
    m.set("adam_epsilon", format_double(kAdamEpsilon));
    m.set("schedule_tokens", std::to_string(schedule.tokens.size()));
    m.set("schedule.fnv64", hash_hex(schedule.content_hash()));
    if (!net.epoch_losses.empty()) {
      m.set("final_epoch_loss", format_double(net.epoch_losses.back()));
    }
    m.set("parameters", std::to_string(net.parameter_count()));
    detail::manifest_artifact(m, "checkpoint", paths.fiddl_net);
    write_kv_file(paths.fiddl_manifest, m);
    return;
  }

  throw ConfigError("unknown model '" + which +
                    "' (expected endstate, fil, fiddl, or cind)");
}

// ---------------------------------------------------------------------------
// measures: per-model MeasureRecord CSVs plus the accuracy summary.

inline void run_measures(const PipelineConfig& cfg, unsigned threads = 1) {
  const StagePaths paths = stage_paths(cfg);
  const detail::EncodedArtifacts art = detail::load_encoded(paths);
  detail::require_path(cfg.frequency_list, "frequency_list", "measures");
  const FrequencyTable freq = load_frequency_list(cfg.frequency_list);

  if (!fs::exists(paths.fil_map)) {
    throw DataError("missing checkpoint " + paths.fil_map.string() +
                    "; run `lexilearn train --which fil` first");
  }
  if (!fs::exists(paths.fiddl_net)) {
    throw DataError("missing checkpoint " + paths.fiddl_net.string() +
                    "; run `lexilearn train --which fiddl` first");
  }

  KvFile m;
  m.set("stage", "measures");
  detail::manifest_input(m, "form_matrix", paths.form_matrix);
  detail::manifest_input(m, "semantic_matrix", paths.semantic_matrix);
  detail::manifest_input(m, "frequency_list", cfg.frequency_list);

  struct Row {
    std::string tag;
    double type_acc;
    double token_acc;
  };
  std::vector<Row> summary;

  auto evaluate = [&](const Eigen::MatrixXd& prediction, ModelTag tag,
                      const fs::path& csv_path) {
    MeasureSet set = target_correlations(prediction, art.s, tag, threads);
    write_measures_csv(set, csv_path);
    std::size_t correct = 0;
    for (const auto& rec : set.records) correct += rec.correct_type ? 1 : 0;
    const double type_acc =
        static_cast<double>(correct) / static_cast<double>(art.s.rows());
    const double token_acc = token_accuracy(prediction, art.s, freq, threads);
    summary.push_back({to_string(tag), type_acc, token_acc});
    detail::manifest_artifact(
        m, std::string("measures_") + to_string(tag), csv_path);
  };

  // Stale-cache detection against the checkpoints' recorded inputs.
  auto verify_checkpoint = [&](const fs::path& manifest_path) {
    if (!fs::exists(manifest_path)) return;
    const KvFile ckpt_manifest = load_kv_file(manifest_path);
    detail::check_fresh(ckpt_manifest, manifest_path, "form_matrix",
                        paths.form_matrix);
    detail::check_fresh(ckpt_manifest, manifest_path, "semantic_matrix",
                        paths.semantic_matrix);
  };
  verify_checkpoint(paths.fil_manifest);
  verify_checkpoint(paths.fiddl_manifest);

  {
    const LinearMap fil = load_linear_map(paths.fil_map);
    detail::manifest_input(m, "fil_checkpoint", paths.fil_map);
    evaluate(predict_semantics(art.c, fil), ModelTag::FIL, paths.measures_fil);
  }
  {
    const DeepMap fiddl = load_deep_map(paths.fiddl_net);
    detail::manifest_input(m, "fiddl_checkpoint", paths.fiddl_net);
    evaluate(predict_fiddl(art.c, fiddl), ModelTag::FIDDL,
             paths.measures_fiddl);
  }
  if (fs::exists(paths.endstate_map)) {
    verify_checkpoint(paths.endstate_manifest);
    const LinearMap endstate = load_linear_map(paths.endstate_map);
    detail::manifest_input(m, "endstate_checkpoint", paths.endstate_map);
    evaluate(predict_semantics(art.c, endstate), ModelTag::ENDSTATE,
             paths.measures_endstate);
  }

  std::ofstream out(paths.accuracy_summary, std::ios::binary);
  if (!out) {
    throw DataError("cannot write " + paths.accuracy_summary.string());
  }
  out << "model_tag,type_accuracy,token_accuracy\n";
  for (const auto& row : summary) {
    out << row.tag << "," << format_double(row.type_acc) << ","
        << format_double(row.token_acc) << "\n";
  }
  if (!out.flush()) {
    throw DataError("write failure: " + paths.accuracy_summary.string());
  }
  detail::manifest_artifact(m, "accuracy_summary", paths.accuracy_summary);
  write_kv_file(paths.measures_manifest, m);
}

// ---------------------------------------------------------------------------
// export: join every per-word measure into the fixed-schema predictor table.

namespace detail {

// Measures CSV rows keyed by word; correlation kept verbatim so the exported
// columns equal the standalone CSVs byte for byte.
inline std::map<std::string, std::string> load_measures_column(
    const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open measures: " + path.string());
  std::string line;
  if (!std::getline(in, line) ||
      strip_cr(line) != "word,model_tag,target_correlation,correct_type") {
    throw DataError(path.string() + ": unexpected measures header");
  }
  std::map<std::string, std::string> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string_view sv = strip_cr(line);
    if (sv.empty()) continue;
    const auto cells = csv_split(sv);
    if (cells.size() != 4) {
      throw DataError(path.string() + ":" + std::to_string(lineno) +
                      ": expected 4 columns");
    }
    if (!out.emplace(cells[0], cells[2]).second) {
      throw DataError(path.string() + ": duplicate word '" + cells[0] + "'");
    }
  }
  if (in.bad()) throw DataError("read failure: " + path.string());
  return out;
}

struct CindEntry {
  std::string cind;
  std::string log_cind;
};

inline std::map<std::string, CindEntry> load_cind_values(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open cind values: " + path.string());
  std::map<std::string, CindEntry> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string_view sv = strip_cr(line);
    if (sv.empty()) continue;
    const std::size_t t1 = sv.find('\t');
    const std::size_t t2 =
        t1 == std::string_view::npos ? t1 : sv.find('\t', t1 + 1);
    if (t1 == std::string_view::npos || t2 == std::string_view::npos) {
      throw DataError(path.string() + ":" + std::to_string(lineno) +
                      ": expected 'word<TAB>cind<TAB>log_cind'");
    }
    out[std::string(sv.substr(0, t1))] = {
        std::string(sv.substr(t1 + 1, t2 - t1 - 1)),
        std::string(sv.substr(t2 + 1))};
  }
  if (in.bad()) throw DataError("read failure: " + path.string());
  return out;
}

inline std::map<std::string, std::string> load_pos_table(
    const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open pos table: " + path.string());
  std::map<std::string, std::string> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string_view sv = strip_cr(line);
    if (sv.empty()) continue;
    const std::size_t tab = sv.find('\t');
    if (tab == std::string_view::npos) {
      throw DataError(path.string() + ":" + std::to_string(lineno) +
                      ": expected 'word<TAB>pos'");
    }
    out[std::string(sv.substr(0, tab))] = std::string(sv.substr(tab + 1));
  }
  if (in.bad()) throw DataError("read failure: " + path.string());
  return out;
}

// Paradigm lookup key for a stimulus: the word itself when it is a lemma,
// otherwise the lemma that attests the word as a form (lexicographically
// smallest on ambiguity, which is tallied).
class LemmaResolver {
 public:
  explicit LemmaResolver(const LemmaFormTable& table) : table_(table) {
    for (const auto& [lemma, forms] : table.entries()) {
      for (const auto& form : forms) {
        auto [it, inserted] = form_to_lemma_.try_emplace(form, lemma);
        if (!inserted && lemma < it->second) {
          ambiguous_.insert(form);
          it->second = lemma;
        } else if (!inserted) {
          ambiguous_.insert(form);
        }
      }
    }
  }

  std::size_t paradigm_size_for(const std::string& word,
                                Diagnostics& diag) const {
    if (table_.contains(word)) return table_.paradigm_size(word);
    auto it = form_to_lemma_.find(word);
    if (it == form_to_lemma_.end()) {
      diag.tally("word_without_paradigm", word);
      return 0;
    }
    if (ambiguous_.count(word)) diag.tally("ambiguous_lemma", word);
    return table_.paradigm_size(it->second);
  }

 private:
  const LemmaFormTable& table_;
  std::map<std::string, std::string> form_to_lemma_;
  std::set<std::string> ambiguous_;
};

inline void write_diagnostics(const Diagnostics& diag, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write diagnostics: " + path.string());
  out << "diagnostics\n";
  if (diag.counters.empty()) out << "clean: no fallbacks were taken\n";
  for (const auto& [what, count] : diag.counters) {
    out << what << " = " << count << "\n";
    const auto it = diag.words.find(what);
    if (it != diag.words.end()) {
      for (const auto& w : it->second) out << "  " << w << "\n";
    }
  }
  if (!out.flush()) throw DataError("write failure: " + path.string());
}

}  // namespace detail

inline void run_export(const PipelineConfig& cfg) {
  const StagePaths paths = stage_paths(cfg);
  detail::require_path(cfg.stimuli, "stimuli", "export");
  detail::require_path(cfg.frequency_list, "frequency_list", "export");
  detail::require_path(cfg.lemma_forms, "lemma_forms", "export");
  detail::require_path(cfg.pronunciation_dict, "pronunciation_dict", "export");
  detail::require_path(cfg.manner_table, "manner_table", "export");
  detail::require_path(cfg.ncount_lexicon, "ncount_lexicon", "export");
  detail::require_artifact(paths.measures_fil, "lexilearn measures");
  detail::require_artifact(paths.measures_fiddl, "lexilearn measures");
  detail::require_artifact(paths.cind_values,
                           "lexilearn train --which cind");

  // Freshness: the measures this table copies must describe today's
  // checkpoints, and the cind values today's corpus.
  if (fs::exists(paths.measures_manifest)) {
    const KvFile mm = load_kv_file(paths.measures_manifest);
    detail::check_fresh(mm, paths.measures_manifest, "fil_checkpoint",
                        paths.fil_map);
    detail::check_fresh(mm, paths.measures_manifest, "fiddl_checkpoint",
                        paths.fiddl_net);
  }
  if (fs::exists(paths.cind_manifest)) {
    const KvFile cm = load_kv_file(paths.cind_manifest);
    detail::check_fresh(cm, paths.cind_manifest, "corpus", cfg.corpus);
  }

  const std::vector<std::string> words =
      detail::load_unique_stimuli(cfg.stimuli);
  const FrequencyTable freq = load_frequency_list(cfg.frequency_list);
  const LemmaFormTable lemma_forms = load_lemma_forms(cfg.lemma_forms);
  const PronunciationDictionary pron =
      load_pronunciation_dict(cfg.pronunciation_dict);
  const MannerTable manner = load_manner_table(cfg.manner_table);
  const NeighborLexicon neighbors(load_word_list(cfg.ncount_lexicon));
  const auto corr_fil = detail::load_measures_column(paths.measures_fil);
  const auto corr_fiddl = detail::load_measures_column(paths.measures_fiddl);
  const auto cind = detail::load_cind_values(paths.cind_values);
  std::map<std::string, std::string> pos;
  const bool with_pos = !cfg.pos_table.empty();
  if (with_pos) pos = detail::load_pos_table(cfg.pos_table);

  const detail::LemmaResolver lemmas(lemma_forms);
  Diagnostics diag;

  std::ofstream out(paths.predictor_table, std::ios::binary);
  if (!out) {
    throw DataError("cannot write " + paths.predictor_table.string());
  }
  out << "word,length,log_frequency,paradigm_size_sqrt,ncount_log,"
         "entropy_flag,manner,target_correlation_fil,target_correlation_"
         "fiddl,cind,log_cind";
  if (with_pos) out << ",pos";
  out << "\n";

  for (const auto& word : words) {
    out << csv_field(word) << "," << codepoint_length(word) << ",";
    if (const auto f = freq.get(word); f && *f >= 1) {
      out << format_double(std::log(static_cast<double>(*f)));
    } else {
      diag.tally("word_without_frequency", word);
    }
    out << ",";
    out << format_double(std::sqrt(
               static_cast<double>(lemmas.paradigm_size_for(word, diag))))
        << ",";
    out << format_double(std::log(
               static_cast<double>(neighbors.ncount(word)) + 1.0))
        << ",";
    out << entropy_flag(word, pron, &diag) << ",";
    out << to_string(manner_of_first_segment(word, manner, &diag)) << ",";
    auto emit_corr = [&](const std::map<std::string, std::string>& corr,
                         const char* which) {
      auto it = corr.find(word);
      if (it == corr.end()) {
        diag.tally(std::string("word_without_measures_") + which, word);
      } else if (it->second.empty()) {
        diag.tally(std::string("undefined_target_correlation_") + which,
                   word);
      } else {
        out << it->second;
      }
    };
    emit_corr(corr_fil, "fil");
    out << ",";
    emit_corr(corr_fiddl, "fiddl");
    out << ",";
    if (auto it = cind.find(word); it != cind.end()) {
      out << it->second.cind << "," << it->second.log_cind;
    } else {
      out << ",";
      diag.tally("stimulus_not_in_corpus", word);
    }
    if (with_pos) {
      out << ",";
      if (auto it = pos.find(word); it != pos.end()) {
        out << csv_field(it->second);
      } else {
        diag.tally("word_without_pos", word);
      }
    }
    out << "\n";
  }
  if (!out.flush()) {
    throw DataError("write failure: " + paths.predictor_table.string());
  }
  detail::write_diagnostics(diag, paths.diagnostics);

  KvFile m;
  m.set("stage", "export");
  detail::manifest_input(m, "stimuli", cfg.stimuli);
  detail::manifest_input(m, "frequency_list", cfg.frequency_list);
  detail::manifest_input(m, "lemma_forms", cfg.lemma_forms);
  detail::manifest_input(m, "pronunciation_dict", cfg.pronunciation_dict);
  detail::manifest_input(m, "manner_table", cfg.manner_table);
  detail::manifest_input(m, "ncount_lexicon", cfg.ncount_lexicon);
  detail::manifest_input(m, "measures_fil", paths.measures_fil);
  detail::manifest_input(m, "measures_fiddl", paths.measures_fiddl);
  detail::manifest_input(m, "cind_values", paths.cind_values);
  if (with_pos) detail::manifest_input(m, "pos_table", cfg.pos_table);
  detail::manifest_artifact(m, "predictor_table", paths.predictor_table);
  detail::manifest_artifact(m, "diagnostics", paths.diagnostics);
  write_kv_file(paths.export_manifest, m);
}

// ---------------------------------------------------------------------------
// Parameter accounting. Linear map: cue_count x dim. Deep map:
// fan_in x hidden + hidden + hidden x dim + dim.

inline std::uint64_t count_parameters(const fs::path& checkpoint) {
  std::ifstream in(checkpoint, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + checkpoint.string());
  char magic[4] = {0, 0, 0, 0};
  in.read(magic, 4);
  if (in.gcount() != 4) {
    throw DataError("unreadable checkpoint: " + checkpoint.string());
  }
  if (std::memcmp(magic, kLinearMagic, 4) == 0) {
    const LinearMap map = load_linear_map(checkpoint);
    return static_cast<std::uint64_t>(map.weights.rows()) *
           static_cast<std::uint64_t>(map.weights.cols());
  }
  if (std::memcmp(magic, kDeepMagic, 4) == 0) {
    const DeepMap net = load_deep_map(checkpoint);
    return net.parameter_count();
  }
  throw DataError("not a lexilearn checkpoint: " + checkpoint.string());
}

}  // namespace lexilearn
