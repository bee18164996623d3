// lexilearn CLI: subcommand-per-stage driver over the pipeline library.
// Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numerical
// divergence.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "lexilearn/pipeline.hpp"

namespace {

unsigned resolve_threads(std::optional<unsigned> flag) {
  if (flag) return *flag == 0 ? 1u : *flag;
  if (const char* env = std::getenv("LEXILEARN_THREADS")) {
    std::uint64_t n = 0;
    if (lexilearn::try_parse_u64(env, n) && n > 0) {
      return static_cast<unsigned>(n);
    }
    std::cerr << "warning: ignoring invalid LEXILEARN_THREADS='" << env
              << "'\n";
  }
  return 1;
}

lexilearn::PipelineConfig load_config(const std::string& path,
                                      std::optional<std::uint64_t> seed) {
  lexilearn::PipelineConfig cfg = lexilearn::load_pipeline_config(path);
  if (seed) cfg.seed = *seed;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Discriminative-lexicon predictor pipeline"};
  app.require_subcommand(1);

  std::string config_path;
  std::string which;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::string checkpoint_path;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "pipeline config file")
        ->required();
    cmd->add_option("--seed", seed, "override the config seed");
    cmd->add_option("--threads", threads,
                    "worker threads (overrides LEXILEARN_THREADS)");
  };

  CLI::App* encode = app.add_subcommand(
      "encode", "build the cue inventory and the C and S matrices");
  add_common(encode);

  CLI::App* train =
      app.add_subcommand("train", "train or solve one model checkpoint");
  add_common(train);
  train->add_option("--which", which, "endstate, fil, fiddl, or cind")
      ->required();

  CLI::App* measures = app.add_subcommand(
      "measures", "target correlations and accuracy summaries per model");
  add_common(measures);

  CLI::App* exp = app.add_subcommand(
      "export", "join all measures into the per-word predictor table");
  add_common(exp);

  CLI::App* params = app.add_subcommand(
      "params", "print the parameter count of a model checkpoint");
  params->add_option("checkpoint", checkpoint_path, "checkpoint file")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (encode->parsed()) {
      lexilearn::run_encode(load_config(config_path, seed));
    } else if (train->parsed()) {
      lexilearn::run_train(load_config(config_path, seed), which);
    } else if (measures->parsed()) {
      lexilearn::run_measures(load_config(config_path, seed),
                              resolve_threads(threads));
    } else if (exp->parsed()) {
      lexilearn::run_export(load_config(config_path, seed));
    } else if (params->parsed()) {
      std::cout << lexilearn::count_parameters(checkpoint_path) << "\n";
    }
  } catch (const lexilearn::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const lexilearn::DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return 3;
  } catch (const lexilearn::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
