#pragma once

// Configuration-driven experiment commands. A config is JSON; every command
// writes into <output root>/<output_dir>/<command>-<config hash>/.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "unlearn/corpus.hpp"
#include "unlearn/hints.hpp"
#include "unlearn/minmin.hpp"
#include "unlearn/models.hpp"
#include "unlearn/training.hpp"

namespace unlearn {

/// Environment variable overriding the output root (default: current directory).
inline constexpr const char* kOutputRootEnv = "UNLEARN_OUTPUT_ROOT";

struct DataConfig {
  std::string source = "synthetic";  ///< "synthetic" or "jsonl"
  SyntheticSpec synthetic;
  std::string train_path;
  std::string validation_path;
  std::string test_path;
  int num_classes = 0;  ///< jsonl only; 0 infers from labels
};

struct ModelConfig {
  std::string kind = "classifier";  ///< "classifier" or "span"
  std::size_t embedding_dim = 32;
  std::size_t hidden = 32;
  Encoder encoder = Encoder::recurrent;
  Pooling pooling = Pooling::concat;
  std::size_t max_span_length = 15;
  std::string pretrained;  ///< word-vector text file, optional
};

struct PartialConfig {
  double base_fraction = 0.8;
  double added_fraction = 0.2;
  std::size_t repeats = 3;
};

struct ExperimentConfig {
  TaskKind task = TaskKind::classification;
  std::uint64_t seed = 1;
  std::string output_dir = "runs";
  DataConfig data;
  ModelConfig model;
  TrainConfig train;
  MinMinConfig minmin;
  std::string similarity_source = "model";  ///< "model" or "pretrained"
  std::optional<HintSpec> hints;
  PartialConfig partial;
  std::size_t analysis_k = 5;
  Split eval_split = Split::test;
  std::string checkpoint;  ///< input for eval
  std::string noise;       ///< noise set file (train, eval) or directory (analyze)

  /// Throws ConfigError naming the offending field.
  void validate() const;
  nlohmann::json to_json() const;
  static ExperimentConfig from_json(const nlohmann::json& j);
};

/// Complete default config for a task, every key present.
nlohmann::json default_config_json(TaskKind task);

/// Applies "a.b.c=value"; the value is parsed as JSON, else taken as a string.
/// Unknown paths are config errors.
void apply_override(nlohmann::json& config, const std::string& assignment);

/// Defaults, then the file (if any), then the overrides in order.
ExperimentConfig load_config(const std::optional<std::filesystem::path>& file,
                             const std::vector<std::string>& overrides = {});

/// 16 hex digits of FNV-1a over the canonical resolved config.
std::string config_hash(const ExperimentConfig& config);
std::filesystem::path output_root();
std::filesystem::path run_directory(const ExperimentConfig& config, const std::string& command);

struct CommandResult {
  std::filesystem::path directory;
  nlohmann::json summary;
};

CommandResult cmd_gen_data(const ExperimentConfig& config);
CommandResult cmd_train(const ExperimentConfig& config);
CommandResult cmd_minmin(const ExperimentConfig& config);
CommandResult cmd_inject(const ExperimentConfig& config);
CommandResult cmd_analyze(const ExperimentConfig& config);
CommandResult cmd_eval(const ExperimentConfig& config);
CommandResult cmd_partial(const ExperimentConfig& config);

/// Dispatches by command name ("gen-data", "train", ...).
CommandResult run_command(const std::string& command, const ExperimentConfig& config);

struct PartialResult {
  std::size_t base_size = 0;
  std::size_t added_size = 0;
  double base = 0.0;     ///< test metric, base data only
  double partial = 0.0;  ///< base + clean added data
  double unlearn = 0.0;  ///< base + hinted added data
  double delta_partial() const { return partial - base; }
  double delta_unlearn() const { return unlearn - base; }
};

/// Trains the three models of the added-data comparison on the configured corpus.
PartialResult partial_delta_experiment(const ExperimentConfig& config);

}  // namespace unlearn
