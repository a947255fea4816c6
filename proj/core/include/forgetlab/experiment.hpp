// Copyright (c) 2026, The forgetlab Authors
// SPDX-License-Identifier: Apache-2.0

// Config-driven experiment runner behind the forgetlab command line.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "forgetlab/corpusgen.hpp"
#include "forgetlab/nanoformer.hpp"
#include "forgetlab/trainer.hpp"

namespace forgetlab::experiment {

struct DataConfig {
  std::uint64_t seed = 7;
  double overlap = 0.7;
  std::size_t vocab_size = 200;
  std::size_t min_len = 4;
  std::size_t max_len = 12;
  std::string general_reorder = "identity";
  std::string in_domain_reorder = "reverse";
  corpusgen::SplitSizes general{20000, 200, 200};
  corpusgen::SplitSizes in_domain{5000, 200, 200};
};

struct PhaseConfig {
  std::size_t epochs = 4;
  double lr = 1e-3;
  std::size_t batch_size = 32;
  std::size_t eval_each = 1;
};

struct AnalysisConfig {
  std::string grouping = "position";  ///< position | type | both
  bool layer_norm_with_host = true;
  std::size_t t_limit = 2000;
  std::vector<double> fractions;
  /// Matrices for heatmaps and erasure curves.
  std::vector<std::string> matrices;
  /// Modules averaged by the drift report; empty means every parameter.
  std::vector<std::string> drift_modules;
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::string output_dir = "runs";
  nanoformer::ModelConfig model;  ///< vocab sizes are filled from the data
  DataConfig data;
  PhaseConfig training;
  PhaseConfig continual{30, 1e-3, 16, 1};
  AnalysisConfig analysis;
  /// Optional pre-trained checkpoints that skip the matching training phase.
  std::string general_checkpoint;
  std::string continual_checkpoint;
};

/// Parses a JSON document, filling defaults. Unknown keys, wrong types and
/// invalid values raise ConfigError.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::filesystem::path& path);
/// Every field, defaults included, as pretty JSON.
std::string dump_config(const ExperimentConfig& config);
/// FNV-1a 64 of dump_config, as 16 hex digits.
std::string config_hash(const ExperimentConfig& config);

struct RunOptions {
  std::size_t jobs = 1;
  bool overwrite = false;
  /// Progress lines go here when set (stderr in the CLI).
  std::ostream* log = nullptr;
};

/// output_dir/<command>/run-<UTC timestamp>[-n], or output_dir/<command>/latest
/// (emptied first) with overwrite.
std::filesystem::path make_run_dir(const ExperimentConfig& config, const std::string& command, bool overwrite);

/// Data and models shared by the subcommands.
struct Workspace {
  corpusgen::DomainPair domains;
  corpusgen::ParallelCorpus general;
  corpusgen::ParallelCorpus in_domain;

  std::vector<trainer::EvalSet> eval_sets() const;
};

Workspace build_workspace(const ExperimentConfig& config);

const std::vector<std::string>& commands();

/// Each returns the run directory it wrote.
std::filesystem::path cmd_forgetting(const ExperimentConfig& config, const RunOptions& options);
std::filesystem::path cmd_modules(const ExperimentConfig& config, const RunOptions& options);
std::filesystem::path cmd_importance(const ExperimentConfig& config, const RunOptions& options);
std::filesystem::path cmd_erasure(const ExperimentConfig& config, const RunOptions& options);
std::filesystem::path cmd_drift(const ExperimentConfig& config, const RunOptions& options);

/// Dispatches by name; ConfigError for an unknown command.
std::filesystem::path run_command(const std::string& command, const ExperimentConfig& config,
                                  const RunOptions& options);

}  // namespace forgetlab::experiment
