// Copyright (c) 2026, The forgetlab Authors
// SPDX-License-Identifier: Apache-2.0

// General-domain training and continual in-domain training under the
// module-frozen / module-updated strategies.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "forgetlab/corpusgen.hpp"
#include "forgetlab/nanoformer.hpp"

namespace forgetlab::trainer {

using corpusgen::SentencePair;
using nanoformer::Model;

/// Which parameters the optimizer may touch during a continual run.
struct FreezeSpec {
  enum class Mode { None, FreezeOnly, UpdateOnly };

  Mode mode = Mode::None;
  /// Canonical tags the mode refers to.
  std::set<std::string> tags;
  /// Group name the tags were resolved from, if any.
  std::string group;

  static FreezeSpec none() { return {}; }
  /// Resolves a group name from either grouping. Throws ConfigError listing
  /// the valid names when the group is unknown.
  static FreezeSpec freeze_only(const Model& model, const std::string& group,
                                const nanoformer::GroupingOptions& options = {});
  static FreezeSpec update_only(const Model& model, const std::string& group,
                                const nanoformer::GroupingOptions& options = {});
  static FreezeSpec from_tags(Mode mode, std::set<std::string> tags);

  /// Per-parameter flag in model order; validates the tag set.
  std::vector<bool> trainable(const Model& model) const;
  std::string describe() const;
};

std::string_view to_string(FreezeSpec::Mode mode);

struct EpochRecord;

struct TrainOptions {
  std::size_t epochs = 10;
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
  std::size_t batch_size = 32;
  std::size_t eval_each = 1;
  std::uint64_t seed = 1;
  /// Index into the eval sets used to pick the best epoch.
  std::size_t select_on = 0;
  /// Leave the model at the best-selected epoch instead of the last one.
  bool restore_best = false;
  /// Called after every epoch record is appended; progress reporting only.
  std::function<void(const std::string& phase, const EpochRecord&)> on_epoch;
};

struct EvalSet {
  std::string label;
  std::vector<SentencePair> pairs;
};

struct DomainScore {
  std::string label;
  double loss = 0.0;
  double bleu = 0.0;
};

struct EpochRecord {
  std::size_t epoch = 0;  ///< 0 is the evaluation before any update
  double train_loss = 0.0;
  std::vector<DomainScore> scores;
  double wall_seconds = 0.0;
};

struct TrainLog {
  std::string phase;
  std::string strategy;
  TrainOptions options;
  std::vector<EpochRecord> epochs;
  std::optional<std::size_t> best_epoch;

  const EpochRecord& last() const { return epochs.back(); }
  const EpochRecord& best() const;
  /// Score for `label` in a record; throws if absent.
  static double bleu_of(const EpochRecord& record, const std::string& label);

  /// One row per epoch. Wall time is left out so the file is reproducible.
  std::string to_csv() const;
  std::string to_json() const;
  /// epoch,wall_seconds
  std::string timing_csv() const;
};

/// Adam over a fixed subset of the model's parameters. Parameters outside
/// the subset are never read, written or given moment buffers.
class Adam {
 public:
  Adam(const Model& model, std::vector<bool> trainable, const TrainOptions& options);

  void step(Model& model);
  std::size_t steps() const { return steps_; }
  bool has_state(std::size_t param_index) const { return !first_[param_index].empty(); }

 private:
  std::vector<bool> trainable_;
  std::vector<std::vector<double>> first_;
  std::vector<std::vector<double>> second_;
  double lr_, beta1_, beta2_, eps_;
  std::size_t steps_ = 0;
};

/// Trains every parameter on `train_pairs`, evaluating each eval set every
/// `eval_each` epochs (and once before training).
TrainLog train(Model& model, const std::vector<SentencePair>& train_pairs, const std::vector<EvalSet>& evals,
               const TrainOptions& options);

/// Continues training on in-domain data with fresh optimizer state. Frozen
/// parameters end bit-identical to their values on entry.
TrainLog continual_train(Model& model, const std::vector<SentencePair>& in_domain, const FreezeSpec& freeze,
                         const std::vector<EvalSet>& evals, const TrainOptions& options);

struct SweepRow {
  std::string group;     ///< "-" for the vanilla baseline
  std::string strategy;  ///< none | freeze_only | update_only
  double general_before = 0.0;
  double in_domain_before = 0.0;
  double general_final = 0.0;
  double in_domain_final = 0.0;
  double general_best = 0.0;  ///< at the epoch with the best in-domain selection score
  double in_domain_best = 0.0;
  std::size_t best_epoch = 0;
  std::size_t epochs = 0;
};

struct SweepSetup {
  std::vector<SentencePair> in_domain_train;
  /// Labels of the general / in-domain report sets inside `evals`.
  std::string general_label;
  std::string in_domain_label;
  std::vector<EvalSet> evals;
  TrainOptions options;
  nanoformer::GroupingOptions grouping_options;
  std::size_t jobs = 1;
};

/// Vanilla baseline row first, then (group, freeze_only) and
/// (group, update_only) for every group, all from the same checkpoint.
std::vector<SweepRow> run_strategy_sweep(const Model& checkpoint, nanoformer::Grouping grouping,
                                         const SweepSetup& setup);
std::string sweep_to_csv(const std::vector<SweepRow>& rows);
std::string sweep_to_json(const std::vector<SweepRow>& rows);

}  // namespace forgetlab::trainer
