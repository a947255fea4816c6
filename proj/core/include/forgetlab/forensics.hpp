// Copyright (c) 2026, The forgetlab Authors
// SPDX-License-Identifier: Apache-2.0

// Parameter attribution: first-order Taylor importance, erasure sweeps,
// heatmaps and importance-ranked drift between two checkpoints.

#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "forgetlab/checkpoint.hpp"
#include "forgetlab/corpusgen.hpp"
#include "forgetlab/nanoformer.hpp"

namespace forgetlab::forensics {

using corpusgen::SentencePair;
using nanoformer::Model;
using ndgrad::Tensor;

/// Mean |dL/dw * w| per weight, one tensor per model parameter.
struct ImportanceMap {
  std::vector<std::string> tags;  ///< canonical, in model order
  std::vector<Tensor> scores;
  std::size_t examples = 0;
  std::string domain;

  const Tensor& at(const std::string& tag) const;
  /// Throws ContractError if shapes or tags differ from the model.
  void check_matches(const Model& model) const;

  checkpoint::Section to_section() const;
  static ImportanceMap from_section(const checkpoint::Section& section);
};

struct ImportanceOptions {
  std::size_t t_limit = 2000;
  /// Multiplies every per-sentence loss before backpropagation.
  double loss_scale = 1.0;
};

/// Per-sentence (batch of one) accumulation over the first t_limit pairs.
/// Throws ConfigError when t_limit < 1 and NumericError on a non-finite
/// gradient, naming the sentence index.
ImportanceMap accumulate_importance(const Model& model, const std::vector<SentencePair>& corpus,
                                    const ImportanceOptions& options, const std::string& domain);

/// Saves the model parameters and the map in one container.
void save_importance(const std::filesystem::path& path, const Model& model, const ImportanceMap& map);
ImportanceMap load_importance(const std::filesystem::path& path);

enum class Ordering { Descending, Ascending };
std::string_view to_string(Ordering ordering);

/// Flat indices zeroed at fraction f: the floor(f*K) highest (descending)
/// or lowest (ascending) scores, ties broken by smaller flat index first.
std::vector<std::size_t> erasure_set(const Tensor& scores, Ordering ordering, double fraction);

struct ErasurePoint {
  double fraction = 0.0;
  std::size_t erased = 0;
  double bleu = 0.0;
  double loss = 0.0;
};

struct ErasureCurve {
  std::string tag;
  Ordering ordering = Ordering::Descending;
  std::string eval_set;
  std::vector<ErasurePoint> points;

  /// Mean BLEU over the points with 0 < fraction < 1.
  double interior_mean_bleu() const;
};

std::vector<double> default_fractions();

/// Evaluates masked copies of `model`; the input is never modified.
/// Fractions must be strictly increasing, start at 0 and lie in [0, 1].
ErasureCurve erase_and_eval(const Model& model, const ImportanceMap& importance, const std::string& tag,
                            Ordering ordering, const std::vector<double>& fractions,
                            const std::vector<SentencePair>& test_set, const std::string& eval_set,
                            std::size_t jobs = 1);

std::string curves_to_csv(const std::vector<ErasureCurve>& curves);
std::string curves_to_json(const std::vector<ErasureCurve>& curves);

/// Grayscale PNG (one pixel per weight, row-major, min-max scaled, lighter
/// is more important; a constant map is mid-gray 128) plus a CSV of raw
/// scores. `comments` go to the CSV as "# " lines and to a PNG text chunk.
void export_heatmap(const ImportanceMap& importance, const std::string& tag, const std::filesystem::path& png_path,
                    const std::filesystem::path& csv_path, const std::vector<std::string>& comments = {});
/// Reads a CSV written by export_heatmap, skipping comment lines.
Tensor read_heatmap_csv(const std::filesystem::path& csv_path);
/// Gray level of each pixel as written to the PNG.
std::vector<unsigned char> heatmap_pixels(const Tensor& scores);

struct DriftReport {
  std::array<double, 10> distance{};  ///< decile 0 holds the most important 10%
  std::size_t modules = 0;
  std::vector<std::string> tags;

  std::string to_csv() const;
  std::string to_json() const;
};

/// Sizes of the ten ranked groups for a K-element module.
std::array<std::size_t, 10> decile_sizes(std::size_t k);
/// Flat indices sorted by descending score, ties by flat index.
std::vector<std::size_t> rank_descending(const Tensor& scores);

/// Mean |w_G - w_I| per importance decile, averaged over `tags` (all model
/// parameters when empty). Throws ContractError when configs differ.
DriftReport decile_drift(const Model& model_g, const Model& model_i, const ImportanceMap& importance_g,
                         const std::vector<std::string>& tags = {});

/// Spearman rank correlation with average ranks for ties.
double spearman(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace forgetlab::forensics
