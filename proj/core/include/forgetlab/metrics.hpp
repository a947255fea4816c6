// Copyright (c) 2026, The forgetlab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "forgetlab/corpusgen.hpp"
#include "forgetlab/nanoformer.hpp"

namespace forgetlab::metrics {

using corpusgen::Sentence;

/// Corpus BLEU-4 with all the pieces needed to recompute the score.
struct BleuReport {
  double bleu = 0.0;
  std::array<double, 4> precisions{};  ///< smoothed p_1..p_4
  std::array<std::size_t, 4> matches{};
  std::array<std::size_t, 4> totals{};
  double brevity_penalty = 0.0;
  std::size_t hypothesis_length = 0;
  std::size_t reference_length = 0;

  std::string to_json() const;
};

/// Clipped corpus-level n-gram counts; for n >= 2 a zero match count is
/// smoothed to (0 + 1) / (total + 1). BP = exp(1 - r/c) when c < r.
/// Throws ContractError for an empty corpus or mismatched list lengths.
BleuReport corpus_bleu(const std::vector<Sentence>& hypotheses, const std::vector<Sentence>& references);
BleuReport corpus_bleu(const std::vector<std::vector<std::string>>& hypotheses,
                       const std::vector<std::vector<std::string>>& references);

/// Argmax decoding until EOS or max_len tokens; ties go to the lowest id.
Sentence greedy_decode(const nanoformer::Model& model, std::span<const corpusgen::TokenId> src_ids,
                       std::size_t max_len);
/// Batched greedy decoding; row i of the result decodes sources[i].
std::vector<Sentence> greedy_decode_all(const nanoformer::Model& model, const std::vector<Sentence>& sources,
                                        std::size_t max_len, std::size_t batch_size = 64);

struct EvalResult {
  double loss = 0.0;  ///< mean per-token cross-entropy
  BleuReport bleu;
};

/// Teacher-forced loss and greedy-decoding BLEU on a held-out set.
EvalResult evaluate(const nanoformer::Model& model, const std::vector<corpusgen::SentencePair>& pairs,
                    std::size_t batch_size = 64);
/// Token-weighted mean cross-entropy without decoding.
double mean_loss(const nanoformer::Model& model, const std::vector<corpusgen::SentencePair>& pairs,
                 std::size_t batch_size = 64);

}  // namespace forgetlab::metrics
