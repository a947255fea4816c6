// Copyright (c) 2026, The forgetlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "forgetlab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <json.hpp>

#include "forgetlab/errors.hpp"

namespace forgetlab::metrics {

using corpusgen::Batch;
using corpusgen::TokenId;

namespace {

template <typename Token>
using Ngram = std::vector<Token>;

template <typename Token>
std::map<Ngram<Token>, std::size_t> count_ngrams(const std::vector<Token>& s, std::size_t n) {
  std::map<Ngram<Token>, std::size_t> counts;
  for (std::size_t i = 0; i + n <= s.size(); ++i) ++counts[Ngram<Token>(s.begin() + i, s.begin() + i + n)];
  return counts;
}

template <typename Token>
BleuReport bleu_impl(const std::vector<std::vector<Token>>& hyps, const std::vector<std::vector<Token>>& refs) {
  if (hyps.empty()) throw ContractError("corpus_bleu: empty corpus");
  if (hyps.size() != refs.size()) {
    throw ContractError("corpus_bleu: " + std::to_string(hyps.size()) + " hypotheses for " +
                        std::to_string(refs.size()) + " references");
  }
  BleuReport r;
  for (std::size_t s = 0; s < hyps.size(); ++s) {
    r.hypothesis_length += hyps[s].size();
    r.reference_length += refs[s].size();
    for (std::size_t n = 1; n <= 4; ++n) {
      const auto h = count_ngrams(hyps[s], n);
      const auto ref = count_ngrams(refs[s], n);
      for (const auto& [gram, count] : h) {
        r.totals[n - 1] += count;
        auto it = ref.find(gram);
        if (it != ref.end()) r.matches[n - 1] += std::min(count, it->second);
      }
    }
  }
  const double c = static_cast<double>(r.hypothesis_length);
  const double ref_len = static_cast<double>(r.reference_length);
  r.brevity_penalty = c == 0.0 ? 0.0 : (c < ref_len ? std::exp(1.0 - ref_len / c) : 1.0);

  r.precisions[0] = r.totals[0] ? static_cast<double>(r.matches[0]) / static_cast<double>(r.totals[0]) : 0.0;
  for (std::size_t n = 1; n < 4; ++n) {
    const double m = static_cast<double>(r.matches[n]);
    const double t = static_cast<double>(r.totals[n]);
    r.precisions[n] = r.matches[n] == 0 ? 1.0 / (t + 1.0) : m / t;
  }
  if (r.matches[0] == 0 || c == 0.0) {
    r.bleu = 0.0;
    return r;
  }
  double log_sum = 0.0;
  for (double p : r.precisions) log_sum += std::log(p);
  r.bleu = 100.0 * r.brevity_penalty * std::exp(log_sum / 4.0);
  return r;
}

TokenId argmax_row(std::span<const double> hidden_row, const ndgrad::Tensor& w_o, const ndgrad::Tensor& b_o,
                   std::vector<double>& scratch) {
  const std::size_t d = w_o.rows(), vocab = w_o.cols();
  scratch.assign(b_o.values().begin(), b_o.values().end());
  for (std::size_t k = 0; k < d; ++k) {
    const double h = hidden_row[k];
    const double* w = w_o.values().data() + k * vocab;
    for (std::size_t v = 0; v < vocab; ++v) scratch[v] += h * w[v];
  }
  std::size_t best = 0;
  for (std::size_t v = 1; v < vocab; ++v) {
    if (scratch[v] > scratch[best]) best = v;
  }
  return static_cast<TokenId>(best);
}

}  // namespace

BleuReport corpus_bleu(const std::vector<Sentence>& hypotheses, const std::vector<Sentence>& references) {
  return bleu_impl(hypotheses, references);
}

BleuReport corpus_bleu(const std::vector<std::vector<std::string>>& hypotheses,
                       const std::vector<std::vector<std::string>>& references) {
  return bleu_impl(hypotheses, references);
}

std::string BleuReport::to_json() const {
  nlohmann::json j;
  j["bleu"] = bleu;
  j["precisions"] = precisions;
  j["matches"] = matches;
  j["totals"] = totals;
  j["brevity_penalty"] = brevity_penalty;
  j["hypothesis_length"] = hypothesis_length;
  j["reference_length"] = reference_length;
  return j.dump(2);
}

std::vector<Sentence> greedy_decode_all(const nanoformer::Model& model, const std::vector<Sentence>& sources,
                                        std::size_t max_len, std::size_t batch_size) {
  if (batch_size == 0) throw ContractError("greedy_decode_all: batch_size must be positive");
  const std::size_t steps = std::min(max_len, model.config().max_len);
  const auto& w_o = model.param("dec.-.Out.w_o");
  const auto& b_o = model.param("dec.-.Out.b_o");
  std::vector<Sentence> out(sources.size());
  std::vector<double> scratch;

  for (std::size_t start = 0; start < sources.size(); start += batch_size) {
    const std::size_t rows = std::min(batch_size, sources.size() - start);
    Batch src;
    src.size = rows;
    for (std::size_t r = 0; r < rows; ++r) src.src_len = std::max(src.src_len, sources[start + r].size());
    src.src.assign(rows * src.src_len, corpusgen::kPad);
    for (std::size_t r = 0; r < rows; ++r) {
      const Sentence& s = sources[start + r];
      if (s.empty()) throw ContractError("greedy_decode: empty source sentence");
      std::copy(s.begin(), s.end(), src.src.begin() + static_cast<std::ptrdiff_t>(r * src.src_len));
      src.src_lengths.push_back(s.size());
    }
    src.tgt_len = 1;
    src.tgt_in.assign(rows, corpusgen::kBos);
    src.tgt_out.assign(rows, corpusgen::kPad);
    src.tgt_lengths.assign(rows, 1);

    ndgrad::Graph encoder_graph(false);
    const ndgrad::Tensor& memory = nanoformer::encode(encoder_graph, model, src).value();

    std::vector<Sentence> prefix(rows, Sentence{corpusgen::kBos});
    std::vector<bool> done(rows, false);
    std::size_t remaining = rows;
    for (std::size_t t = 0; t < steps && remaining > 0; ++t) {
      Batch step = src;
      step.tgt_len = t + 1;
      step.tgt_in.clear();
      for (const Sentence& p : prefix) step.tgt_in.insert(step.tgt_in.end(), p.begin(), p.end());
      step.tgt_out.assign(rows * step.tgt_len, corpusgen::kPad);
      step.tgt_lengths.assign(rows, step.tgt_len);

      ndgrad::Graph g(false);
      const ndgrad::Var hidden = nanoformer::decode_states(g, model, step, g.input(memory));
      const auto hv = hidden.value().values();
      const std::size_t d = model.config().d_model;
      for (std::size_t r = 0; r < rows; ++r) {
        if (done[r]) {
          prefix[r].push_back(corpusgen::kPad);
          continue;
        }
        const TokenId next = argmax_row(hv.subspan((r * step.tgt_len + t) * d, d), w_o, b_o, scratch);
        if (next == corpusgen::kEos) {
          done[r] = true;
          --remaining;
          prefix[r].push_back(corpusgen::kPad);
        } else {
          out[start + r].push_back(next);
          prefix[r].push_back(next);
        }
      }
    }
  }
  return out;
}

Sentence greedy_decode(const nanoformer::Model& model, std::span<const TokenId> src_ids, std::size_t max_len) {
  return greedy_decode_all(model, {Sentence(src_ids.begin(), src_ids.end())}, max_len, 1).front();
}

double mean_loss(const nanoformer::Model& model, const std::vector<corpusgen::SentencePair>& pairs,
                 std::size_t batch_size) {
  if (pairs.empty()) throw ContractError("mean_loss: empty set");
  const corpusgen::BatchingOptions opts{batch_size, model.config().src_vocab, model.config().tgt_vocab};
  double weighted = 0.0;
  std::size_t tokens = 0;
  for (const Batch& b : corpusgen::encode_batches(pairs, opts)) {
    ndgrad::Graph g(false);
    const double loss = nanoformer::loss_on_batch(g, model, b).value().item();
    weighted += loss * static_cast<double>(b.target_tokens());
    tokens += b.target_tokens();
  }
  return weighted / static_cast<double>(tokens);
}

EvalResult evaluate(const nanoformer::Model& model, const std::vector<corpusgen::SentencePair>& pairs,
                    std::size_t batch_size) {
  EvalResult r;
  r.loss = mean_loss(model, pairs, batch_size);
  std::vector<Sentence> sources, references;
  sources.reserve(pairs.size());
  references.reserve(pairs.size());
  for (const auto& p : pairs) {
    sources.push_back(p.source);
    references.push_back(p.target);
  }
  r.bleu = corpus_bleu(greedy_decode_all(model, sources, model.config().max_len, batch_size), references);
  return r;
}

}  // namespace forgetlab::metrics
