// Copyright (c) 2026, The forgetlab Authors
// SPDX-License-Identifier: Apache-2.0

// A small encoder-decoder transformer whose parameter matrices are addressed
// by (side, layer, sublayer type, role) so that freezing and attribution
// experiments can select them by position or by type.

#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "forgetlab/corpusgen.hpp"
#include "forgetlab/ndgrad.hpp"

namespace forgetlab::nanoformer {

using ndgrad::Tensor;

struct ModelConfig {
  std::size_t num_layers = 2;
  std::size_t d_model = 32;
  std::size_t d_ffn = 64;
  std::size_t num_heads = 4;
  std::size_t src_vocab = 0;
  std::size_t tgt_vocab = 0;
  std::size_t max_len = 16;
  double dropout = 0.0;
  std::uint64_t seed = 1;
  /// Pre-norm residual blocks with a final norm per stack. false selects the
  /// original post-norm arrangement (no final norm).
  bool pre_norm = true;

  /// Tiny analysis preset; pass 6 layers for position-grouping parity runs.
  static ModelConfig tiny(std::size_t src_vocab, std::size_t tgt_vocab, std::size_t layers = 2);
  /// Throws ConfigError on the first invalid field.
  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

enum class Side { Encoder, Decoder };
enum class Sublayer { Emb, SA, CA, FFN, LN, Out };

std::string_view to_string(Side side);
std::string_view to_string(Sublayer sublayer);

/// Canonical address of one parameter tensor. Layer-norm tags name their
/// host in the role ("sa.gain", "ffn.bias", "final.gain", ...).
struct ParamTag {
  Side side = Side::Encoder;
  std::optional<std::size_t> layer;
  Sublayer sublayer = Sublayer::Emb;
  std::string role;

  /// "<enc|dec>.<layer|->.<Sublayer>.<role>", e.g. "dec.1.CA.w_q".
  std::string canonical() const;
  static ParamTag parse(std::string_view text);
  /// The sublayer a layer-norm tag belongs to; the tag's own sublayer otherwise.
  Sublayer host() const;

  auto operator<=>(const ParamTag&) const = default;
};

struct NamedParam {
  ParamTag tag;
  Tensor tensor;
};

class Model {
 public:
  Model() = default;
  /// Deterministic seeded initialization.
  explicit Model(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }

  std::vector<NamedParam>& params() { return params_; }
  const std::vector<NamedParam>& params() const { return params_; }

  std::optional<std::size_t> find(const ParamTag& tag) const;
  std::optional<std::size_t> find(std::string_view canonical) const;
  /// Throws ConfigError for unknown tags.
  std::size_t index_of(std::string_view canonical) const;
  Tensor& param(std::string_view canonical) { return params_[index_of(canonical)].tensor; }
  const Tensor& param(std::string_view canonical) const { return params_[index_of(canonical)].tensor; }

  std::size_t parameter_count() const;
  void zero_grad();
  void set_requires_grad(bool on);

 private:
  ModelConfig config_;
  std::vector<NamedParam> params_;
};

Model build_model(const ModelConfig& config);
std::size_t expected_parameter_count(const ModelConfig& config);
/// True when configs match and every parameter is bit-identical.
bool bitwise_equal(const Model& a, const Model& b);

struct ForwardOptions {
  bool train = false;  ///< enables dropout
  std::uint64_t dropout_seed = 0;
};

struct ForwardResult {
  ndgrad::Var logits;  ///< [batch*tgt_len x tgt_vocab]
  ndgrad::Var hidden;  ///< decoder states fed to the output layer
};

/// Teacher-forced forward pass. Parameters are bound for gradient
/// accumulation when the graph records gradients.
ForwardResult forward(ndgrad::Graph& graph, Model& model, const corpusgen::Batch& batch,
                      const ForwardOptions& options = {});
/// Read-only forward pass; safe to run concurrently on a shared model.
ForwardResult forward(ndgrad::Graph& graph, const Model& model, const corpusgen::Batch& batch,
                      const ForwardOptions& options = {});
/// Logits for a single sentence: row i scores the token after tgt_prefix[0..i].
Tensor forward(const Model& model, std::span<const corpusgen::TokenId> src_ids,
               std::span<const corpusgen::TokenId> tgt_prefix_ids);

/// Encoder half of the read-only pass: final source states for the batch.
ndgrad::Var encode(ndgrad::Graph& graph, const Model& model, const corpusgen::Batch& batch);
/// Decoder half: states fed to the output layer, given encoder states that
/// were computed for the same sources (possibly on another graph).
ndgrad::Var decode_states(ndgrad::Graph& graph, const Model& model, const corpusgen::Batch& batch,
                          ndgrad::Var memory);

/// Mean per-token cross-entropy over non-pad targets.
ndgrad::Var loss_on_batch(ndgrad::Graph& graph, Model& model, const corpusgen::Batch& batch,
                          const ForwardOptions& options = {});
ndgrad::Var loss_on_batch(ndgrad::Graph& graph, const Model& model, const corpusgen::Batch& batch);

enum class Grouping { Position, Type };

struct ParamGroup {
  std::string name;
  std::vector<ParamTag> tags;
};

struct GroupingOptions {
  /// Attach layer-norm tags to their host sublayer's group. When false they
  /// are left out of every group.
  bool layer_norm_with_host = true;
};

/// Position: Enc_01, Enc_23, ..., Dec_01, ..., Dec_out (embeddings are not
/// part of any position group). Odd layer counts end in a singleton group
/// such as "Enc_4". Type: Emb(enc), Emb(dec), SA(enc), SA(dec), CA,
/// FFN(enc), FFN(dec), Out.
std::vector<ParamGroup> enumerate_groups(const Model& model, Grouping grouping, const GroupingOptions& options = {});
std::string_view to_string(Grouping grouping);
Grouping parse_grouping(std::string_view text);

}  // namespace forgetlab::nanoformer
