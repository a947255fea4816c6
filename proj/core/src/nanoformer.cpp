// Copyright (c) 2026, The forgetlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "forgetlab/nanoformer.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "forgetlab/errors.hpp"
#include "forgetlab/rng.hpp"

namespace forgetlab::nanoformer {

using corpusgen::Batch;
using corpusgen::TokenId;
using ndgrad::Graph;
using ndgrad::Shape;
using ndgrad::Var;

// ---- config --------------------------------------------------------------

ModelConfig ModelConfig::tiny(std::size_t src_vocab, std::size_t tgt_vocab, std::size_t layers) {
  ModelConfig c;
  c.num_layers = layers;
  c.d_model = 32;
  c.d_ffn = 64;
  c.num_heads = 4;
  c.src_vocab = src_vocab;
  c.tgt_vocab = tgt_vocab;
  return c;
}

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw ConfigError(std::string("model.") + name + " must be >= 1");
  };
  positive(num_layers, "num_layers");
  positive(d_model, "d_model");
  positive(d_ffn, "d_ffn");
  positive(num_heads, "num_heads");
  positive(src_vocab, "src_vocab");
  positive(tgt_vocab, "tgt_vocab");
  positive(max_len, "max_len");
  if (d_model % num_heads != 0) {
    throw ConfigError("model.d_model (" + std::to_string(d_model) + ") must be divisible by model.num_heads (" +
                      std::to_string(num_heads) + ")");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("model.dropout must lie in [0, 1)");
  if (static_cast<std::size_t>(corpusgen::kFirstWord) >= std::min(src_vocab, tgt_vocab)) {
    throw ConfigError("vocabularies must hold the reserved PAD/BOS/EOS ids and at least one word");
  }
}

// ---- tags ----------------------------------------------------------------

std::string_view to_string(Side side) { return side == Side::Encoder ? "enc" : "dec"; }

std::string_view to_string(Sublayer sublayer) {
  switch (sublayer) {
    case Sublayer::Emb:
      return "Emb";
    case Sublayer::SA:
      return "SA";
    case Sublayer::CA:
      return "CA";
    case Sublayer::FFN:
      return "FFN";
    case Sublayer::LN:
      return "LN";
    case Sublayer::Out:
      return "Out";
  }
  return "?";
}

std::string ParamTag::canonical() const {
  std::string s(to_string(side));
  s += '.';
  s += layer ? std::to_string(*layer) : std::string("-");
  s += '.';
  s += to_string(sublayer);
  s += '.';
  s += role;
  return s;
}

ParamTag ParamTag::parse(std::string_view text) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  for (int i = 0; i < 3; ++i) {
    const auto dot = text.find('.', start);
    if (dot == std::string_view::npos) throw ConfigError("malformed parameter tag '" + std::string(text) + "'");
    fields.push_back(text.substr(start, dot - start));
    start = dot + 1;
  }
  ParamTag tag;
  if (fields[0] == "enc") {
    tag.side = Side::Encoder;
  } else if (fields[0] == "dec") {
    tag.side = Side::Decoder;
  } else {
    throw ConfigError("malformed parameter tag '" + std::string(text) + "': side must be enc or dec");
  }
  if (fields[1] != "-") {
    if (fields[1].empty() ||
        !std::all_of(fields[1].begin(), fields[1].end(), [](char c) { return c >= '0' && c <= '9'; })) {
      throw ConfigError("malformed parameter tag '" + std::string(text) + "': bad layer index");
    }
    tag.layer = std::stoul(std::string(fields[1]));
  }
  static const std::map<std::string_view, Sublayer> kSublayers = {
      {"Emb", Sublayer::Emb}, {"SA", Sublayer::SA},   {"CA", Sublayer::CA},
      {"FFN", Sublayer::FFN}, {"LN", Sublayer::LN}, {"Out", Sublayer::Out}};
  auto it = kSublayers.find(fields[2]);
  if (it == kSublayers.end()) {
    throw ConfigError("malformed parameter tag '" + std::string(text) + "': unknown sublayer");
  }
  tag.sublayer = it->second;
  tag.role = std::string(text.substr(start));
  if (tag.role.empty()) throw ConfigError("malformed parameter tag '" + std::string(text) + "': empty role");
  return tag;
}

Sublayer ParamTag::host() const {
  if (sublayer != Sublayer::LN) return sublayer;
  if (role.starts_with("sa.")) return Sublayer::SA;
  if (role.starts_with("ca.")) return Sublayer::CA;
  return Sublayer::FFN;  // "ffn." and the stack-final norm
}

// ---- model ---------------------------------------------------------------

namespace {

struct ParamSpec {
  ParamTag tag;
  Shape shape;
  enum class Init { Xavier, Zero, One } init;
  double bound_scale = 1.0;
};

std::vector<ParamSpec> layout(const ModelConfig& c) {
  std::vector<ParamSpec> specs;
  const std::size_t d = c.d_model, f = c.d_ffn;
  auto add = [&specs](Side side, std::optional<std::size_t> layer, Sublayer sub, std::string role, Shape shape,
                      ParamSpec::Init init, double bound_scale = 1.0) {
    specs.push_back({ParamTag{side, layer, sub, std::move(role)}, std::move(shape), init, bound_scale});
  };
  using I = ParamSpec::Init;
  auto attention = [&](Side side, std::size_t l, Sublayer sub) {
    for (const char* p : {"q", "k", "v", "o"}) {
      add(side, l, sub, std::string("w_") + p, {d, d}, I::Xavier);
      add(side, l, sub, std::string("b_") + p, {d}, I::Zero);
    }
  };
  auto norm = [&](Side side, std::optional<std::size_t> l, const std::string& host) {
    add(side, l, Sublayer::LN, host + ".gain", {d}, I::One);
    add(side, l, Sublayer::LN, host + ".bias", {d}, I::Zero);
  };
  auto ffn = [&](Side side, std::size_t l) {
    add(side, l, Sublayer::FFN, "w_1", {d, f}, I::Xavier);
    add(side, l, Sublayer::FFN, "b_1", {f}, I::Zero);
    add(side, l, Sublayer::FFN, "w_2", {f, d}, I::Xavier);
    add(side, l, Sublayer::FFN, "b_2", {d}, I::Zero);
  };

  add(Side::Encoder, std::nullopt, Sublayer::Emb, "token", {c.src_vocab, d}, I::Xavier);
  add(Side::Encoder, std::nullopt, Sublayer::Emb, "position", {c.max_len, d}, I::Xavier);
  for (std::size_t l = 0; l < c.num_layers; ++l) {
    attention(Side::Encoder, l, Sublayer::SA);
    norm(Side::Encoder, l, "sa");
    ffn(Side::Encoder, l);
    norm(Side::Encoder, l, "ffn");
  }
  if (c.pre_norm) norm(Side::Encoder, std::nullopt, "final");

  add(Side::Decoder, std::nullopt, Sublayer::Emb, "token", {c.tgt_vocab, d}, I::Xavier);
  add(Side::Decoder, std::nullopt, Sublayer::Emb, "position", {c.max_len, d}, I::Xavier);
  for (std::size_t l = 0; l < c.num_layers; ++l) {
    attention(Side::Decoder, l, Sublayer::SA);
    norm(Side::Decoder, l, "sa");
    attention(Side::Decoder, l, Sublayer::CA);
    norm(Side::Decoder, l, "ca");
    ffn(Side::Decoder, l);
    norm(Side::Decoder, l, "ffn");
  }
  if (c.pre_norm) norm(Side::Decoder, std::nullopt, "final");

  // Half the Xavier bound keeps the untrained output distribution close to
  // uniform at small d_model.
  add(Side::Decoder, std::nullopt, Sublayer::Out, "w_o", {d, c.tgt_vocab}, I::Xavier, 0.5);
  add(Side::Decoder, std::nullopt, Sublayer::Out, "b_o", {c.tgt_vocab}, I::Zero);
  return specs;
}

}  // namespace

Model::Model(const ModelConfig& config) : config_(config) {
  config_.validate();
  Rng rng(mix_seed(config_.seed, 0x1417));
  for (ParamSpec& spec : layout(config_)) {
    Tensor t(spec.shape);
    switch (spec.init) {
      case ParamSpec::Init::Xavier: {
        const double fan_in = static_cast<double>(spec.shape[0]);
        const double fan_out = static_cast<double>(spec.shape[1]);
        const double bound = spec.bound_scale * std::sqrt(6.0 / (fan_in + fan_out));
        for (double& v : t.values()) v = rng.uniform(-bound, bound);
        break;
      }
      case ParamSpec::Init::Zero:
        break;
      case ParamSpec::Init::One:
        std::fill(t.values().begin(), t.values().end(), 1.0);
        break;
    }
    t.set_requires_grad(true);
    params_.push_back({std::move(spec.tag), std::move(t)});
  }
}

Model build_model(const ModelConfig& config) { return Model(config); }

std::optional<std::size_t> Model::find(const ParamTag& tag) const {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].tag == tag) return i;
  }
  return std::nullopt;
}

std::optional<std::size_t> Model::find(std::string_view canonical) const {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].tag.canonical() == canonical) return i;
  }
  return std::nullopt;
}

std::size_t Model::index_of(std::string_view canonical) const {
  if (auto i = find(canonical)) return *i;
  throw ConfigError("unknown parameter tag '" + std::string(canonical) + "'");
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.numel();
  return n;
}

void Model::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

void Model::set_requires_grad(bool on) {
  for (auto& p : params_) p.tensor.set_requires_grad(on);
}

std::size_t expected_parameter_count(const ModelConfig& c) {
  const std::size_t d = c.d_model, f = c.d_ffn;
  const std::size_t attn = 4 * d * d + 4 * d;
  const std::size_t ffn = d * f + f + f * d + d;
  const std::size_t norm = 2 * d;
  const std::size_t enc_layer = attn + ffn + 2 * norm;
  const std::size_t dec_layer = 2 * attn + ffn + 3 * norm;
  const std::size_t finals = c.pre_norm ? 2 * norm : 0;
  return (c.src_vocab + c.max_len) * d + (c.tgt_vocab + c.max_len) * d + c.num_layers * (enc_layer + dec_layer) +
         finals + d * c.tgt_vocab + c.tgt_vocab;
}

bool bitwise_equal(const Model& a, const Model& b) {
  if (!(a.config() == b.config()) || a.params().size() != b.params().size()) return false;
  for (std::size_t i = 0; i < a.params().size(); ++i) {
    if (a.params()[i].tag != b.params()[i].tag) return false;
    if (!ndgrad::bitwise_equal(a.params()[i].tensor, b.params()[i].tensor)) return false;
  }
  return true;
}

// ---- forward -------------------------------------------------------------

namespace {

// Binds parameters lazily so only the tensors a pass touches enter the tape.
template <typename ModelRef>
class Binder {
 public:
  Binder(Graph& g, ModelRef& model) : g_(g), model_(model), ids_(model.params().size()) {
    for (std::size_t i = 0; i < model.params().size(); ++i) index_[model.params()[i].tag.canonical()] = i;
  }

  Var operator()(const std::string& canonical) {
    auto it = index_.find(canonical);
    if (it == index_.end()) throw ContractError("model has no parameter '" + canonical + "'");
    auto& slot = ids_[it->second];
    if (!slot) {
      auto& t = model_.params()[it->second].tensor;
      if constexpr (std::is_const_v<ModelRef>) {
        slot = g_.input(t);
      } else {
        slot = g_.grad_enabled() ? g_.parameter(t) : g_.input(t);
      }
    }
    return *slot;
  }

 private:
  Graph& g_;
  ModelRef& model_;
  std::map<std::string, std::size_t> index_;
  std::vector<std::optional<Var>> ids_;
};

std::string key(Side side, std::optional<std::size_t> layer, Sublayer sub, const std::string& role) {
  return ParamTag{side, layer, sub, role}.canonical();
}

template <typename ModelRef>
class Runner {
 public:
  Runner(Graph& g, ModelRef& model, const ForwardOptions& options)
      : g_(g), cfg_(model.config()), bind_(g, model), options_(options) {}

  ForwardResult run(const Batch& batch) {
    check(batch);
    const Var memory = encode(batch);
    const Var hidden = decode(batch, memory);
    Var logits = ndgrad::add_row(ndgrad::matmul(hidden, bind_(key(Side::Decoder, {}, Sublayer::Out, "w_o"))),
                                 bind_(key(Side::Decoder, {}, Sublayer::Out, "b_o")));
    return {logits, hidden};
  }

  void check(const Batch& batch) const {
    if (batch.size == 0) throw ContractError("forward: empty batch");
    if (batch.src_len > cfg_.max_len || batch.tgt_len > cfg_.max_len) {
      throw ContractError("forward: sequence length " + std::to_string(std::max(batch.src_len, batch.tgt_len)) +
                          " exceeds max_len " + std::to_string(cfg_.max_len));
    }
  }

  Var encode(const Batch& batch) {
    Var x = embed(Side::Encoder, batch.src, batch.size, batch.src_len);
    const ndgrad::AttentionMask self{batch.size, batch.src_len, batch.src_len, batch.src_lengths, false};
    for (std::size_t l = 0; l < cfg_.num_layers; ++l) {
      x = residual(Side::Encoder, l, "sa", x,
                   [&](Var h) { return multi_head(Side::Encoder, l, Sublayer::SA, h, h, self); });
      x = residual(Side::Encoder, l, "ffn", x, [&](Var h) { return feed_forward(Side::Encoder, l, h); });
    }
    if (cfg_.pre_norm) x = norm(Side::Encoder, std::nullopt, "final", x);
    return x;
  }

  Var decode(const Batch& batch, Var memory) {
    Var y = embed(Side::Decoder, batch.tgt_in, batch.size, batch.tgt_len);
    const ndgrad::AttentionMask self{batch.size, batch.tgt_len, batch.tgt_len, batch.tgt_lengths, true};
    const ndgrad::AttentionMask cross{batch.size, batch.tgt_len, batch.src_len, batch.src_lengths, false};
    for (std::size_t l = 0; l < cfg_.num_layers; ++l) {
      y = residual(Side::Decoder, l, "sa", y,
                   [&](Var h) { return multi_head(Side::Decoder, l, Sublayer::SA, h, h, self); });
      y = residual(Side::Decoder, l, "ca", y,
                   [&](Var h) { return multi_head(Side::Decoder, l, Sublayer::CA, h, memory, cross); });
      y = residual(Side::Decoder, l, "ffn", y, [&](Var h) { return feed_forward(Side::Decoder, l, h); });
    }
    if (cfg_.pre_norm) y = norm(Side::Decoder, std::nullopt, "final", y);
    return y;
  }

 private:
  Var drop(Var x) {
    if (!options_.train || cfg_.dropout == 0.0) return x;
    return ndgrad::dropout(x, cfg_.dropout, mix_seed(options_.dropout_seed, ++dropout_calls_));
  }

  Var embed(Side side, std::span<const TokenId> ids, std::size_t rows, std::size_t len) {
    std::vector<TokenId> positions(rows * len);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < len; ++j) positions[r * len + j] = static_cast<TokenId>(j);
    }
    Var tok = ndgrad::embedding(bind_(key(side, {}, Sublayer::Emb, "token")), ids);
    Var pos = ndgrad::embedding(bind_(key(side, {}, Sublayer::Emb, "position")), positions);
    return drop(ndgrad::add(tok, pos));
  }

  Var norm(Side side, std::optional<std::size_t> layer, const std::string& host, Var x) {
    return ndgrad::layer_norm(x, bind_(key(side, layer, Sublayer::LN, host + ".gain")),
                              bind_(key(side, layer, Sublayer::LN, host + ".bias")));
  }

  Var linear(Var x, const std::string& w, const std::string& b) {
    return ndgrad::add_row(ndgrad::matmul(x, bind_(w)), bind_(b));
  }

  Var multi_head(Side side, std::size_t layer, Sublayer sub, Var queries, Var keys_values,
                 const ndgrad::AttentionMask& mask) {
    auto name = [&](const char* role) { return key(side, layer, sub, role); };
    const Var q = linear(queries, name("w_q"), name("b_q"));
    const Var k = linear(keys_values, name("w_k"), name("b_k"));
    const Var v = linear(keys_values, name("w_v"), name("b_v"));
    const auto qh = ndgrad::split_cols(q, cfg_.num_heads);
    const auto kh = ndgrad::split_cols(k, cfg_.num_heads);
    const auto vh = ndgrad::split_cols(v, cfg_.num_heads);
    std::vector<Var> heads;
    heads.reserve(cfg_.num_heads);
    for (std::size_t h = 0; h < cfg_.num_heads; ++h) heads.push_back(ndgrad::attention(qh[h], kh[h], vh[h], mask));
    return linear(ndgrad::concat_cols(heads), name("w_o"), name("b_o"));
  }

  Var feed_forward(Side side, std::size_t layer, Var x) {
    auto name = [&](const char* role) { return key(side, layer, Sublayer::FFN, role); };
    return linear(ndgrad::relu(linear(x, name("w_1"), name("b_1"))), name("w_2"), name("b_2"));
  }

  // Residual sublayer in either norm arrangement.
  template <typename F>
  Var residual(Side side, std::size_t layer, const std::string& host, Var x, F&& body) {
    if (cfg_.pre_norm) return ndgrad::add(x, drop(body(norm(side, layer, host, x))));
    return norm(side, layer, host, ndgrad::add(x, drop(body(x))));
  }

  Graph& g_;
  const ModelConfig& cfg_;
  Binder<ModelRef> bind_;
  ForwardOptions options_;
  std::uint64_t dropout_calls_ = 0;
};

}  // namespace

ForwardResult forward(Graph& graph, Model& model, const Batch& batch, const ForwardOptions& options) {
  return Runner<Model>(graph, model, options).run(batch);
}

ForwardResult forward(Graph& graph, const Model& model, const Batch& batch, const ForwardOptions& options) {
  return Runner<const Model>(graph, model, options).run(batch);
}

Tensor forward(const Model& model, std::span<const TokenId> src_ids, std::span<const TokenId> tgt_prefix_ids) {
  if (src_ids.empty() || tgt_prefix_ids.empty()) throw ContractError("forward: empty source or target prefix");
  Batch b;
  b.size = 1;
  b.src_len = src_ids.size();
  b.tgt_len = tgt_prefix_ids.size();
  b.src.assign(src_ids.begin(), src_ids.end());
  b.tgt_in.assign(tgt_prefix_ids.begin(), tgt_prefix_ids.end());
  b.tgt_out.assign(b.tgt_len, corpusgen::kPad);
  b.src_lengths = {b.src_len};
  b.tgt_lengths = {b.tgt_len};
  Graph g(false);
  return forward(g, model, b).logits.value();
}

Var encode(Graph& graph, const Model& model, const Batch& batch) {
  Runner<const Model> runner(graph, model, {});
  runner.check(batch);
  return runner.encode(batch);
}

Var decode_states(Graph& graph, const Model& model, const Batch& batch, Var memory) {
  Runner<const Model> runner(graph, model, {});
  runner.check(batch);
  return runner.decode(batch, memory);
}

Var loss_on_batch(Graph& graph, Model& model, const Batch& batch, const ForwardOptions& options) {
  return ndgrad::cross_entropy(forward(graph, model, batch, options).logits, batch.tgt_out, corpusgen::kPad);
}

Var loss_on_batch(Graph& graph, const Model& model, const Batch& batch) {
  return ndgrad::cross_entropy(forward(graph, model, batch).logits, batch.tgt_out, corpusgen::kPad);
}

// ---- groups --------------------------------------------------------------

std::string_view to_string(Grouping grouping) { return grouping == Grouping::Position ? "position" : "type"; }

Grouping parse_grouping(std::string_view text) {
  if (text == "position") return Grouping::Position;
  if (text == "type") return Grouping::Type;
  throw ConfigError("unknown grouping '" + std::string(text) + "' (expected position or type)");
}

std::vector<ParamGroup> enumerate_groups(const Model& model, Grouping grouping, const GroupingOptions& options) {
  const std::size_t n = model.config().num_layers;
  std::vector<ParamGroup> groups;
  auto admit = [&options](const ParamTag& t) { return t.sublayer != Sublayer::LN || options.layer_norm_with_host; };

  if (grouping == Grouping::Position) {
    for (Side side : {Side::Encoder, Side::Decoder}) {
      const std::string prefix = side == Side::Encoder ? "Enc_" : "Dec_";
      for (std::size_t first = 0; first < n; first += 2) {
        const std::size_t last = std::min(first + 1, n - 1);
        ParamGroup g;
        g.name = prefix + std::to_string(first) + (last != first ? std::to_string(last) : "");
        for (const auto& p : model.params()) {
          const ParamTag& t = p.tag;
          if (t.side != side || !admit(t) || t.sublayer == Sublayer::Emb || t.sublayer == Sublayer::Out) continue;
          // Stack-final norms ride with the topmost layer group.
          const std::size_t layer = t.layer.value_or(n - 1);
          if (layer >= first && layer <= last) g.tags.push_back(t);
        }
        groups.push_back(std::move(g));
      }
    }
    ParamGroup out{"Dec_out", {}};
    for (const auto& p : model.params()) {
      if (p.tag.sublayer == Sublayer::Out) out.tags.push_back(p.tag);
    }
    groups.push_back(std::move(out));
    return groups;
  }

  struct TypeSlot {
    const char* name;
    Side side;
    Sublayer host;
  };
  const TypeSlot slots[] = {
      {"Emb(enc)", Side::Encoder, Sublayer::Emb}, {"Emb(dec)", Side::Decoder, Sublayer::Emb},
      {"SA(enc)", Side::Encoder, Sublayer::SA},   {"SA(dec)", Side::Decoder, Sublayer::SA},
      {"CA", Side::Decoder, Sublayer::CA},        {"FFN(enc)", Side::Encoder, Sublayer::FFN},
      {"FFN(dec)", Side::Decoder, Sublayer::FFN}, {"Out", Side::Decoder, Sublayer::Out},
  };
  for (const TypeSlot& slot : slots) {
    ParamGroup g{slot.name, {}};
    for (const auto& p : model.params()) {
      if (p.tag.side == slot.side && p.tag.host() == slot.host && admit(p.tag)) g.tags.push_back(p.tag);
    }
    groups.push_back(std::move(g));
  }
  return groups;
}

}  // namespace forgetlab::nanoformer
