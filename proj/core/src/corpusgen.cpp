// Copyright (c) 2026, The forgetlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "forgetlab/corpusgen.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

#include "forgetlab/errors.hpp"
#include "forgetlab/rng.hpp"

namespace forgetlab::corpusgen {

namespace {

std::vector<std::string> split_words(const std::string& text) {
  std::istringstream is(text);
  std::vector<std::string> words;
  for (std::string w; is >> w;) words.push_back(w);
  return words;
}

}  // namespace

// ---- ReorderRule ---------------------------------------------------------

std::string ReorderRule::name() const {
  switch (kind) {
    case ReorderKind::Identity:
      return "identity";
    case ReorderKind::Reverse:
      return "reverse";
    case ReorderKind::Rotate:
      return "rotate(" + std::to_string(shift) + ")";
    case ReorderKind::SwapAdjacent:
      return "swap-adjacent";
  }
  return "?";
}

ReorderRule ReorderRule::parse(const std::string& text) {
  if (text == "identity") return {ReorderKind::Identity, 0};
  if (text == "reverse") return {ReorderKind::Reverse, 0};
  if (text == "swap-adjacent") return {ReorderKind::SwapAdjacent, 0};
  if (text.starts_with("rotate(") && text.ends_with(")")) {
    const std::string digits = text.substr(7, text.size() - 8);
    if (!digits.empty() && std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; })) {
      return {ReorderKind::Rotate, static_cast<std::size_t>(std::stoul(digits))};
    }
  }
  throw ConfigError("unknown reorder rule '" + text +
                    "' (expected identity, reverse, rotate(k) or swap-adjacent)");
}

Sentence ReorderRule::apply(const Sentence& s) const {
  Sentence out = s;
  switch (kind) {
    case ReorderKind::Identity:
      break;
    case ReorderKind::Reverse:
      std::reverse(out.begin(), out.end());
      break;
    case ReorderKind::Rotate:
      if (!out.empty()) {
        std::rotate(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(shift % out.size()), out.end());
      }
      break;
    case ReorderKind::SwapAdjacent:
      for (std::size_t i = 0; i + 1 < out.size(); i += 2) std::swap(out[i], out[i + 1]);
      break;
  }
  return out;
}

// ---- DomainSpec / Vocab --------------------------------------------------

Sentence DomainSpec::translate(const Sentence& source) const {
  Sentence mapped;
  mapped.reserve(source.size());
  for (TokenId t : source) {
    auto it = lexicon.find(t);
    if (it == lexicon.end()) {
      throw IndexError("domain " + name + ": source token " + std::to_string(t) + " has no lexicon entry");
    }
    mapped.push_back(it->second);
  }
  return reorder.apply(mapped);
}

std::string DomainSpec::describe() const {
  std::ostringstream os;
  os << "[domain " << name << "]\n"
     << "vocab_core_size = " << vocab_core_size << "\n"
     << "vocab_tail_size = " << vocab_tail_size << "\n"
     << "reorder = " << reorder.name() << "\n"
     << "length = uniform[" << min_len << ", " << max_len << "]\n"
     << "seed = " << seed << "\n"
     << "lexicon =";
  for (const auto& [src, tgt] : lexicon) os << ' ' << src << ':' << tgt;
  os << "\n";
  return os.str();
}

std::string Vocab::source_word(TokenId id) const {
  if (id == kPad) return "<pad>";
  if (id == kBos) return "<s>";
  if (id == kEos) return "</s>";
  if (id < 0 || static_cast<std::size_t>(id) >= source_size) {
    throw IndexError("source id " + std::to_string(id) + " outside vocabulary of " + std::to_string(source_size));
  }
  return "s" + std::to_string(id);
}

std::string Vocab::target_word(TokenId id) const {
  if (id == kPad) return "<pad>";
  if (id == kBos) return "<s>";
  if (id == kEos) return "</s>";
  if (id < 0 || static_cast<std::size_t>(id) >= target_size) {
    throw IndexError("target id " + std::to_string(id) + " outside vocabulary of " + std::to_string(target_size));
  }
  return "t" + std::to_string(id);
}

namespace {

TokenId parse_word(const std::string& word, char prefix, std::size_t size) {
  if (word == "<pad>") return kPad;
  if (word == "<s>") return kBos;
  if (word == "</s>") return kEos;
  if (word.size() < 2 || word[0] != prefix ||
      !std::all_of(word.begin() + 1, word.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    throw IndexError("unknown word '" + word + "'");
  }
  const unsigned long id = std::stoul(word.substr(1));
  if (id >= size) throw IndexError("word '" + word + "' outside vocabulary of " + std::to_string(size));
  return static_cast<TokenId>(id);
}

}  // namespace

TokenId Vocab::source_id(const std::string& word) const { return parse_word(word, 's', source_size); }

TokenId Vocab::target_id(const std::string& word) const { return parse_word(word, 't', target_size); }

// ---- make_domain_pair ----------------------------------------------------

DomainPair make_domain_pair(std::uint64_t shared_seed, double overlap, const DomainPairOptions& options) {
  if (!(overlap >= 0.0 && overlap <= 1.0)) {
    throw ConfigError("overlap must lie in [0, 1], got " + std::to_string(overlap));
  }
  if (options.vocab_size == 0) throw ConfigError("vocab_size must be positive");
  if (options.min_len == 0 || options.min_len > options.max_len) {
    throw ConfigError("length range must satisfy 1 <= min_len <= max_len");
  }
  const auto core = static_cast<std::size_t>(std::llround(overlap * static_cast<double>(options.vocab_size)));
  const std::size_t tail = options.vocab_size - core;

  // Id layout (source and target alike): reserved | core | G tail | I tail.
  const TokenId core_begin = kFirstWord;
  const TokenId g_begin = core_begin + static_cast<TokenId>(core);
  const TokenId i_begin = g_begin + static_cast<TokenId>(tail);
  const TokenId end = i_begin + static_cast<TokenId>(tail);

  Rng rng(mix_seed(shared_seed, 0x1e8));
  auto permuted_block = [&rng](TokenId begin, TokenId stop) {
    std::vector<TokenId> ids(static_cast<std::size_t>(stop - begin));
    std::iota(ids.begin(), ids.end(), begin);
    rng.shuffle(ids);
    return ids;
  };
  const std::vector<TokenId> core_map = permuted_block(core_begin, g_begin);
  const std::vector<TokenId> g_map = permuted_block(g_begin, i_begin);
  const std::vector<TokenId> i_map = permuted_block(i_begin, end);

  auto build = [&](const std::string& name, TokenId tail_begin, const std::vector<TokenId>& tail_map,
                   const ReorderRule& rule, std::uint64_t salt) {
    DomainSpec d;
    d.name = name;
    d.vocab_core_size = core;
    d.vocab_tail_size = tail;
    for (std::size_t i = 0; i < core; ++i) {
      const TokenId src = core_begin + static_cast<TokenId>(i);
      d.source_words.push_back(src);
      d.lexicon[src] = core_map[i];
    }
    for (std::size_t i = 0; i < tail; ++i) {
      const TokenId src = tail_begin + static_cast<TokenId>(i);
      d.source_words.push_back(src);
      d.lexicon[src] = tail_map[i];
    }
    d.reorder = rule;
    d.min_len = options.min_len;
    d.max_len = options.max_len;
    d.seed = mix_seed(shared_seed, salt);
    return d;
  };

  DomainPair pair;
  pair.general = build("general", g_begin, g_map, options.general_reorder, 1);
  if (overlap == 1.0 && options.general_reorder == options.in_domain_reorder) {
    pair.in_domain = pair.general;
    pair.in_domain.name = "in-domain";
  } else {
    pair.in_domain = build("in-domain", i_begin, i_map, options.in_domain_reorder, 2);
  }
  pair.vocab.source_size = static_cast<std::size_t>(end);
  pair.vocab.target_size = static_cast<std::size_t>(end);
  return pair;
}

// ---- sample_corpus -------------------------------------------------------

ParallelCorpus sample_corpus(const DomainSpec& spec, const SplitSizes& sizes, std::uint64_t seed) {
  if (spec.source_words.empty()) throw ConfigError("domain " + spec.name + " has no source words");
  const std::size_t n = sizes.total();
  Rng rng(mix_seed(seed, spec.seed));
  std::set<Sentence> seen;
  std::vector<SentencePair> pairs;
  pairs.reserve(n);
  const std::size_t span = spec.max_len - spec.min_len + 1;
  std::size_t attempts = 0;
  while (pairs.size() < n) {
    if (++attempts > 100 * n + 1000) {
      throw ConfigError("domain " + spec.name + " cannot supply " + std::to_string(n) + " distinct sentences");
    }
    const std::size_t len = spec.min_len + static_cast<std::size_t>(rng.below(span));
    Sentence src(len);
    for (TokenId& t : src) t = spec.source_words[static_cast<std::size_t>(rng.below(spec.source_words.size()))];
    if (!seen.insert(src).second) continue;
    Sentence tgt = spec.translate(src);
    pairs.push_back({std::move(src), std::move(tgt)});
  }
  ParallelCorpus corpus;
  corpus.domain = spec.name;
  auto it = pairs.begin();
  corpus.train.assign(it, it + static_cast<std::ptrdiff_t>(sizes.train));
  it += static_cast<std::ptrdiff_t>(sizes.train);
  corpus.dev.assign(it, it + static_cast<std::ptrdiff_t>(sizes.dev));
  it += static_cast<std::ptrdiff_t>(sizes.dev);
  corpus.test.assign(it, pairs.end());
  return corpus;
}

ParallelCorpus sample_corpus(const DomainSpec& spec, std::size_t n, std::uint64_t seed) {
  return sample_corpus(spec, SplitSizes{n, 0, 0}, seed);
}

// ---- batching ------------------------------------------------------------

std::size_t Batch::target_tokens() const {
  return std::accumulate(tgt_lengths.begin(), tgt_lengths.end(), std::size_t{0});
}

namespace {

void check_ids(const Sentence& s, std::size_t vocab, const char* side) {
  if (vocab == 0) return;
  for (TokenId t : s) {
    if (t < kFirstWord || static_cast<std::size_t>(t) >= vocab) {
      throw ConfigError(std::string(side) + " token " + std::to_string(t) + " outside word range [" +
                        std::to_string(kFirstWord) + ", " + std::to_string(vocab) + ")");
    }
  }
}

Batch make_batch(const std::vector<const SentencePair*>& members, const BatchingOptions& options) {
  Batch b;
  b.size = members.size();
  for (const SentencePair* p : members) {
    if (p->source.empty()) throw ContractError("encode_batches: empty source sentence");
    check_ids(p->source, options.source_vocab, "source");
    check_ids(p->target, options.target_vocab, "target");
    b.src_len = std::max(b.src_len, p->source.size());
    b.tgt_len = std::max(b.tgt_len, p->target.size() + 1);
  }
  b.src.assign(b.size * b.src_len, kPad);
  b.tgt_in.assign(b.size * b.tgt_len, kPad);
  b.tgt_out.assign(b.size * b.tgt_len, kPad);
  for (std::size_t r = 0; r < b.size; ++r) {
    const SentencePair& p = *members[r];
    std::copy(p.source.begin(), p.source.end(), b.src.begin() + static_cast<std::ptrdiff_t>(r * b.src_len));
    b.tgt_in[r * b.tgt_len] = kBos;
    std::copy(p.target.begin(), p.target.end(), b.tgt_in.begin() + static_cast<std::ptrdiff_t>(r * b.tgt_len + 1));
    std::copy(p.target.begin(), p.target.end(), b.tgt_out.begin() + static_cast<std::ptrdiff_t>(r * b.tgt_len));
    b.tgt_out[r * b.tgt_len + p.target.size()] = kEos;
    b.src_lengths.push_back(p.source.size());
    b.tgt_lengths.push_back(p.target.size() + 1);
  }
  return b;
}

}  // namespace

std::vector<Batch> encode_batches(const std::vector<SentencePair>& pairs, const BatchingOptions& options) {
  if (options.batch_size == 0) throw ConfigError("batch_size must be positive");
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&pairs](std::size_t a, std::size_t b) {
    const auto ka = std::make_pair(pairs[a].source.size(), pairs[a].target.size());
    const auto kb = std::make_pair(pairs[b].source.size(), pairs[b].target.size());
    return ka < kb;
  });
  std::vector<Batch> batches;
  for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
    std::vector<const SentencePair*> members;
    for (std::size_t i = start; i < std::min(order.size(), start + options.batch_size); ++i) {
      members.push_back(&pairs[order[i]]);
    }
    batches.push_back(make_batch(members, options));
  }
  return batches;
}

Batch encode_pair(const SentencePair& pair, const BatchingOptions& options) { return make_batch({&pair}, options); }

std::vector<SentencePair> decode_batch(const Batch& batch) {
  std::vector<SentencePair> out;
  out.reserve(batch.size);
  for (std::size_t r = 0; r < batch.size; ++r) {
    SentencePair p;
    const auto src = batch.src.begin() + static_cast<std::ptrdiff_t>(r * batch.src_len);
    p.source.assign(src, src + static_cast<std::ptrdiff_t>(batch.src_lengths[r]));
    const auto tgt = batch.tgt_out.begin() + static_cast<std::ptrdiff_t>(r * batch.tgt_len);
    p.target.assign(tgt, tgt + static_cast<std::ptrdiff_t>(batch.tgt_lengths[r] - 1));
    out.push_back(std::move(p));
  }
  return out;
}

// ---- text dump -----------------------------------------------------------

void write_corpus(std::ostream& out, const std::vector<SentencePair>& pairs, const Vocab& vocab) {
  for (const SentencePair& p : pairs) {
    for (std::size_t i = 0; i < p.source.size(); ++i) out << (i ? " " : "") << vocab.source_word(p.source[i]);
    out << '\t';
    for (std::size_t i = 0; i < p.target.size(); ++i) out << (i ? " " : "") << vocab.target_word(p.target[i]);
    out << '\n';
  }
}

std::vector<SentencePair> read_corpus(std::istream& in, const Vocab& vocab) {
  std::vector<SentencePair> pairs;
  std::size_t lineno = 0;
  for (std::string line; std::getline(in, line);) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw ConfigError("corpus line " + std::to_string(lineno) + " has no tab");
    SentencePair p;
    for (const auto& w : split_words(line.substr(0, tab))) p.source.push_back(vocab.source_id(w));
    for (const auto& w : split_words(line.substr(tab + 1))) p.target.push_back(vocab.target_id(w));
    pairs.push_back(std::move(p));
  }
  return pairs;
}

}  // namespace forgetlab::corpusgen
