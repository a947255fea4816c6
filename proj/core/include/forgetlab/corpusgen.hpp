// Copyright (c) 2026, The forgetlab Authors
// SPDX-License-Identifier: Apache-2.0

// Synthetic parallel "domains": every target sentence is a deterministic
// transduction of its source (word-for-word lexicon, then a reordering).
// Two domains share a core lexicon and differ in their tail vocabulary and
// their reorder rule.

#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace forgetlab::corpusgen {

using TokenId = std::int32_t;
using Sentence = std::vector<TokenId>;

inline constexpr TokenId kPad = 0;
inline constexpr TokenId kBos = 1;
inline constexpr TokenId kEos = 2;
inline constexpr TokenId kFirstWord = 3;

enum class ReorderKind { Identity, Reverse, Rotate, SwapAdjacent };

struct ReorderRule {
  ReorderKind kind = ReorderKind::Identity;
  std::size_t shift = 0;  ///< only for Rotate

  std::string name() const;
  static ReorderRule parse(const std::string& text);
  Sentence apply(const Sentence& s) const;
  friend bool operator==(const ReorderRule&, const ReorderRule&) = default;
};

struct DomainSpec {
  std::string name;
  std::size_t vocab_core_size = 0;
  std::size_t vocab_tail_size = 0;
  /// Source word ids the domain samples from; core first, then tail.
  std::vector<TokenId> source_words;
  /// Source id -> target id. Identical on the core for both domains.
  std::map<TokenId, TokenId> lexicon;
  ReorderRule reorder;
  std::size_t min_len = 4;
  std::size_t max_len = 12;
  std::uint64_t seed = 0;

  Sentence translate(const Sentence& source) const;
  /// Human-readable key = value block recording how the domain was built.
  std::string describe() const;
};

struct DomainPairOptions {
  std::size_t vocab_size = 200;  ///< lexicon entries per domain
  std::size_t min_len = 4;
  std::size_t max_len = 12;
  ReorderRule general_reorder{ReorderKind::Identity, 0};
  ReorderRule in_domain_reorder{ReorderKind::Reverse, 0};
};

/// Vocabulary shared by both domains, built from the general domain's
/// lexicon plus the in-domain tail (present in the table, never seen in G).
struct Vocab {
  std::size_t source_size = 0;
  std::size_t target_size = 0;

  std::string source_word(TokenId id) const;
  std::string target_word(TokenId id) const;
  TokenId source_id(const std::string& word) const;
  TokenId target_id(const std::string& word) const;
};

struct DomainPair {
  DomainSpec general;
  DomainSpec in_domain;
  Vocab vocab;
};

/// Throws ConfigError when overlap lies outside [0, 1].
DomainPair make_domain_pair(std::uint64_t shared_seed, double overlap, const DomainPairOptions& options = {});

struct SentencePair {
  Sentence source;
  Sentence target;
  friend bool operator==(const SentencePair&, const SentencePair&) = default;
};

struct SplitSizes {
  std::size_t train = 0;
  std::size_t dev = 0;
  std::size_t test = 0;
  std::size_t total() const { return train + dev + test; }
};

struct ParallelCorpus {
  std::string domain;
  std::vector<SentencePair> train;
  std::vector<SentencePair> dev;
  std::vector<SentencePair> test;

  std::size_t size() const { return train.size() + dev.size() + test.size(); }
};

/// Distinct source sentences, split in generation order.
ParallelCorpus sample_corpus(const DomainSpec& spec, const SplitSizes& sizes, std::uint64_t seed);
/// n training pairs, empty dev/test.
ParallelCorpus sample_corpus(const DomainSpec& spec, std::size_t n, std::uint64_t seed);

/// Padded teacher-forcing batch, rows packed sentence-major.
struct Batch {
  std::size_t size = 0;
  std::size_t src_len = 0;  ///< padded source length
  std::size_t tgt_len = 0;  ///< padded decoder length (target + 1)
  std::vector<TokenId> src;      ///< size * src_len
  std::vector<TokenId> tgt_in;   ///< BOS + y, size * tgt_len
  std::vector<TokenId> tgt_out;  ///< y + EOS, size * tgt_len
  std::vector<std::size_t> src_lengths;
  std::vector<std::size_t> tgt_lengths;  ///< unpadded decoder lengths (|y| + 1)

  std::size_t target_tokens() const;
};

struct BatchingOptions {
  std::size_t batch_size = 32;
  std::size_t source_vocab = 0;
  std::size_t target_vocab = 0;
};

/// Length-bucketed batches: pairs are ordered by (source length, target
/// length, original index) and cut into consecutive chunks.
std::vector<Batch> encode_batches(const std::vector<SentencePair>& pairs, const BatchingOptions& options);
/// Single-pair batch without bucketing.
Batch encode_pair(const SentencePair& pair, const BatchingOptions& options);
/// Inverse of encode_batches for one batch.
std::vector<SentencePair> decode_batch(const Batch& batch);

/// One pair per line: source words, a tab, target words.
void write_corpus(std::ostream& out, const std::vector<SentencePair>& pairs, const Vocab& vocab);
std::vector<SentencePair> read_corpus(std::istream& in, const Vocab& vocab);

}  // namespace forgetlab::corpusgen
