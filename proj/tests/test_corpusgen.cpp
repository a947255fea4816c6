// Copyright (c) 2026, The forgetlab Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <set>
#include <sstream>

#include "forgetlab/corpusgen.hpp"
#include "forgetlab/errors.hpp"

namespace forgetlab {
namespace {

using namespace corpusgen;

TEST(ReorderRule, AppliesEachKind) {
  const Sentence s{3, 4, 5, 6, 7};
  EXPECT_EQ(ReorderRule::parse("identity").apply(s), s);
  EXPECT_EQ(ReorderRule::parse("reverse").apply(s), (Sentence{7, 6, 5, 4, 3}));
  EXPECT_EQ(ReorderRule::parse("rotate(2)").apply(s), (Sentence{5, 6, 7, 3, 4}));
  EXPECT_EQ(ReorderRule::parse("swap-adjacent").apply(s), (Sentence{4, 3, 6, 5, 7}));
  EXPECT_EQ(ReorderRule::parse("rotate(12)").name(), "rotate(12)");
  EXPECT_THROW(ReorderRule::parse("shuffle"), ConfigError);
  EXPECT_THROW(ReorderRule::parse("rotate(x)"), ConfigError);
}

TEST(DomainPair, OverlapOutsideUnitIntervalIsRejected) {
  EXPECT_THROW(make_domain_pair(1, -0.1), ConfigError);
  EXPECT_THROW(make_domain_pair(1, 1.5), ConfigError);
}

TEST(DomainPair, SharedCoreAndDisjointTails) {
  const auto pair = make_domain_pair(7, 0.7);
  EXPECT_EQ(pair.general.vocab_core_size, 140u);
  EXPECT_EQ(pair.general.vocab_tail_size, 60u);
  EXPECT_EQ(pair.general.source_words.size(), 200u);
  EXPECT_EQ(pair.in_domain.source_words.size(), 200u);
  const std::set<TokenId> g(pair.general.source_words.begin(), pair.general.source_words.end());
  std::size_t shared = 0;
  for (TokenId w : pair.in_domain.source_words) {
    if (g.count(w)) {
      ++shared;
      EXPECT_EQ(pair.general.lexicon.at(w), pair.in_domain.lexicon.at(w));
    }
  }
  EXPECT_EQ(shared, 140u);
  EXPECT_EQ(pair.vocab.source_size, 3u + 140u + 60u + 60u);
  EXPECT_EQ(pair.general.reorder.kind, ReorderKind::Identity);
  EXPECT_EQ(pair.in_domain.reorder.kind, ReorderKind::Reverse);
}

TEST(DomainPair, ZeroOverlapSharesNothing) {
  const auto pair = make_domain_pair(7, 0.0);
  const std::set<TokenId> g(pair.general.source_words.begin(), pair.general.source_words.end());
  std::set<TokenId> g_targets;
  for (const auto& [s, t] : pair.general.lexicon) g_targets.insert(t);
  for (TokenId w : pair.in_domain.source_words) {
    EXPECT_EQ(g.count(w), 0u);
    EXPECT_EQ(g_targets.count(pair.in_domain.lexicon.at(w)), 0u);
  }
}

TEST(DomainPair, FullOverlapWithSameRuleIsTheSameDistribution) {
  DomainPairOptions opts;
  opts.in_domain_reorder = opts.general_reorder;
  const auto pair = make_domain_pair(7, 1.0, opts);
  EXPECT_EQ(pair.general.lexicon, pair.in_domain.lexicon);
  const auto a = sample_corpus(pair.general, 50, 3);
  const auto b = sample_corpus(pair.in_domain, 50, 3);
  EXPECT_EQ(a.train, b.train);
}

TEST(DomainPair, LexiconIsAPermutationOfTargets) {
  const auto pair = make_domain_pair(11, 0.5);
  std::set<TokenId> targets;
  for (const auto& [s, t] : pair.general.lexicon) {
    EXPECT_GE(t, kFirstWord);
    EXPECT_LT(static_cast<std::size_t>(t), pair.vocab.target_size);
    targets.insert(t);
  }
  EXPECT_EQ(targets.size(), pair.general.lexicon.size());
}

TEST(Corpus, PairsAreTranslationsWithDistinctSources) {
  const auto pair = make_domain_pair(7, 0.7);
  const auto corpus = sample_corpus(pair.in_domain, {300, 20, 20}, 9);
  EXPECT_EQ(corpus.train.size(), 300u);
  EXPECT_EQ(corpus.dev.size(), 20u);
  EXPECT_EQ(corpus.test.size(), 20u);
  std::set<Sentence> sources;
  for (const auto* split : {&corpus.train, &corpus.dev, &corpus.test}) {
    for (const auto& p : *split) {
      EXPECT_TRUE(sources.insert(p.source).second);
      EXPECT_GE(p.source.size(), 4u);
      EXPECT_LE(p.source.size(), 12u);
      Sentence expected;
      for (TokenId w : p.source) expected.push_back(pair.in_domain.lexicon.at(w));
      std::reverse(expected.begin(), expected.end());
      EXPECT_EQ(p.target, expected);
      EXPECT_EQ(pair.in_domain.translate(p.source), p.target);
    }
  }
}

TEST(Corpus, SameSeedSameCorpus) {
  const auto pair = make_domain_pair(7, 0.7);
  EXPECT_EQ(sample_corpus(pair.general, 100, 4).train, sample_corpus(pair.general, 100, 4).train);
  EXPECT_NE(sample_corpus(pair.general, 100, 4).train, sample_corpus(pair.general, 100, 5).train);
}

TEST(Corpus, InDomainTailTokensAreUnseenInGeneralTraining) {
  const auto pair = make_domain_pair(7, 0.7);
  const auto g = sample_corpus(pair.general, 5000, 1);
  const auto i = sample_corpus(pair.in_domain, {10, 10, 2000}, 2);
  std::set<TokenId> seen;
  for (const auto& p : g.train) seen.insert(p.source.begin(), p.source.end());
  std::size_t unseen = 0, total = 0;
  for (const auto& p : i.test) {
    for (TokenId w : p.source) {
      unseen += seen.count(w) == 0;
      ++total;
    }
  }
  // 60 of the 200 in-domain words are tail words, sampled uniformly
  EXPECT_NEAR(static_cast<double>(unseen) / static_cast<double>(total), 0.3, 0.02);
}

TEST(Corpus, UniformLengthsAverageTheMidpoint) {
  const auto pair = make_domain_pair(7, 0.7);
  const auto corpus = sample_corpus(pair.general, 10000, 3);
  double total = 0.0;
  for (const auto& p : corpus.train) total += static_cast<double>(p.source.size());
  EXPECT_NEAR(total / 10000.0, 8.0, 0.2);
}

TEST(Corpus, TooManySentencesForTheSpaceIsAConfigError) {
  DomainPairOptions opts;
  opts.vocab_size = 2;
  opts.min_len = 1;
  opts.max_len = 2;
  const auto pair = make_domain_pair(1, 1.0, opts);
  EXPECT_THROW(sample_corpus(pair.general, 100, 1), ConfigError);
}

TEST(Batching, TeacherForcingLayout) {
  const std::vector<SentencePair> pairs{{{5, 6, 7}, {8, 9}}, {{5}, {10, 11, 12}}};
  const auto batches = encode_batches(pairs, {8, 20, 20});
  ASSERT_EQ(batches.size(), 1u);
  const Batch& b = batches.front();
  EXPECT_EQ(b.size, 2u);
  EXPECT_EQ(b.src_len, 3u);
  EXPECT_EQ(b.tgt_len, 4u);
  // sorted by source length: the one-word source comes first
  EXPECT_EQ(b.src, (std::vector<TokenId>{5, kPad, kPad, 5, 6, 7}));
  EXPECT_EQ(b.tgt_in, (std::vector<TokenId>{kBos, 10, 11, 12, kBos, 8, 9, kPad}));
  EXPECT_EQ(b.tgt_out, (std::vector<TokenId>{10, 11, 12, kEos, 8, 9, kEos, kPad}));
  EXPECT_EQ(b.src_lengths, (std::vector<std::size_t>{1, 3}));
  EXPECT_EQ(b.tgt_lengths, (std::vector<std::size_t>{4, 3}));
  EXPECT_EQ(b.target_tokens(), 7u);
}

TEST(Batching, RoundTripsAndChecksVocabulary) {
  const auto pair = make_domain_pair(3, 0.7);
  const auto corpus = sample_corpus(pair.general, 70, 5);
  std::multiset<std::pair<Sentence, Sentence>> before, after;
  for (const auto& p : corpus.train) before.insert({p.source, p.target});
  const auto batches = encode_batches(corpus.train, {16, pair.vocab.source_size, pair.vocab.target_size});
  EXPECT_EQ(batches.size(), 5u);
  for (const auto& b : batches) {
    for (const auto& p : decode_batch(b)) after.insert({p.source, p.target});
  }
  EXPECT_EQ(before, after);
  EXPECT_THROW(encode_batches(corpus.train, {16, 10, 10}), ConfigError);
  EXPECT_THROW(encode_batches(corpus.train, {0, 300, 300}), ConfigError);
}

TEST(Batching, TokenCountIsPreservedAndRowsArePadded) {
  const auto pair = make_domain_pair(3, 0.7);
  const auto corpus = sample_corpus(pair.in_domain, 203, 8);
  std::size_t words = 0;
  for (const auto& p : corpus.train) words += p.target.size() + 1;  // plus EOS
  std::size_t counted = 0;
  for (const auto& b : encode_batches(corpus.train, {32, pair.vocab.source_size, pair.vocab.target_size})) {
    counted += b.target_tokens();
    EXPECT_EQ(b.src.size(), b.size * b.src_len);
    EXPECT_EQ(b.tgt_out.size(), b.size * b.tgt_len);
    EXPECT_EQ(b.src_len, *std::max_element(b.src_lengths.begin(), b.src_lengths.end()));
    EXPECT_EQ(b.tgt_len, *std::max_element(b.tgt_lengths.begin(), b.tgt_lengths.end()));
  }
  EXPECT_EQ(counted, words);
}

TEST(CorpusFile, WriteReadRoundTrip) {
  const auto pair = make_domain_pair(3, 0.7);
  const auto corpus = sample_corpus(pair.general, 25, 5);
  std::stringstream ss;
  write_corpus(ss, corpus.train, pair.vocab);
  EXPECT_EQ(read_corpus(ss, pair.vocab), corpus.train);
  std::stringstream bad("s4 s5 t6\n");
  EXPECT_THROW(read_corpus(bad, pair.vocab), ConfigError);
}

}  // namespace
}  // namespace forgetlab
