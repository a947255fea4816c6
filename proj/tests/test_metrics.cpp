// Copyright (c) 2026, The forgetlab Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "forgetlab/errors.hpp"
#include "forgetlab/metrics.hpp"

namespace forgetlab {
namespace {

using metrics::corpus_bleu;
using Words = std::vector<std::string>;

Words words(const std::string& text) {
  Words out;
  std::istringstream is(text);
  for (std::string w; is >> w;) out.push_back(w);
  return out;
}

TEST(Bleu, ShortHypothesisOnlyPaysBrevityPenalty) {
  const auto r = corpus_bleu(std::vector<Words>{words("a b c d")}, std::vector<Words>{words("a b c d e")});
  // every n-gram precision is 1; BP = exp(1 - 5/4)
  EXPECT_NEAR(r.bleu, 100.0 * std::exp(-0.25), 1e-12);
  EXPECT_NEAR(r.bleu, 77.88, 1e-2);
  EXPECT_EQ(r.hypothesis_length, 4u);
  EXPECT_EQ(r.reference_length, 5u);
  EXPECT_EQ(r.matches, (std::array<std::size_t, 4>{4, 3, 2, 1}));
  EXPECT_EQ(r.totals, (std::array<std::size_t, 4>{4, 3, 2, 1}));
}

TEST(Bleu, IdenticalCorporaScoreExactlyHundred) {
  const std::vector<Words> c{words("the cat sat on the mat"), words("x y"), words("a")};
  EXPECT_EQ(corpus_bleu(c, c).bleu, 100.0);
  const std::vector<metrics::Sentence> ids{{3, 4, 5, 6}, {7}};
  EXPECT_EQ(corpus_bleu(ids, ids).bleu, 100.0);
}

TEST(Bleu, ZeroHigherOrderMatchesAreSmoothed) {
  const auto r = corpus_bleu(std::vector<Words>{words("a b c x")}, std::vector<Words>{words("a b c d")});
  const double expected = 100.0 * std::exp((std::log(3.0 / 4.0) + std::log(2.0 / 3.0) + std::log(1.0 / 2.0) +
                                            std::log(1.0 / 2.0)) / 4.0);
  EXPECT_NEAR(r.bleu, expected, 1e-12);
  EXPECT_EQ(r.precisions[3], 0.5);
}

TEST(Bleu, CountsAreClippedAndLongHypothesesHaveNoPenalty) {
  const auto r = corpus_bleu(std::vector<Words>{words("the the the the")}, std::vector<Words>{words("the cat")});
  EXPECT_EQ(r.matches[0], 1u);
  EXPECT_EQ(r.totals[0], 4u);
  EXPECT_EQ(r.brevity_penalty, 1.0);
}

TEST(Bleu, NoUnigramMatchOrEmptyOutputScoresZero) {
  EXPECT_EQ(corpus_bleu(std::vector<Words>{words("p q")}, std::vector<Words>{words("a b")}).bleu, 0.0);
  EXPECT_EQ(corpus_bleu(std::vector<Words>{Words{}}, std::vector<Words>{words("a b")}).bleu, 0.0);
}

TEST(Bleu, IsCorpusLevelNotSentenceAverage) {
  const std::vector<Words> hyp{words("a b c d"), words("e f g h")};
  const std::vector<Words> ref{words("a b c d"), words("e f x h")};
  const auto r = corpus_bleu(hyp, ref);
  EXPECT_EQ(r.matches, (std::array<std::size_t, 4>{7, 4, 2, 1}));
  EXPECT_EQ(r.totals, (std::array<std::size_t, 4>{8, 6, 4, 2}));
  const double expected =
      100.0 * std::exp((std::log(7.0 / 8.0) + std::log(4.0 / 6.0) + std::log(2.0 / 4.0) + std::log(1.0 / 2.0)) / 4.0);
  EXPECT_NEAR(r.bleu, expected, 1e-12);
}

TEST(Bleu, ContractViolations) {
  EXPECT_THROW(corpus_bleu(std::vector<Words>{}, std::vector<Words>{}), ContractError);
  EXPECT_THROW(corpus_bleu(std::vector<Words>{words("a")}, std::vector<Words>{}), ContractError);
}

nanoformer::Model flat_model() {
  nanoformer::ModelConfig c = nanoformer::ModelConfig::tiny(12, 12, 1);
  c.max_len = 6;
  nanoformer::Model m(c);
  for (double& w : m.param("dec.-.Out.w_o").values()) w = 0.0;
  return m;
}

TEST(GreedyDecode, TiesGoToLowestIdAndLengthIsCapped) {
  const auto m = flat_model();
  // all logits equal: PAD (id 0) wins every step, EOS never appears
  const auto out = metrics::greedy_decode(m, std::vector<corpusgen::TokenId>{3, 4}, 100);
  EXPECT_EQ(out, metrics::Sentence(6, corpusgen::kPad));
  EXPECT_EQ(metrics::greedy_decode(m, std::vector<corpusgen::TokenId>{3, 4}, 2).size(), 2u);
}

TEST(GreedyDecode, StopsAtEosAndBatchesMatchSingles) {
  auto m = flat_model();
  m.param("dec.-.Out.b_o")[corpusgen::kEos] = 1.0;
  EXPECT_TRUE(metrics::greedy_decode(m, std::vector<corpusgen::TokenId>{3, 4}, 10).empty());

  const nanoformer::Model random(nanoformer::ModelConfig::tiny(12, 12, 1));
  const std::vector<metrics::Sentence> sources{{3, 4, 5}, {6}, {7, 8, 9, 10, 11}, {3, 3}};
  const auto batched = metrics::greedy_decode_all(random, sources, 8, 3);
  for (std::size_t i = 0; i < sources.size(); ++i) {
    EXPECT_EQ(batched[i], metrics::greedy_decode(random, sources[i], 8)) << i;
  }
}

TEST(Evaluate, LossIsTokenWeightedAcrossBatches) {
  const nanoformer::Model m(nanoformer::ModelConfig::tiny(12, 12, 1));
  const std::vector<corpusgen::SentencePair> pairs{{{3, 4}, {5}}, {{6, 7, 8}, {9, 10, 11, 3}}, {{4}, {4, 4}}};
  const double whole = metrics::mean_loss(m, pairs, 8);
  EXPECT_NEAR(metrics::mean_loss(m, pairs, 1), whole, 1e-12);
  const auto r = metrics::evaluate(m, pairs, 2);
  EXPECT_NEAR(r.loss, whole, 1e-12);
  EXPECT_GE(r.bleu.bleu, 0.0);
}

}  // namespace
}  // namespace forgetlab
