// Copyright (c) 2026, The forgetlab Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <set>

#include "forgetlab/errors.hpp"
#include "forgetlab/nanoformer.hpp"
#include "gradcheck.hpp"

namespace forgetlab {
namespace {

using corpusgen::SentencePair;
using nanoformer::Grouping;
using nanoformer::Model;
using nanoformer::ModelConfig;
using nanoformer::ParamTag;

ModelConfig small(bool pre_norm = true) {
  ModelConfig c;
  c.num_layers = 1;
  c.d_model = 8;
  c.d_ffn = 12;
  c.num_heads = 2;
  c.src_vocab = 9;
  c.tgt_vocab = 11;
  c.max_len = 8;
  c.seed = 5;
  c.pre_norm = pre_norm;
  return c;
}

corpusgen::Batch batch_of(const std::vector<SentencePair>& pairs, const ModelConfig& c) {
  return corpusgen::encode_batches(pairs, {pairs.size(), c.src_vocab, c.tgt_vocab}).front();
}

TEST(ModelConfig, RejectsHeadsThatDoNotDivideWidth) {
  ModelConfig c = ModelConfig::tiny(20, 30);
  c.d_model = 30;
  EXPECT_THROW(c.validate(), ConfigError);
  c = ModelConfig::tiny(20, 30);
  c.num_layers = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(Model{c}, ConfigError);
}

TEST(Model, TinyPresetParameterCountByHand) {
  // embeddings (20+16)*32 + (30+16)*32 = 2624
  // encoder layer 8544, decoder layer 12832, two of each = 42752
  // final norms 128, output layer 32*30 + 30 = 990
  const Model m(ModelConfig::tiny(20, 30));
  EXPECT_EQ(m.parameter_count(), 46494u);
  EXPECT_EQ(nanoformer::expected_parameter_count(m.config()), 46494u);
  std::size_t summed = 0;
  for (const auto& p : m.params()) summed += p.tensor.numel();
  EXPECT_EQ(summed, 46494u);

  ModelConfig post = ModelConfig::tiny(20, 30);
  post.pre_norm = false;
  EXPECT_EQ(Model(post).parameter_count(), 46494u - 128u);
}

TEST(Model, TagsRoundTripAndAreUnique) {
  const Model m(ModelConfig::tiny(20, 30));
  std::set<std::string> seen;
  for (const auto& p : m.params()) {
    const std::string text = p.tag.canonical();
    EXPECT_TRUE(seen.insert(text).second) << text;
    EXPECT_EQ(ParamTag::parse(text), p.tag) << text;
    EXPECT_EQ(m.index_of(text), static_cast<std::size_t>(&p - m.params().data()));
  }
  EXPECT_EQ(m.param("dec.-.Out.w_o").shape(), (ndgrad::Shape{32, 30}));
  EXPECT_EQ(m.param("enc.1.FFN.w_1").shape(), (ndgrad::Shape{32, 64}));
  EXPECT_EQ(m.param("dec.0.CA.w_k").shape(), (ndgrad::Shape{32, 32}));
  EXPECT_EQ(m.param("enc.-.Emb.token").shape(), (ndgrad::Shape{20, 32}));
  EXPECT_EQ(m.param("dec.-.Emb.position").shape(), (ndgrad::Shape{16, 32}));
  EXPECT_TRUE(m.find("enc.0.LN.sa.gain").has_value());
  EXPECT_TRUE(m.find("dec.-.LN.final.bias").has_value());
  EXPECT_THROW(m.index_of("enc.7.SA.w_q"), ConfigError);
  EXPECT_FALSE(m.find("enc.0.CA.w_q").has_value());
}

TEST(Model, InitializationIsSeededAndStructured) {
  const ModelConfig c = ModelConfig::tiny(20, 30);
  const Model a(c), b(c);
  EXPECT_TRUE(nanoformer::bitwise_equal(a, b));
  ModelConfig other = c;
  other.seed = 2;
  EXPECT_FALSE(ndgrad::bitwise_equal(a.param("enc.0.SA.w_q"), Model(other).param("enc.0.SA.w_q")));

  for (const auto& p : a.params()) {
    const std::string& role = p.tag.role;
    if (role.ends_with("gain")) {
      for (double v : p.tensor.values()) EXPECT_EQ(v, 1.0);
    } else if (role.starts_with("b_") || role.ends_with("bias")) {
      for (double v : p.tensor.values()) EXPECT_EQ(v, 0.0);
    } else {
      const double fan = static_cast<double>(p.tensor.rows() + p.tensor.cols());
      const double bound = std::sqrt(6.0 / fan);
      for (double v : p.tensor.values()) EXPECT_LE(std::fabs(v), bound) << p.tag.canonical();
    }
  }
}

TEST(Groups, PositionNamesFollowLayerPairs) {
  auto names = [](std::size_t layers) {
    std::vector<std::string> out;
    const Model m(ModelConfig::tiny(20, 30, layers));
    for (const auto& g : nanoformer::enumerate_groups(m, Grouping::Position)) out.push_back(g.name);
    return out;
  };
  EXPECT_EQ(names(2), (std::vector<std::string>{"Enc_01", "Dec_01", "Dec_out"}));
  EXPECT_EQ(names(6), (std::vector<std::string>{"Enc_01", "Enc_23", "Enc_45", "Dec_01", "Dec_23", "Dec_45", "Dec_out"}));
  EXPECT_EQ(names(5), (std::vector<std::string>{"Enc_01", "Enc_23", "Enc_4", "Dec_01", "Dec_23", "Dec_4", "Dec_out"}));
}

TEST(Groups, DecOutHoldsOutputLayerOnly) {
  const Model m(ModelConfig::tiny(20, 30));
  const auto groups = nanoformer::enumerate_groups(m, Grouping::Position);
  const auto& out = groups.back();
  ASSERT_EQ(out.tags.size(), 2u);
  EXPECT_EQ(out.tags[0].canonical(), "dec.-.Out.w_o");
  EXPECT_EQ(out.tags[1].canonical(), "dec.-.Out.b_o");
}

TEST(Groups, PartitionTheTagsTheyCover) {
  for (std::size_t layers : {2u, 3u, 6u}) {
    const Model m(ModelConfig::tiny(20, 30, layers));
    for (Grouping grouping : {Grouping::Position, Grouping::Type}) {
      std::map<std::string, int> hits;
      for (const auto& g : nanoformer::enumerate_groups(m, grouping)) {
        EXPECT_FALSE(g.tags.empty()) << g.name;
        for (const auto& t : g.tags) ++hits[t.canonical()];
      }
      for (const auto& p : m.params()) {
        const std::string tag = p.tag.canonical();
        const bool covered = grouping == Grouping::Type || p.tag.sublayer != nanoformer::Sublayer::Emb;
        EXPECT_EQ(hits[tag], covered ? 1 : 0) << tag;
      }
    }
  }
}

TEST(Groups, TypeGroupsAndLayerNormSwitch) {
  const Model m(ModelConfig::tiny(20, 30));
  const auto groups = nanoformer::enumerate_groups(m, Grouping::Type);
  std::vector<std::string> names;
  for (const auto& g : groups) names.push_back(g.name);
  EXPECT_EQ(names, (std::vector<std::string>{"Emb(enc)", "Emb(dec)", "SA(enc)", "SA(dec)", "CA", "FFN(enc)",
                                             "FFN(dec)", "Out"}));
  for (const auto& g : nanoformer::enumerate_groups(m, Grouping::Type, {false})) {
    for (const auto& t : g.tags) EXPECT_NE(t.sublayer, nanoformer::Sublayer::LN) << g.name;
  }
  EXPECT_EQ(nanoformer::parse_grouping("type"), Grouping::Type);
  EXPECT_THROW(nanoformer::parse_grouping("layer"), ConfigError);
}

TEST(Forward, UntrainedLossIsNearUniform) {
  const ModelConfig c = ModelConfig::tiny(53, 53);
  const Model m(c);
  std::vector<SentencePair> pairs;
  for (int i = 0; i < 16; ++i) {
    corpusgen::Sentence s;
    for (int k = 0; k < 6; ++k) s.push_back(3 + (i * 7 + k * 5) % 50);
    pairs.push_back({s, s});
  }
  ndgrad::Graph g(false);
  const double loss = nanoformer::loss_on_batch(g, m, batch_of(pairs, c)).value().item();
  EXPECT_NEAR(loss, std::log(53.0), 0.1 * std::log(53.0));
}

TEST(Loss, IsTokenWeightedMeanOverSentences) {
  const ModelConfig c = small();
  const Model m(c);
  const SentencePair a{{3, 4, 5}, {6, 7}}, b{{8, 3}, {9, 10, 4, 5}};
  auto loss = [&](const std::vector<SentencePair>& pairs) {
    ndgrad::Graph g(false);
    return nanoformer::loss_on_batch(g, m, batch_of(pairs, c)).value().item();
  };
  const double la = loss({a}), lb = loss({b});
  // 3 and 5 target tokens including EOS
  EXPECT_NEAR(loss({a, b}), (3.0 * la + 5.0 * lb) / 8.0, 1e-14);
  EXPECT_NEAR(loss({a, b, a, b}), loss({a, b}), 1e-14);
}

TEST(Forward, DecoderIsCausal) {
  const Model m(small());
  const std::vector<corpusgen::TokenId> src{3, 4, 5};
  const std::vector<corpusgen::TokenId> a{1, 4, 6, 7}, b{1, 4, 9, 3};
  const auto la = nanoformer::forward(m, src, a), lb = nanoformer::forward(m, src, b);
  const std::size_t v = m.config().tgt_vocab;
  for (std::size_t i = 0; i < 2 * v; ++i) EXPECT_EQ(la[i], lb[i]);
  bool differs = false;
  for (std::size_t i = 2 * v; i < 3 * v; ++i) differs |= la[i] != lb[i];
  EXPECT_TRUE(differs);
}

TEST(Forward, PaddingDoesNotLeakAcrossRows) {
  const ModelConfig c = small();
  const Model m(c);
  const SentencePair shorter{{3, 4}, {5, 6}}, longer{{3, 4, 5, 6, 7}, {8, 9, 10, 5}};
  ndgrad::Graph g1(false), g2(false);
  const auto alone = nanoformer::forward(g1, m, batch_of({shorter}, c)).logits.value();
  const auto both_batch = batch_of({shorter, longer}, c);
  const auto both = nanoformer::forward(g2, m, both_batch).logits.value();
  // shorter sorts first; compare its unpadded decoder rows
  const std::size_t v = c.tgt_vocab, rows = shorter.target.size() + 1;
  for (std::size_t i = 0; i < rows * v; ++i) EXPECT_NEAR(alone[i], both[i], 1e-12);
}

TEST(Forward, RejectsSequencesBeyondMaxLen) {
  const ModelConfig c = small();
  const Model m(c);
  corpusgen::Sentence too_long(c.max_len + 1, 3);
  ndgrad::Graph g(false);
  EXPECT_THROW(nanoformer::forward(g, m, batch_of({{too_long, {3}}}, c)), ContractError);
}

class ModelGradients : public ::testing::TestWithParam<bool> {};

TEST_P(ModelGradients, EveryParameterMatchesFiniteDifferences) {
  const ModelConfig c = small(GetParam());
  Model m(c);
  const auto batch = batch_of({{{3, 4, 5}, {6, 7}}, {{8, 3}, {9, 10, 4}}}, c);
  std::vector<ndgrad::Tensor*> params;
  for (auto& p : m.params()) params.push_back(&p.tensor);
  auto r = testing::check_gradients(params, [&](ndgrad::Graph& g) { return nanoformer::loss_on_batch(g, m, batch); });
  EXPECT_LT(r.max_rel_error, 1e-4) << "checked " << r.checked;
  EXPECT_EQ(r.checked, m.parameter_count());
}

INSTANTIATE_TEST_SUITE_P(NormPlacement, ModelGradients, ::testing::Values(true, false),
                         [](const auto& info) { return info.param ? "PreNorm" : "PostNorm"; });

}  // namespace
}  // namespace forgetlab
