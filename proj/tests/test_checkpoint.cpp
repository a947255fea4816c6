// Copyright (c) 2026, The forgetlab Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cstring>
#include <sstream>

#include "forgetlab/checkpoint.hpp"
#include "forgetlab/errors.hpp"

namespace forgetlab {
namespace {

TEST(Checkpoint, StreamRoundTripIsBitExact) {
  nanoformer::Model m(nanoformer::ModelConfig::tiny(15, 17));
  m.param("enc.0.SA.w_q")[3] = -0.0;
  m.param("enc.0.SA.w_q")[4] = 1e-310;
  std::stringstream ss;
  auto c = checkpoint::to_container(m);
  c.sections.front().meta["note"] = "x";
  checkpoint::write(ss, c);
  const auto back = checkpoint::read(ss);
  EXPECT_EQ(back.config, m.config());
  EXPECT_EQ(back.find("params")->meta.at("note"), "x");
  EXPECT_TRUE(nanoformer::bitwise_equal(checkpoint::model_from(back), m));
}

TEST(Checkpoint, FileLayoutStartsWithMagicAndVersion) {
  const nanoformer::Model m(nanoformer::ModelConfig::tiny(15, 17, 1));
  std::stringstream ss;
  checkpoint::write(ss, checkpoint::to_container(m));
  const std::string bytes = ss.str();
  ASSERT_GT(bytes.size(), 20u);
  EXPECT_EQ(bytes.substr(0, 8), "FGLBCKPT");
  std::uint32_t version = 0;
  std::memcpy(&version, bytes.data() + 8, 4);
  EXPECT_EQ(version, checkpoint::kFormatVersion);
  std::uint64_t header = 0;
  std::memcpy(&header, bytes.data() + 12, 8);
  EXPECT_EQ(bytes.size(), 20 + header + m.parameter_count() * sizeof(double));
}

TEST(Checkpoint, SavingTwiceGivesIdenticalBytes) {
  const nanoformer::Model m(nanoformer::ModelConfig::tiny(15, 17, 1));
  std::stringstream a, b;
  checkpoint::write(a, checkpoint::to_container(m));
  checkpoint::write(b, checkpoint::to_container(m));
  EXPECT_EQ(a.str(), b.str());
}

TEST(Checkpoint, MalformedInputIsRejected) {
  std::stringstream bad("NOTACKPT....");
  EXPECT_THROW(checkpoint::read(bad), ContractError);

  const nanoformer::Model m(nanoformer::ModelConfig::tiny(15, 17, 1));
  std::stringstream ss;
  checkpoint::write(ss, checkpoint::to_container(m));
  std::string truncated = ss.str();
  truncated.resize(truncated.size() - 8);
  std::stringstream cut(truncated);
  EXPECT_THROW(checkpoint::read(cut), ContractError);
}

TEST(Checkpoint, ShapeMismatchIsRejected) {
  const nanoformer::Model m(nanoformer::ModelConfig::tiny(15, 17, 1));
  auto c = checkpoint::to_container(m);
  c.sections.front().entries.front().tensor = ndgrad::Tensor({2, 2});
  EXPECT_THROW(checkpoint::model_from(c), ContractError);
}

}  // namespace
}  // namespace forgetlab
