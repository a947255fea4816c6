// Copyright (c) 2026, The forgetlab Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "forgetlab/errors.hpp"
#include "forgetlab/experiment.hpp"

namespace forgetlab {
namespace {

namespace fs = std::filesystem;
using namespace experiment;

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::path(FORGETLAB_TEST_TMP) / "experiment" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = slurp(e.path());
  }
  return out;
}

std::string tiny_config(const fs::path& out) {
  return R"({
  "seed": 3,
  "output_dir": ")" + out.string() + R"(",
  "model": {"num_layers": 2, "d_model": 16, "d_ffn": 24, "num_heads": 2, "max_len": 7},
  "data": {"vocab_size": 24, "min_len": 2, "max_len": 5, "overlap": 0.5,
           "general": {"train": 120, "dev": 12, "test": 12},
           "in_domain": {"train": 60, "dev": 12, "test": 12}},
  "training": {"epochs": 2, "lr": 0.003, "batch_size": 16},
  "continual": {"epochs": 1, "lr": 0.003, "batch_size": 16},
  "analysis": {"t_limit": 20, "fractions": [0.0, 0.5, 1.0], "grouping": "both"}
})";
}

TEST(Config, DefaultsAndDerivedVocabulary) {
  const auto c = parse_config("{}");
  EXPECT_EQ(c.seed, 1u);
  EXPECT_EQ(c.data.general.train, 20000u);
  EXPECT_EQ(c.data.in_domain.train, 5000u);
  EXPECT_EQ(c.data.in_domain_reorder, "reverse");
  EXPECT_EQ(c.model.d_model, 32u);
  EXPECT_EQ(c.model.src_vocab, 3u + 200u + 60u);
  EXPECT_EQ(c.model.tgt_vocab, 3u + 200u + 60u);
  EXPECT_EQ(c.analysis.t_limit, 2000u);
  EXPECT_EQ(c.analysis.fractions.size(), 11u);
  EXPECT_EQ(c.analysis.matrices.size(), 6u);
  EXPECT_EQ(c.analysis.matrices[1], "enc.1.FFN.w_1");
  EXPECT_NO_THROW(parse_config(R"({"model": {"src_vocab": 263}})"));
}

TEST(Config, RejectsBadInput) {
  EXPECT_THROW(parse_config("{"), ConfigError);
  EXPECT_THROW(parse_config("[]"), ConfigError);
  EXPECT_THROW(parse_config(R"({"sede": 1})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"training": {"epochs": "ten"}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"training": {"lr": -1}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"model": {"src_vocab": 100}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"model": {"max_len": 12}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"data": {"overlap": 2}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"data": {"in_domain_reorder": "scramble"}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"analysis": {"grouping": "layer"}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"analysis": {"matrices": ["enc.9.SA.w_q"]}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"analysis": {"fractions": [0.5, 0.2]}})"), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/forgetlab.json"), ConfigError);
  try {
    parse_config(R"({"continual": {"batch": 3}})");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("continual"), std::string::npos);
  }
}

TEST(Config, DumpRoundTripsAndHashIsStable) {
  const auto c = parse_config(tiny_config("/tmp/x"));
  const std::string dumped = dump_config(c);
  EXPECT_EQ(dump_config(parse_config(dumped)), dumped);
  EXPECT_EQ(config_hash(c), config_hash(parse_config(dumped)));
  EXPECT_EQ(config_hash(c).size(), 16u);
  auto d = c;
  d.training.lr = 0.004;
  EXPECT_NE(config_hash(c), config_hash(d));
  // key order and whitespace do not matter
  EXPECT_EQ(config_hash(parse_config(R"({"seed": 1, "output_dir": "runs"})")),
            config_hash(parse_config(R"({ "output_dir":"runs","seed":1 })")));
}

TEST(RunDir, TimestampedUnlessOverwriting) {
  const fs::path root = scratch("rundir");
  auto c = parse_config("{}");
  c.output_dir = root.string();
  const auto a = make_run_dir(c, "drift", false);
  const auto b = make_run_dir(c, "drift", false);
  EXPECT_NE(a, b);
  EXPECT_TRUE(a.filename().string().starts_with("run-"));
  const auto l = make_run_dir(c, "drift", true);
  EXPECT_EQ(l, root / "drift" / "latest");
  std::ofstream(l / "stale.txt") << "x";
  make_run_dir(c, "drift", true);
  EXPECT_FALSE(fs::exists(l / "stale.txt"));
}

TEST(Commands, EveryCommandIsDeterministic) {
  const fs::path root = scratch("determinism");
  const auto c = parse_config(tiny_config(root));
  RunOptions o;
  o.overwrite = true;
  for (const auto& cmd : commands()) {
    const auto first = tree(run_command(cmd, c, o));
    o.jobs = 2;
    const auto second = tree(run_command(cmd, c, o));
    o.jobs = 1;
    EXPECT_EQ(first, second) << cmd;
    EXPECT_TRUE(first.count("config.json")) << cmd;
  }
  const fs::path base = root / "importance" / "latest";
  EXPECT_TRUE(fs::exists(base / "heatmaps" / "dec.0.CA.w_k.G.png"));
  EXPECT_TRUE(fs::exists(base / "importance_I.ckpt"));
  EXPECT_TRUE(fs::exists(root / "modules" / "latest" / "modules_type.csv"));
  EXPECT_TRUE(fs::exists(root / "modules" / "latest" / "modules_position.csv"));
  const std::string csv = slurp(root / "drift" / "latest" / "drift.csv");
  EXPECT_TRUE(csv.starts_with("# config_hash=" + config_hash(c) + "\n"));
  EXPECT_THROW(run_command("plot", c, o), ConfigError);
}

TEST(Commands, ReusesGivenCheckpoints) {
  const fs::path root = scratch("reuse");
  auto c = parse_config(tiny_config(root));
  RunOptions o;
  o.overwrite = true;
  const auto dir = cmd_forgetting(c, o);
  c.general_checkpoint = (dir / "general.ckpt").string();
  c.continual_checkpoint = (dir / "continual.ckpt").string();
  c.training.epochs = 50;  // would be slow if it trained
  const auto drift = cmd_drift(c, o);
  EXPECT_EQ(slurp(drift / "general.ckpt").size(), slurp(dir / "general.ckpt").size());
  c.general_checkpoint = (root / "missing.ckpt").string();
  EXPECT_ANY_THROW(cmd_drift(c, o));
}

int cli(const std::string& args) {
  const std::string cmd = std::string(FORGETLAB_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(Cli, ExitCodes) {
  const fs::path root = scratch("cli");
  const fs::path good = root / "good.json", bad = root / "bad.json", broken = root / "broken.json";
  std::ofstream(good) << tiny_config(root / "out");
  std::ofstream(bad) << R"({"training": {"epochs": 0}})";
  std::string with_missing_ckpt = tiny_config(root / "broken_out");
  with_missing_ckpt.insert(1, "\"general_checkpoint\": \"" + (root / "none.ckpt").string() + "\",");
  std::ofstream(broken) << with_missing_ckpt;

  EXPECT_EQ(cli("drift --config " + good.string() + " --overwrite"), 0);
  EXPECT_EQ(cli("drift --config " + good.string()), 0);
  EXPECT_EQ(cli("drift --config " + bad.string()), 2);
  EXPECT_EQ(cli("drift --config " + (root / "absent.json").string()), 2);
  EXPECT_EQ(cli("plot --config " + good.string()), 2);
  EXPECT_EQ(cli("drift --config " + good.string() + " --jobs 0"), 2);
  EXPECT_EQ(cli("drift"), 2);
  EXPECT_EQ(cli("drift --config " + broken.string()), 1);
  EXPECT_EQ(cli("--help"), 0);

  std::size_t runs = 0;
  for (const auto& e : fs::directory_iterator(root / "out" / "drift")) runs += e.path().filename() != "latest";
  EXPECT_EQ(runs, 1u);
}

}  // namespace
}  // namespace forgetlab
