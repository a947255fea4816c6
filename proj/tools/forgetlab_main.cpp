// Copyright (c) 2026, The forgetlab Authors
// SPDX-License-Identifier: Apache-2.0

// forgetlab <forgetting|modules|importance|erasure|drift> --config <path>
//           [--jobs N] [--overwrite]
//
// Exit status: 0 on success, 2 on a configuration error, 1 otherwise.

#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "forgetlab/errors.hpp"
#include "forgetlab/experiment.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kRuntimeError = 1;
constexpr int kConfigError = 2;

}  // namespace

int main(int argc, char** argv) {
  namespace ex = forgetlab::experiment;

  CLI::App app{"Catastrophic-forgetting forensics on a tiny encoder-decoder transformer"};
  app.require_subcommand(1);

  std::string config_path;
  std::size_t jobs = 1;
  bool overwrite = false;
  for (const auto& name : ex::commands()) {
    auto* sub = app.add_subcommand(name, "run the " + name + " experiment");
    sub->add_option("--config", config_path, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);
    sub->add_flag("--overwrite", overwrite, "write into <output_dir>/<command>/latest, replacing it");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfigError;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    const auto config = ex::load_config(config_path);
    ex::RunOptions options;
    options.jobs = jobs;
    options.overwrite = overwrite;
    options.log = &std::cerr;
    const auto dir = ex::run_command(command, config, options);
    std::cout << dir.string() << '\n';
    return kOk;
  } catch (const forgetlab::ConfigError& e) {
    std::cerr << "forgetlab: config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "forgetlab: error: " << e.what() << '\n';
    return kRuntimeError;
  }
}
