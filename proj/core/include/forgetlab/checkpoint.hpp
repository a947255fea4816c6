// Copyright (c) 2026, The forgetlab Authors
// SPDX-License-Identifier: Apache-2.0

// Self-describing binary container for model parameters and per-parameter
// side tables such as importance scores.
//
// Layout (all integers little-endian):
//   8 bytes   magic "FGLBCKPT"
//   u32       format version
//   u64       header length H
//   H bytes   UTF-8 JSON header: {"format_version", "config", "sections":
//             [{"name", "meta", "entries": [{"name", "shape"}]}]}
//   payload   every entry's values as IEEE-754 float64, little-endian, in
//             header order

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "forgetlab/nanoformer.hpp"

namespace forgetlab::checkpoint {

inline constexpr std::uint32_t kFormatVersion = 1;

struct Entry {
  std::string name;
  ndgrad::Tensor tensor;
};

struct Section {
  std::string name;
  std::map<std::string, std::string> meta;
  std::vector<Entry> entries;

  const Entry* find(const std::string& entry_name) const;
};

struct Container {
  nanoformer::ModelConfig config;
  std::vector<Section> sections;

  const Section* find(const std::string& section_name) const;
};

void write(std::ostream& out, const Container& container);
/// Throws ContractError on malformed input.
Container read(std::istream& in);

void save(const std::filesystem::path& path, const Container& container);
Container load(const std::filesystem::path& path);

/// "params" section keyed by canonical tag.
Section params_section(const nanoformer::Model& model);
Container to_container(const nanoformer::Model& model);
/// Rebuilds a model from the config and "params" section.
nanoformer::Model model_from(const Container& container);

void save_model(const std::filesystem::path& path, const nanoformer::Model& model);
nanoformer::Model load_model(const std::filesystem::path& path);

}  // namespace forgetlab::checkpoint
