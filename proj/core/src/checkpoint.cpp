// Copyright (c) 2026, The forgetlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "forgetlab/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "forgetlab/errors.hpp"
#include "json_io.hpp"

namespace forgetlab::checkpoint {

namespace {

constexpr std::array<char, 8> kMagic = {'F', 'G', 'L', 'B', 'C', 'K', 'P', 'T'};

template <typename U>
void put_le(std::ostream& out, U v) {
  std::array<char, sizeof(U)> bytes{};
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(bytes.data(), bytes.size());
}

template <typename U>
U get_le(std::istream& in) {
  std::array<unsigned char, sizeof(U)> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (!in) throw ContractError("checkpoint: truncated input");
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(bytes[i]) << (8 * i);
  return v;
}

}  // namespace

const Entry* Section::find(const std::string& entry_name) const {
  for (const Entry& e : entries) {
    if (e.name == entry_name) return &e;
  }
  return nullptr;
}

const Section* Container::find(const std::string& section_name) const {
  for (const Section& s : sections) {
    if (s.name == section_name) return &s;
  }
  return nullptr;
}

void write(std::ostream& out, const Container& container) {
  nlohmann::json header;
  header["format_version"] = kFormatVersion;
  header["config"] = container.config;
  header["sections"] = nlohmann::json::array();
  for (const Section& s : container.sections) {
    nlohmann::json js;
    js["name"] = s.name;
    js["meta"] = s.meta;
    js["entries"] = nlohmann::json::array();
    for (const Entry& e : s.entries) js["entries"].push_back({{"name", e.name}, {"shape", e.tensor.shape()}});
    header["sections"].push_back(std::move(js));
  }
  const std::string text = header.dump();
  out.write(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(out, kFormatVersion);
  put_le<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const Section& s : container.sections) {
    for (const Entry& e : s.entries) {
      for (double v : e.tensor.values()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
    }
  }
  if (!out) throw std::runtime_error("checkpoint: write failed");
}

Container read(std::istream& in) {
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw ContractError("checkpoint: bad magic");
  const auto version = get_le<std::uint32_t>(in);
  if (version != kFormatVersion) {
    throw ContractError("checkpoint: unsupported format version " + std::to_string(version));
  }
  const auto header_len = get_le<std::uint64_t>(in);
  std::string text(header_len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw ContractError("checkpoint: truncated header");

  Container c;
  try {
    const auto header = nlohmann::json::parse(text);
    c.config = header.at("config").get<nanoformer::ModelConfig>();
    for (const auto& js : header.at("sections")) {
      Section s;
      s.name = js.at("name").get<std::string>();
      s.meta = js.at("meta").get<std::map<std::string, std::string>>();
      for (const auto& je : js.at("entries")) {
        auto shape = je.at("shape").get<ndgrad::Shape>();
        s.entries.push_back({je.at("name").get<std::string>(), ndgrad::Tensor(std::move(shape))});
      }
      c.sections.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ContractError(std::string("checkpoint: malformed header: ") + e.what());
  }
  for (Section& s : c.sections) {
    for (Entry& e : s.entries) {
      for (double& v : e.tensor.values()) v = std::bit_cast<double>(get_le<std::uint64_t>(in));
    }
  }
  return c;
}

void save(const std::filesystem::path& path, const Container& container) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write(out, container);
}

Container load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return read(in);
}

Section params_section(const nanoformer::Model& model) {
  Section s;
  s.name = "params";
  for (const auto& p : model.params()) s.entries.push_back({p.tag.canonical(), p.tensor});
  return s;
}

Container to_container(const nanoformer::Model& model) {
  Container c;
  c.config = model.config();
  c.sections.push_back(params_section(model));
  return c;
}

nanoformer::Model model_from(const Container& container) {
  const Section* params = container.find("params");
  if (!params) throw ContractError("checkpoint: no params section");
  nanoformer::Model model(container.config);
  if (params->entries.size() != model.params().size()) {
    throw ContractError("checkpoint: params section holds " + std::to_string(params->entries.size()) +
                        " tensors, config expects " + std::to_string(model.params().size()));
  }
  for (auto& p : model.params()) {
    const Entry* e = params->find(p.tag.canonical());
    if (!e) throw ContractError("checkpoint: missing tensor " + p.tag.canonical());
    if (e->tensor.shape() != p.tensor.shape()) {
      throw ContractError("checkpoint: tensor " + p.tag.canonical() + " has shape " +
                          ndgrad::shape_string(e->tensor.shape()) + ", expected " +
                          ndgrad::shape_string(p.tensor.shape()));
    }
    std::copy(e->tensor.values().begin(), e->tensor.values().end(), p.tensor.values().begin());
  }
  return model;
}

void save_model(const std::filesystem::path& path, const nanoformer::Model& model) {
  save(path, to_container(model));
}

nanoformer::Model load_model(const std::filesystem::path& path) { return model_from(load(path)); }

}  // namespace forgetlab::checkpoint
