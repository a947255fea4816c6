// Copyright (c) 2026, The forgetlab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <json.hpp>

#include "forgetlab/nanoformer.hpp"

namespace forgetlab::nanoformer {

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"num_layers", c.num_layers}, {"d_model", c.d_model},     {"d_ffn", c.d_ffn},
                     {"num_heads", c.num_heads},   {"src_vocab", c.src_vocab}, {"tgt_vocab", c.tgt_vocab},
                     {"max_len", c.max_len},       {"dropout", c.dropout},     {"seed", c.seed},
                     {"pre_norm", c.pre_norm}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  j.at("num_layers").get_to(c.num_layers);
  j.at("d_model").get_to(c.d_model);
  j.at("d_ffn").get_to(c.d_ffn);
  j.at("num_heads").get_to(c.num_heads);
  j.at("src_vocab").get_to(c.src_vocab);
  j.at("tgt_vocab").get_to(c.tgt_vocab);
  j.at("max_len").get_to(c.max_len);
  j.at("dropout").get_to(c.dropout);
  j.at("seed").get_to(c.seed);
  j.at("pre_norm").get_to(c.pre_norm);
}

}  // namespace forgetlab::nanoformer
