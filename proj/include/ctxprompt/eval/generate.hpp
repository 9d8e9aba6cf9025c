// Copyright 2026 The ctxprompt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ctxprompt/adapters/adapter.hpp"

namespace ctxprompt {

struct GenerationConfig {
  std::size_t max_new_tokens = 40;

  void validate() const;
  std::map<std::string, std::string> to_kv() const;
  static GenerationConfig from_kv(const std::map<std::string, std::string>& kv);
  bool operator==(const GenerationConfig&) const = default;
};

// Index of the largest entry of row `row` of a [t x vocab] logits tensor;
// ties go to the lowest index.
TokenId argmax_row(const Tensor& logits, std::size_t row);

// Greedy decoding with an incremental past. The returned tokens exclude the
// terminating <eos>. Generation also stops when the next position would
// exceed the backbone's max_positions.
std::vector<TokenId> generate(const Backbone& backbone, const Adapter& adapter, std::span<const TokenId> context,
                              std::span<const std::size_t> segments, const GenerationConfig& config = {});

inline std::vector<TokenId> generate(const Backbone& backbone, const Adapter& adapter, const DialogueSample& sample,
                                     const GenerationConfig& config = {}) {
  return generate(backbone, adapter, sample.context, sample.segments, config);
}

}  // namespace ctxprompt
