// Copyright 2026 The ctxprompt Authors
// SPDX-License-Identifier: Apache-2.0

#include "ctxprompt/eval/generate.hpp"

#include "ctxprompt/corpus/vocabulary.hpp"
#include "ctxprompt/errors.hpp"
#include "ctxprompt/util/kv.hpp"

namespace ctxprompt {

void GenerationConfig::validate() const {
  if (max_new_tokens == 0) throw ConfigError("gen.max_new_tokens must be at least 1");
}

std::map<std::string, std::string> GenerationConfig::to_kv() const {
  return {{"gen.max_new_tokens", std::to_string(max_new_tokens)}};
}

GenerationConfig GenerationConfig::from_kv(const std::map<std::string, std::string>& m) {
  GenerationConfig c;
  c.max_new_tokens = kv::get_size(m, "gen.max_new_tokens", c.max_new_tokens);
  c.validate();
  return c;
}

TokenId argmax_row(const Tensor& logits, std::size_t row) {
  const std::size_t v = logits.dim(1);
  const auto data = logits.data().subspan(row * v, v);
  std::size_t best = 0;
  for (std::size_t i = 1; i < v; ++i) {
    if (data[i] > data[best]) best = i;
  }
  return static_cast<TokenId>(best);
}

std::vector<TokenId> generate(const Backbone& backbone, const Adapter& adapter, std::span<const TokenId> context,
                              std::span<const std::size_t> segments, const GenerationConfig& config) {
  config.validate();
  NoGradScope no_grad;
  const Composition comp = adapter.compose_context(backbone, context, segments);
  ForwardResult step = adapter.run(backbone, comp);
  std::size_t pos = comp.total_length();
  TokenId next = argmax_row(step.logits, step.logits.dim(0) - 1);

  std::vector<TokenId> out;
  while (next != kEosId && out.size() < config.max_new_tokens) {
    out.push_back(next);
    if (out.size() == config.max_new_tokens || pos >= backbone.config.max_positions) break;
    const TokenId token[] = {next};
    step = forward(backbone, token, pos, step.past);
    ++pos;
    next = argmax_row(step.logits, 0);
  }
  return out;
}

}  // namespace ctxprompt
