// Copyright 2026 The ctxprompt Authors
// SPDX-License-Identifier: Apache-2.0
//
// Decoder-only transformer backbone (GPT-2 layout: learned absolute positions,
// pre-norm residual blocks, tanh-GELU MLP) with an explicit per-layer
// key/value past. The past is the only channel through which prompt strategies
// influence a frozen backbone.

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ctxprompt/numerics/tensor.hpp"

namespace ctxprompt {

using TokenId = std::int32_t;

struct ModelConfig {
  std::size_t n_layers = 4;
  std::size_t n_heads = 4;
  std::size_t d_model = 128;
  std::size_t vocab_size = 0;
  std::size_t max_positions = 256;
  bool tie_lm_head = true;
  std::size_t ffn_multiplier = 4;

  std::size_t d_head() const { return d_model / n_heads; }
  std::size_t d_ffn() const { return d_model * ffn_multiplier; }

  // Throws ConfigError on any violated invariant.
  void validate() const;

  std::map<std::string, std::string> to_kv() const;
  static ModelConfig from_kv(const std::map<std::string, std::string>& kv);

  bool operator==(const ModelConfig&) const = default;
};

struct LayerKV {
  Tensor key;    // [heads x t_past x d_head]
  Tensor value;  // [heads x t_past x d_head]
};

struct PastState {
  std::vector<LayerKV> layers;

  bool empty() const { return layers.empty(); }
  // t_past; all layers agree (checked by validate()).
  std::size_t length() const { return layers.empty() ? 0 : layers.front().key.dim(1); }
  void validate(const ModelConfig& config) const;
};

// Ordered, named view over parameter tensors (handles alias the owners).
class ParamSet {
 public:
  void add(std::string name, Tensor tensor) { entries_.emplace_back(std::move(name), std::move(tensor)); }
  void append(const ParamSet& other, const std::string& prefix = {});

  const std::vector<std::pair<std::string, Tensor>>& entries() const& { return entries_; }
  std::vector<std::pair<std::string, Tensor>> entries() && { return std::move(entries_); }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::size_t numel() const;
  const Tensor* find(const std::string& name) const;

  void set_requires_grad(bool value) const;
  void zero_grad() const;

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
};

struct BlockParams {
  Tensor ln1_gain, ln1_bias;
  Tensor w_query, b_query;
  // No key bias: it shifts every score in a row equally, which softmax ignores.
  Tensor w_key;
  Tensor w_value, b_value;
  Tensor w_attn_out, b_attn_out;
  Tensor ln2_gain, ln2_bias;
  Tensor w_ff_in, b_ff_in;
  Tensor w_ff_out, b_ff_out;
};

struct Backbone {
  ModelConfig config;
  // Absent for a backbone-shaped stack that only consumes embeddings (the
  // dynamic prompt encoder).
  Tensor token_embedding;  // [vocab x d]
  Tensor position_embedding;  // [max_positions x d]
  std::vector<BlockParams> blocks;
  Tensor lnf_gain, lnf_bias;
  Tensor lm_head;  // [d x vocab], only when !tie_lm_head

  // GPT-2 style initialisation: N(0, 0.02), residual projections scaled by
  // 1/sqrt(2 n_layers), zero biases, unit layer-norm gains.
  static Backbone init(const ModelConfig& config, std::uint64_t seed, bool with_token_io = true);

  bool has_token_io() const { return token_embedding.defined(); }
  ParamSet parameters() const;
  Backbone deep_copy() const;
  void set_trainable(bool trainable) const { parameters().set_requires_grad(trainable); }
};

std::size_t parameter_count(const ModelConfig& config, bool with_token_io = true);

struct ForwardResult {
  Tensor logits;  // [t x vocab]; undefined for embedding-only stacks
  Tensor hidden;  // [t x d], final layer-normed states
  PastState past;  // input past extended by this call's keys/values
};

// Runs `tokens` at positions start_pos.. on top of `past`.
ForwardResult forward(const Backbone& backbone, std::span<const TokenId> tokens, std::size_t start_pos,
                      const PastState& past);

// Same, from precomputed input embeddings [t x d] (position embeddings are
// added here).
ForwardResult forward_embeddings(const Backbone& backbone, const Tensor& inputs, std::size_t start_pos,
                                 const PastState& past, bool compute_logits = true);

// Projects final hidden states to vocabulary logits.
Tensor lm_logits(const Backbone& backbone, const Tensor& hidden);

// Order-stable FNV-1a digest over parameter names, shapes and exact bits.
std::uint64_t checksum(const ParamSet& params);
inline std::uint64_t checksum(const Backbone& backbone) { return checksum(backbone.parameters()); }
std::string checksum_hex(std::uint64_t digest);

}  // namespace ctxprompt
