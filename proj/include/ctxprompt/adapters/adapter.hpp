// Copyright 2026 The ctxprompt Authors
// SPDX-License-Identifier: Apache-2.0
//
// Adaptation strategies. Each one turns a sample into a Composition: the
// token layout fed to the backbone, an optional injected key/value past, and
// the response loss mask. Everything except FineTune leaves the backbone
// frozen and trains only its own parameters.
//
//   finetune    all backbone parameters, no prompt
//   softprompt  k trainable input vectors before the context
//   ptuning     k trainable input vectors before each context utterance
//   prefix      k trainable vectors -> two-layer tanh MLP -> per-layer
//               keys/values, the same for every context
//   dynamic     a second transformer reads the context's backbone past and
//               produces per-layer keys/values for k prompt positions

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ctxprompt/corpus/sample.hpp"
#include "ctxprompt/model/transformer.hpp"

namespace ctxprompt {

enum class StrategyKind { FineTune, SoftPrompt, PTuning, PrefixTuning, DynamicPrompt };

inline constexpr std::array<StrategyKind, 5> kAllStrategies{StrategyKind::FineTune, StrategyKind::SoftPrompt,
                                                            StrategyKind::PTuning, StrategyKind::PrefixTuning,
                                                            StrategyKind::DynamicPrompt};

std::string_view strategy_name(StrategyKind kind);
StrategyKind parse_strategy(std::string_view name);  // ConfigError on unknown names

struct AdapterConfig {
  StrategyKind kind = StrategyKind::DynamicPrompt;
  std::size_t prompt_length = 0;  // 0 -> 5, or 3 per utterance for ptuning
  std::size_t ptuning_slots = 4;  // utterance positions with their own prompt block
  std::size_t prefix_hidden = 0;  // 0 -> 2 * d_model
  bool dynamic_copy_init = false;          // prompt transformer starts as a copy of the backbone
  bool dynamic_final_layer_only = false;   // project final prompt states through each backbone layer
  std::uint64_t seed = 0;

  std::size_t k() const;
  void validate(const ModelConfig& model) const;
  std::map<std::string, std::string> to_kv() const;
  static AdapterConfig from_kv(const std::map<std::string, std::string>& kv);
  bool operator==(const AdapterConfig&) const = default;
};

struct Composition {
  PastState injected_past;
  std::vector<TokenId> layout;            // virtual prompt positions carry placeholder ids
  std::vector<std::int32_t> prompt_slot;  // row of the prompt table, -1 for real tokens
  std::vector<std::uint8_t> loss_mask;    // true on response positions
  std::size_t start_pos = 0;              // injected_past.length()

  std::size_t total_length() const { return start_pos + layout.size(); }
  std::size_t virtual_count() const;
};

struct ParameterCensus {
  std::size_t trainable = 0;
  std::size_t frozen = 0;
  std::vector<std::pair<std::string, std::size_t>> groups;  // trainable groups, then "backbone (frozen)"
};

class Adapter {
 public:
  static Adapter create(const AdapterConfig& config, const Backbone& backbone);

  const AdapterConfig& config() const { return config_; }
  StrategyKind kind() const { return config_.kind; }

  // Parameters owned by the adapter (empty for FineTune).
  ParamSet parameters() const;
  // What the optimizer updates: the backbone for FineTune, parameters() otherwise.
  ParamSet trainable(const Backbone& backbone) const;
  // Sets requires_grad on trainable parameters and clears it on frozen ones.
  void prepare(const Backbone& backbone) const;
  ParameterCensus census(const Backbone& backbone) const;

  // Context only (generation) or context followed by the response (training).
  Composition compose_context(const Backbone& backbone, std::span<const TokenId> context,
                              std::span<const std::size_t> segments) const;
  Composition compose(const Backbone& backbone, const DialogueSample& sample) const;

  // Backbone pass over a composition (positions start_pos..).
  ForwardResult run(const Backbone& backbone, const Composition& composition) const;

  // Prefix encoder output [k x n_layers*2*d_model]; row i holds layer-major
  // (key, value) vectors for prompt position i.
  Tensor prefix_states() const;
  PastState prefix_past(const ModelConfig& model) const;

  const Tensor& prompt_embeddings() const { return prompt_; }
  const std::optional<Backbone>& prompt_transformer() const { return prompt_transformer_; }

  Adapter deep_copy() const;

 private:
  AdapterConfig config_;
  Tensor prompt_;  // [k x d], ptuning [slots*k x d]
  Tensor prefix_w_in_, prefix_b_in_, prefix_w_out_, prefix_b_out_;
  std::optional<Backbone> prompt_transformer_;
};

// The context-conditioned past: backbone over the context, then the prompt
// transformer over the prompt embeddings on top of that past; the prompt
// transformer's keys/values at the k prompt positions are returned.
PastState dynamic_prompt_encode(const Tensor& prompt_embeddings, const Backbone& prompt_transformer,
                                const Backbone& backbone, std::span<const TokenId> context,
                                bool final_layer_only = false);

// Sum over loss-masked positions of -log p(layout[i] | layout[<i], past).
Tensor response_nll_sum(const Tensor& logits, const Composition& composition);
std::size_t response_count(const Composition& composition);

// Adapter checkpoints record the strategy and the checksum of the backbone
// they were trained against. FineTune checkpoints carry the whole backbone.
void save_adapter(const std::filesystem::path& path, const Adapter& adapter, const Backbone& backbone,
                  std::uint64_t base_backbone_checksum, std::map<std::string, std::string> extra_meta = {});

struct LoadedAdapter {
  Adapter adapter;
  Backbone backbone;  // the tuned backbone for FineTune, otherwise the one passed in
  std::map<std::string, std::string> meta;
};
// ChecksumMismatchError when `backbone` is not the one the adapter was trained on.
LoadedAdapter load_adapter(const std::filesystem::path& path, const Backbone& backbone);

}  // namespace ctxprompt
