// Copyright 2026 The ctxprompt Authors
// SPDX-License-Identifier: Apache-2.0

#include "ctxprompt/adapters/adapter.hpp"

#include <cmath>
#include <random>

#include "ctxprompt/errors.hpp"
#include "ctxprompt/model/checkpoint.hpp"
#include "ctxprompt/numerics/ops.hpp"
#include "ctxprompt/util/kv.hpp"

namespace ctxprompt {

namespace {

Tensor normal_tensor(Shape shape, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<Real> data(shape_numel(shape));
  for (auto& v : data) v = static_cast<Real>(dist(rng));
  return Tensor::from_data(std::move(shape), std::move(data));
}

double embedding_std(const Backbone& backbone) {
  const auto data = backbone.token_embedding.data();
  double mean = 0;
  for (Real v : data) mean += v;
  mean /= static_cast<double>(data.size());
  double var = 0;
  for (Real v : data) var += (v - mean) * (v - mean);
  return std::sqrt(var / static_cast<double>(data.size()));
}

// Per-layer keys/values from final prompt states, using each backbone layer's
// own key/value projections.
PastState project_final_states(const Backbone& backbone, const Tensor& states) {
  PastState past;
  for (const auto& p : backbone.blocks) {
    Tensor a = ops::layer_norm(states, p.ln1_gain, p.ln1_bias);
    Tensor k = ops::split_heads(ops::matmul(a, p.w_key), backbone.config.n_heads);
    Tensor v = ops::split_heads(ops::add_bias(ops::matmul(a, p.w_value), p.b_value), backbone.config.n_heads);
    past.layers.push_back({std::move(k), std::move(v)});
  }
  return past;
}

}  // namespace

std::string_view strategy_name(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::FineTune: return "finetune";
    case StrategyKind::SoftPrompt: return "softprompt";
    case StrategyKind::PTuning: return "ptuning";
    case StrategyKind::PrefixTuning: return "prefix";
    case StrategyKind::DynamicPrompt: return "dynamic";
  }
  throw ConfigError("unknown strategy kind");
}

StrategyKind parse_strategy(std::string_view name) {
  for (auto k : kAllStrategies)
    if (strategy_name(k) == name) return k;
  throw ConfigError("unknown strategy '" + std::string(name) +
                    "' (expected finetune, softprompt, ptuning, prefix or dynamic)");
}

std::size_t AdapterConfig::k() const {
  if (prompt_length > 0) return prompt_length;
  return kind == StrategyKind::PTuning ? 3 : 5;
}

void AdapterConfig::validate(const ModelConfig& model) const {
  if (kind == StrategyKind::FineTune) return;
  if (kind == StrategyKind::SoftPrompt && k() > kNumPlaceholders) {
    throw ConfigError("softprompt: prompt length " + std::to_string(k()) + " exceeds " +
                      std::to_string(kNumPlaceholders) + " placeholder ids");
  }
  if (kind == StrategyKind::PTuning) {
    if (ptuning_slots == 0) throw ConfigError("ptuning: adapter.ptuning_slots must be positive");
    if (k() * ptuning_slots > kNumPlaceholders) {
      throw ConfigError("ptuning: " + std::to_string(ptuning_slots) + " slots of " + std::to_string(k()) +
                        " prompts exceed " + std::to_string(kNumPlaceholders) + " placeholder ids");
    }
  }
  if (k() >= model.max_positions) throw CapacityError("prompt length does not fit max_positions");
}

std::map<std::string, std::string> AdapterConfig::to_kv() const {
  return {
      {"adapter.strategy", std::string(strategy_name(kind))},
      {"adapter.prompt_length", std::to_string(prompt_length)},
      {"adapter.ptuning_slots", std::to_string(ptuning_slots)},
      {"adapter.prefix_hidden", std::to_string(prefix_hidden)},
      {"adapter.dynamic_copy_init", dynamic_copy_init ? "true" : "false"},
      {"adapter.dynamic_final_layer_only", dynamic_final_layer_only ? "true" : "false"},
      {"adapter.seed", std::to_string(seed)},
  };
}

AdapterConfig AdapterConfig::from_kv(const std::map<std::string, std::string>& kv) {
  AdapterConfig c;
  if (auto it = kv.find("adapter.strategy"); it != kv.end()) c.kind = parse_strategy(it->second);
  c.prompt_length = kv::get_size(kv, "adapter.prompt_length", c.prompt_length);
  c.ptuning_slots = kv::get_size(kv, "adapter.ptuning_slots", c.ptuning_slots);
  c.prefix_hidden = kv::get_size(kv, "adapter.prefix_hidden", c.prefix_hidden);
  c.dynamic_copy_init = kv::get_bool(kv, "adapter.dynamic_copy_init", c.dynamic_copy_init);
  c.dynamic_final_layer_only = kv::get_bool(kv, "adapter.dynamic_final_layer_only", c.dynamic_final_layer_only);
  c.seed = kv::get_u64(kv, "adapter.seed", c.seed);
  return c;
}

std::size_t Composition::virtual_count() const {
  std::size_t n = 0;
  for (auto s : prompt_slot) n += s >= 0;
  return n;
}

Adapter Adapter::create(const AdapterConfig& config, const Backbone& backbone) {
  const ModelConfig& m = backbone.config;
  config.validate(m);
  Adapter a;
  a.config_ = config;
  if (config.kind == StrategyKind::FineTune) return a;

  std::mt19937_64 rng(config.seed);
  const std::size_t k = config.k(), d = m.d_model;
  const std::size_t rows = config.kind == StrategyKind::PTuning ? k * config.ptuning_slots : k;
  a.prompt_ = normal_tensor({rows, d}, backbone.has_token_io() ? embedding_std(backbone) : 0.02, rng);

  if (config.kind == StrategyKind::PrefixTuning) {
    const std::size_t hidden = config.prefix_hidden ? config.prefix_hidden : 2 * d;
    const std::size_t out = m.n_layers * 2 * d;
    a.prefix_w_in_ = normal_tensor({d, hidden}, 0.02, rng);
    a.prefix_b_in_ = Tensor::zeros({hidden});
    a.prefix_w_out_ = normal_tensor({hidden, out}, 0.02, rng);
    a.prefix_b_out_ = Tensor::zeros({out});
  }
  if (config.kind == StrategyKind::DynamicPrompt) {
    if (config.dynamic_copy_init) {
      Backbone copy = backbone.deep_copy();
      copy.token_embedding = Tensor();
      copy.lm_head = Tensor();
      a.prompt_transformer_ = std::move(copy);
    } else {
      a.prompt_transformer_ = Backbone::init(m, rng(), false);
    }
  }
  return a;
}

ParamSet Adapter::parameters() const {
  ParamSet ps;
  if (prompt_.defined()) ps.add("prompt_embeddings", prompt_);
  if (prefix_w_in_.defined()) {
    ps.add("prefix.w_in", prefix_w_in_);
    ps.add("prefix.b_in", prefix_b_in_);
    ps.add("prefix.w_out", prefix_w_out_);
    ps.add("prefix.b_out", prefix_b_out_);
  }
  if (prompt_transformer_) ps.append(prompt_transformer_->parameters(), "prompt_transformer.");
  return ps;
}

ParamSet Adapter::trainable(const Backbone& backbone) const {
  return kind() == StrategyKind::FineTune ? backbone.parameters() : parameters();
}

void Adapter::prepare(const Backbone& backbone) const {
  backbone.set_trainable(kind() == StrategyKind::FineTune);
  parameters().set_requires_grad(true);
}

ParameterCensus Adapter::census(const Backbone& backbone) const {
  ParameterCensus c;
  const std::size_t bb = backbone.parameters().numel();
  if (kind() == StrategyKind::FineTune) {
    c.trainable = bb;
    c.groups.emplace_back("backbone", bb);
    return c;
  }
  if (prompt_.defined()) c.groups.emplace_back("prompt_embeddings", prompt_.numel());
  if (prefix_w_in_.defined()) {
    c.groups.emplace_back("prefix_encoder", prefix_w_in_.numel() + prefix_b_in_.numel() + prefix_w_out_.numel() +
                                                prefix_b_out_.numel());
  }
  if (prompt_transformer_) c.groups.emplace_back("prompt_transformer", prompt_transformer_->parameters().numel());
  for (const auto& g : c.groups) c.trainable += g.second;
  c.frozen = bb;
  c.groups.emplace_back("backbone (frozen)", bb);
  return c;
}

Tensor Adapter::prefix_states() const {
  if (kind() != StrategyKind::PrefixTuning) throw StateError("prefix_states: adapter is not prefix tuning");
  Tensor h = ops::tanh(ops::add_bias(ops::matmul(prompt_, prefix_w_in_), prefix_b_in_));
  return ops::add_bias(ops::matmul(h, prefix_w_out_), prefix_b_out_);
}

PastState Adapter::prefix_past(const ModelConfig& model) const {
  Tensor states = prefix_states();
  const std::size_t d = model.d_model;
  PastState past;
  for (std::size_t l = 0; l < model.n_layers; ++l) {
    Tensor k = ops::split_heads(ops::slice_cols(states, (2 * l) * d, d), model.n_heads);
    Tensor v = ops::split_heads(ops::slice_cols(states, (2 * l + 1) * d, d), model.n_heads);
    past.layers.push_back({std::move(k), std::move(v)});
  }
  return past;
}

PastState dynamic_prompt_encode(const Tensor& prompt_embeddings, const Backbone& prompt_transformer,
                                const Backbone& backbone, std::span<const TokenId> context, bool final_layer_only) {
  const auto& pc = prompt_transformer.config;
  const auto& bc = backbone.config;
  if (pc.n_layers != bc.n_layers || pc.n_heads != bc.n_heads || pc.d_model != bc.d_model) {
    throw ConfigError("prompt transformer (L=" + std::to_string(pc.n_layers) + ", H=" + std::to_string(pc.n_heads) +
                      ", D=" + std::to_string(pc.d_model) + ") does not match backbone (L=" +
                      std::to_string(bc.n_layers) + ", H=" + std::to_string(bc.n_heads) +
                      ", D=" + std::to_string(bc.d_model) + ")");
  }
  if (context.empty()) throw DimensionError("dynamic prompt: empty context");
  const std::size_t k = prompt_embeddings.dim(0), m = context.size();
  PastState h;
  {
    NoGradScope frozen;
    h = forward(backbone, context, 0, {}).past;
  }
  auto out = forward_embeddings(prompt_transformer, prompt_embeddings, m, h, false);
  if (final_layer_only) return project_final_states(backbone, out.hidden);
  PastState injected;
  for (const auto& layer : out.past.layers) {
    injected.layers.push_back({ops::slice_time(layer.key, m, k), ops::slice_time(layer.value, m, k)});
  }
  return injected;
}

Composition Adapter::compose_context(const Backbone& backbone, std::span<const TokenId> context,
                                     std::span<const std::size_t> segments) const {
  Composition c;
  const std::size_t k = config_.k();
  auto push_real = [&](std::span<const TokenId> toks) {
    for (TokenId t : toks) {
      c.layout.push_back(t);
      c.prompt_slot.push_back(-1);
    }
  };
  auto push_virtual = [&](std::size_t first_slot, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
      c.layout.push_back(Vocabulary::placeholder(first_slot + i));
      c.prompt_slot.push_back(static_cast<std::int32_t>(first_slot + i));
    }
  };

  switch (kind()) {
    case StrategyKind::FineTune:
      push_real(context);
      break;
    case StrategyKind::SoftPrompt:
      push_virtual(0, k);
      push_real(context);
      break;
    case StrategyKind::PTuning: {
      if (segments.size() > config_.ptuning_slots) {
        throw ConfigError("ptuning: context has " + std::to_string(segments.size()) + " utterances but only " +
                          std::to_string(config_.ptuning_slots) + " prompt slots");
      }
      std::size_t pos = 0;
      for (std::size_t j = 0; j < segments.size(); ++j) {
        push_virtual(j * k, k);
        push_real(context.subspan(pos, segments[j]));
        pos += segments[j];
      }
      if (pos != context.size()) throw DimensionError("ptuning: segments do not cover the context");
      break;
    }
    case StrategyKind::PrefixTuning:
      c.injected_past = prefix_past(backbone.config);
      push_real(context);
      break;
    case StrategyKind::DynamicPrompt:
      c.injected_past = dynamic_prompt_encode(prompt_, *prompt_transformer_, backbone, context,
                                              config_.dynamic_final_layer_only);
      push_real(context);
      break;
  }
  c.start_pos = c.injected_past.length();
  c.loss_mask.assign(c.layout.size(), 0);
  if (c.total_length() > backbone.config.max_positions) {
    throw CapacityError(std::string(strategy_name(kind())) + ": composed length " + std::to_string(c.total_length()) +
                        " exceeds max_positions " + std::to_string(backbone.config.max_positions));
  }
  return c;
}

Composition Adapter::compose(const Backbone& backbone, const DialogueSample& sample) const {
  Composition c = compose_context(backbone, sample.context, sample.segments);
  for (TokenId t : sample.response) {
    c.layout.push_back(t);
    c.prompt_slot.push_back(-1);
    c.loss_mask.push_back(1);
  }
  if (c.total_length() > backbone.config.max_positions) {
    throw CapacityError(std::string(strategy_name(kind())) + ": composed length " + std::to_string(c.total_length()) +
                        " exceeds max_positions " + std::to_string(backbone.config.max_positions));
  }
  return c;
}

ForwardResult Adapter::run(const Backbone& backbone, const Composition& c) const {
  Tensor inputs = c.virtual_count() > 0
                      ? ops::embed_mixed(backbone.token_embedding, prompt_, c.layout, c.prompt_slot)
                      : ops::embedding(backbone.token_embedding, c.layout);
  return forward_embeddings(backbone, inputs, c.start_pos, c.injected_past);
}

Adapter Adapter::deep_copy() const {
  Adapter a;
  a.config_ = config_;
  a.prompt_ = prompt_.clone();
  a.prefix_w_in_ = prefix_w_in_.clone();
  a.prefix_b_in_ = prefix_b_in_.clone();
  a.prefix_w_out_ = prefix_w_out_.clone();
  a.prefix_b_out_ = prefix_b_out_.clone();
  if (prompt_transformer_) a.prompt_transformer_ = prompt_transformer_->deep_copy();
  return a;
}

Tensor response_nll_sum(const Tensor& logits, const Composition& c) {
  const std::size_t n = c.layout.size();
  std::vector<TokenId> targets(n, kPadId);
  std::vector<std::uint8_t> mask(n, 0);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    targets[i] = c.layout[i + 1];
    mask[i] = c.loss_mask[i + 1];
  }
  return ops::masked_nll_sum(logits, targets, mask);
}

std::size_t response_count(const Composition& c) {
  std::size_t n = 0;
  for (std::size_t i = 1; i < c.loss_mask.size(); ++i) n += c.loss_mask[i];
  return n;
}

void save_adapter(const std::filesystem::path& path, const Adapter& adapter, const Backbone& backbone,
                  std::uint64_t base_backbone_checksum, std::map<std::string, std::string> extra_meta) {
  Checkpoint ckpt;
  ckpt.meta = std::move(extra_meta);
  for (const auto& [k, v] : adapter.config().to_kv()) ckpt.meta[k] = v;
  for (const auto& [k, v] : backbone.config.to_kv()) ckpt.meta[k] = v;
  ckpt.meta["kind"] = "adapter";
  ckpt.meta["backbone_checksum"] = checksum_hex(base_backbone_checksum);
  if (adapter.kind() == StrategyKind::FineTune) {
    ckpt.meta["tuned_backbone_checksum"] = checksum_hex(checksum(backbone));
    for (const auto& [name, t] : backbone.parameters().entries()) ckpt.blobs.emplace_back("backbone." + name, t);
  } else {
    for (const auto& [name, t] : adapter.parameters().entries()) ckpt.blobs.emplace_back(name, t);
  }
  write_checkpoint(path, ckpt);
}

LoadedAdapter load_adapter(const std::filesystem::path& path, const Backbone& backbone) {
  const Checkpoint ckpt = read_checkpoint(path);
  if (ckpt.meta_value("kind") != "adapter") throw ParseError(path.string() + " is not an adapter checkpoint");
  const ModelConfig model = ModelConfig::from_kv(ckpt.meta);
  if (!(model == backbone.config)) throw ConfigError(path.string() + ": adapter was built for a different model config");
  const std::string expected = ckpt.meta_value("backbone_checksum");
  const std::string actual = checksum_hex(checksum(backbone));
  if (expected != actual) {
    throw ChecksumMismatchError(path.string() + ": adapter was trained against backbone " + expected +
                                ", but the supplied backbone is " + actual);
  }
  const AdapterConfig cfg = AdapterConfig::from_kv(ckpt.meta);
  LoadedAdapter out{Adapter::create(cfg, backbone), backbone, ckpt.meta};
  if (cfg.kind == StrategyKind::FineTune) {
    out.backbone = backbone.deep_copy();
    load_params(ckpt, out.backbone.parameters(), "backbone.");
  } else {
    load_params(ckpt, out.adapter.parameters());
  }
  return out;
}

}  // namespace ctxprompt
