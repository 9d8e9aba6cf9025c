// Copyright 2026 The ctxprompt Authors
// SPDX-License-Identifier: Apache-2.0

#include "ctxprompt/model/transformer.hpp"

#include <cmath>
#include <cstdio>
#include <random>

#include "ctxprompt/errors.hpp"
#include "ctxprompt/model/digest.hpp"
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

}  // namespace

void ModelConfig::validate() const {
  if (n_layers == 0) throw ConfigError("model config: n_layers must be positive");
  if (n_heads == 0) throw ConfigError("model config: n_heads must be positive");
  if (d_model == 0) throw ConfigError("model config: d_model must be positive");
  if (d_model % n_heads != 0) {
    throw ConfigError("model config: d_model " + std::to_string(d_model) + " is not divisible by n_heads " +
                      std::to_string(n_heads));
  }
  if (vocab_size == 0) throw ConfigError("model config: vocab_size must be positive");
  if (max_positions == 0) throw ConfigError("model config: max_positions must be positive");
  if (ffn_multiplier == 0) throw ConfigError("model config: ffn_multiplier must be positive");
}

std::map<std::string, std::string> ModelConfig::to_kv() const {
  return {
      {"model.n_layers", std::to_string(n_layers)},
      {"model.n_heads", std::to_string(n_heads)},
      {"model.d_model", std::to_string(d_model)},
      {"model.vocab_size", std::to_string(vocab_size)},
      {"model.max_positions", std::to_string(max_positions)},
      {"model.tie_lm_head", tie_lm_head ? "true" : "false"},
      {"model.ffn_multiplier", std::to_string(ffn_multiplier)},
  };
}

ModelConfig ModelConfig::from_kv(const std::map<std::string, std::string>& m) {
  ModelConfig c;
  c.n_layers = kv::get_size(m, "model.n_layers", c.n_layers);
  c.n_heads = kv::get_size(m, "model.n_heads", c.n_heads);
  c.d_model = kv::get_size(m, "model.d_model", c.d_model);
  c.vocab_size = kv::get_size(m, "model.vocab_size", c.vocab_size);
  c.max_positions = kv::get_size(m, "model.max_positions", c.max_positions);
  c.ffn_multiplier = kv::get_size(m, "model.ffn_multiplier", c.ffn_multiplier);
  c.tie_lm_head = kv::get_bool(m, "model.tie_lm_head", c.tie_lm_head);
  return c;
}

void PastState::validate(const ModelConfig& config) const {
  if (layers.empty()) return;
  if (layers.size() != config.n_layers) {
    throw ConfigError("past state has " + std::to_string(layers.size()) + " layers, model has " +
                      std::to_string(config.n_layers));
  }
  const Shape expected{config.n_heads, length(), config.d_head()};
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (layers[l].key.shape() != expected || layers[l].value.shape() != expected) {
      throw DimensionError("past state layer " + std::to_string(l) + ": key " + shape_str(layers[l].key.shape()) +
                           " / value " + shape_str(layers[l].value.shape()) + ", expected " + shape_str(expected));
    }
  }
}

void ParamSet::append(const ParamSet& other, const std::string& prefix) {
  for (const auto& [name, t] : other.entries_) entries_.emplace_back(prefix + name, t);
}

std::size_t ParamSet::numel() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.second.numel();
  return n;
}

const Tensor* ParamSet::find(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.first == name) return &e.second;
  return nullptr;
}

void ParamSet::set_requires_grad(bool value) const {
  for (const auto& e : entries_) {
    Tensor t = e.second;
    t.set_requires_grad(value);
  }
}

void ParamSet::zero_grad() const {
  for (const auto& e : entries_) {
    Tensor t = e.second;
    t.clear_grad();
  }
}

Backbone Backbone::init(const ModelConfig& config, std::uint64_t seed, bool with_token_io) {
  config.validate();
  std::mt19937_64 rng(seed);
  const std::size_t d = config.d_model;
  const double std_w = 0.02;
  const double std_resid = 0.02 / std::sqrt(2.0 * static_cast<double>(config.n_layers));

  Backbone b;
  b.config = config;
  if (with_token_io) b.token_embedding = normal_tensor({config.vocab_size, d}, std_w, rng);
  b.position_embedding = normal_tensor({config.max_positions, d}, 0.01, rng);
  b.blocks.reserve(config.n_layers);
  for (std::size_t l = 0; l < config.n_layers; ++l) {
    BlockParams p;
    p.ln1_gain = Tensor::full({d}, Real{1});
    p.ln1_bias = Tensor::zeros({d});
    p.w_query = normal_tensor({d, d}, std_w, rng);
    p.b_query = Tensor::zeros({d});
    p.w_key = normal_tensor({d, d}, std_w, rng);
    p.w_value = normal_tensor({d, d}, std_w, rng);
    p.b_value = Tensor::zeros({d});
    p.w_attn_out = normal_tensor({d, d}, std_resid, rng);
    p.b_attn_out = Tensor::zeros({d});
    p.ln2_gain = Tensor::full({d}, Real{1});
    p.ln2_bias = Tensor::zeros({d});
    p.w_ff_in = normal_tensor({d, config.d_ffn()}, std_w, rng);
    p.b_ff_in = Tensor::zeros({config.d_ffn()});
    p.w_ff_out = normal_tensor({config.d_ffn(), d}, std_resid, rng);
    p.b_ff_out = Tensor::zeros({d});
    b.blocks.push_back(std::move(p));
  }
  b.lnf_gain = Tensor::full({d}, Real{1});
  b.lnf_bias = Tensor::zeros({d});
  if (with_token_io && !config.tie_lm_head) b.lm_head = normal_tensor({d, config.vocab_size}, std_w, rng);
  return b;
}

ParamSet Backbone::parameters() const {
  ParamSet ps;
  if (token_embedding.defined()) ps.add("token_embedding", token_embedding);
  ps.add("position_embedding", position_embedding);
  for (std::size_t l = 0; l < blocks.size(); ++l) {
    const auto& p = blocks[l];
    const std::string pre = "blocks." + std::to_string(l) + ".";
    ps.add(pre + "ln1.gain", p.ln1_gain);
    ps.add(pre + "ln1.bias", p.ln1_bias);
    ps.add(pre + "attn.w_query", p.w_query);
    ps.add(pre + "attn.b_query", p.b_query);
    ps.add(pre + "attn.w_key", p.w_key);
    ps.add(pre + "attn.w_value", p.w_value);
    ps.add(pre + "attn.b_value", p.b_value);
    ps.add(pre + "attn.w_out", p.w_attn_out);
    ps.add(pre + "attn.b_out", p.b_attn_out);
    ps.add(pre + "ln2.gain", p.ln2_gain);
    ps.add(pre + "ln2.bias", p.ln2_bias);
    ps.add(pre + "ff.w_in", p.w_ff_in);
    ps.add(pre + "ff.b_in", p.b_ff_in);
    ps.add(pre + "ff.w_out", p.w_ff_out);
    ps.add(pre + "ff.b_out", p.b_ff_out);
  }
  ps.add("lnf.gain", lnf_gain);
  ps.add("lnf.bias", lnf_bias);
  if (lm_head.defined()) ps.add("lm_head", lm_head);
  return ps;
}

Backbone Backbone::deep_copy() const {
  Backbone b;
  b.config = config;
  b.token_embedding = token_embedding.clone();
  b.position_embedding = position_embedding.clone();
  for (const auto& p : blocks) {
    BlockParams q;
    q.ln1_gain = p.ln1_gain.clone();
    q.ln1_bias = p.ln1_bias.clone();
    q.w_query = p.w_query.clone();
    q.b_query = p.b_query.clone();
    q.w_key = p.w_key.clone();
    q.w_value = p.w_value.clone();
    q.b_value = p.b_value.clone();
    q.w_attn_out = p.w_attn_out.clone();
    q.b_attn_out = p.b_attn_out.clone();
    q.ln2_gain = p.ln2_gain.clone();
    q.ln2_bias = p.ln2_bias.clone();
    q.w_ff_in = p.w_ff_in.clone();
    q.b_ff_in = p.b_ff_in.clone();
    q.w_ff_out = p.w_ff_out.clone();
    q.b_ff_out = p.b_ff_out.clone();
    b.blocks.push_back(std::move(q));
  }
  b.lnf_gain = lnf_gain.clone();
  b.lnf_bias = lnf_bias.clone();
  b.lm_head = lm_head.clone();
  return b;
}

std::size_t parameter_count(const ModelConfig& c, bool with_token_io) {
  const std::size_t d = c.d_model, f = c.d_ffn();
  const std::size_t per_block = 2 * d              // ln1
                                + d * d + d        // query
                                + d * d            // key
                                + d * d + d        // value
                                + d * d + d        // attn out
                                + 2 * d            // ln2
                                + d * f + f        // ff in
                                + f * d + d;       // ff out
  std::size_t n = c.max_positions * d + c.n_layers * per_block + 2 * d;
  if (with_token_io) {
    n += c.vocab_size * d;
    if (!c.tie_lm_head) n += d * c.vocab_size;
  }
  return n;
}

Tensor lm_logits(const Backbone& backbone, const Tensor& hidden) {
  if (!backbone.has_token_io()) throw ConfigError("lm_logits: backbone has no output head");
  if (backbone.lm_head.defined()) return ops::matmul(hidden, backbone.lm_head);
  // Tied head: logits[i][j] = h_i . E_j
  const auto& E = backbone.token_embedding;
  const std::size_t t = hidden.dim(0), d = hidden.dim(1), v = E.dim(0);
  if (E.dim(1) != d) {
    throw DimensionError("lm_logits: hidden " + shape_str(hidden.shape()) + " vs embedding " + shape_str(E.shape()));
  }
  std::vector<Real> out(t * v);
  const auto hd = hidden.data();
  const auto ed = E.data();
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t j = 0; j < v; ++j) {
      Real s = 0;
      const Real* hr = hd.data() + i * d;
      const Real* er = ed.data() + j * d;
      for (std::size_t c = 0; c < d; ++c) s += hr[c] * er[c];
      out[i * v + j] = s;
    }
  const bool rg = Tape::active() && (hidden.requires_grad() || E.requires_grad());
  Tensor result = Tensor::from_data({t, v}, std::move(out), rg);
  if (rg) {
    auto hi = hidden.impl(), ei = E.impl(), oi = result.impl();
    Tape::active()->record("tied_lm_head", oi, [hi, ei, oi, t, d, v] {
      const auto& g = oi->grad;
      if (hi->requires_grad) {
        hi->ensure_grad();
        for (std::size_t i = 0; i < t; ++i) {
          Real* gh = hi->grad.data() + i * d;
          for (std::size_t j = 0; j < v; ++j) {
            const Real gij = g[i * v + j];
            const Real* er = ei->data.data() + j * d;
            for (std::size_t c = 0; c < d; ++c) gh[c] += gij * er[c];
          }
        }
      }
      if (ei->requires_grad) {
        ei->ensure_grad();
        for (std::size_t i = 0; i < t; ++i) {
          const Real* hr = hi->data.data() + i * d;
          for (std::size_t j = 0; j < v; ++j) {
            const Real gij = g[i * v + j];
            Real* ge = ei->grad.data() + j * d;
            for (std::size_t c = 0; c < d; ++c) ge[c] += gij * hr[c];
          }
        }
      }
    });
  }
  return result;
}

ForwardResult forward(const Backbone& backbone, std::span<const TokenId> tokens, std::size_t start_pos,
                      const PastState& past) {
  if (!backbone.has_token_io()) throw ConfigError("forward: backbone has no token embedding");
  if (tokens.empty()) throw DimensionError("forward: empty token sequence");
  return forward_embeddings(backbone, ops::embedding(backbone.token_embedding, tokens), start_pos, past);
}

ForwardResult forward_embeddings(const Backbone& backbone, const Tensor& inputs, std::size_t start_pos,
                                 const PastState& past, bool compute_logits) {
  const auto& cfg = backbone.config;
  if (inputs.rank() != 2 || inputs.dim(1) != cfg.d_model) {
    throw DimensionError("forward: inputs " + shape_str(inputs.shape()) + " do not have width " +
                         std::to_string(cfg.d_model));
  }
  past.validate(cfg);
  if (start_pos != past.length()) {
    throw ConfigError("forward: start_pos " + std::to_string(start_pos) + " differs from past length " +
                      std::to_string(past.length()));
  }
  const std::size_t t = inputs.dim(0);
  if (start_pos + t > cfg.max_positions) {
    throw CapacityError("forward: positions up to " + std::to_string(start_pos + t) + " exceed max_positions " +
                        std::to_string(cfg.max_positions));
  }

  std::vector<TokenId> positions(t);
  for (std::size_t i = 0; i < t; ++i) positions[i] = static_cast<TokenId>(start_pos + i);
  Tensor h = ops::add(inputs, ops::embedding(backbone.position_embedding, positions));

  ForwardResult result;
  result.past.layers.reserve(cfg.n_layers);
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    const auto& p = backbone.blocks[l];
    Tensor a = ops::layer_norm(h, p.ln1_gain, p.ln1_bias);
    Tensor q = ops::split_heads(ops::add_bias(ops::matmul(a, p.w_query), p.b_query), cfg.n_heads);
    Tensor k = ops::split_heads(ops::matmul(a, p.w_key), cfg.n_heads);
    Tensor v = ops::split_heads(ops::add_bias(ops::matmul(a, p.w_value), p.b_value), cfg.n_heads);
    if (!past.empty()) {
      k = ops::concat_time(past.layers[l].key, k);
      v = ops::concat_time(past.layers[l].value, v);
    }
    Tensor att = ops::merge_heads(ops::attention(q, k, v, start_pos));
    h = ops::add(h, ops::add_bias(ops::matmul(att, p.w_attn_out), p.b_attn_out));
    Tensor m = ops::layer_norm(h, p.ln2_gain, p.ln2_bias);
    Tensor ff = ops::gelu(ops::add_bias(ops::matmul(m, p.w_ff_in), p.b_ff_in));
    h = ops::add(h, ops::add_bias(ops::matmul(ff, p.w_ff_out), p.b_ff_out));
    result.past.layers.push_back(LayerKV{std::move(k), std::move(v)});
  }
  result.hidden = ops::layer_norm(h, backbone.lnf_gain, backbone.lnf_bias);
  if (compute_logits && backbone.has_token_io()) result.logits = lm_logits(backbone, result.hidden);
  return result;
}

std::uint64_t checksum(const ParamSet& params) {
  Fnv1a h;
  for (const auto& [name, t] : params.entries()) {
    h.update(name);
    for (auto d : t.shape()) h.update_pod(static_cast<std::uint64_t>(d));
    const auto data = t.data();
    h.update(std::as_bytes(data));
  }
  return h.digest();
}

std::string checksum_hex(std::uint64_t digest) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(digest));
  return buf;
}

}  // namespace ctxprompt
