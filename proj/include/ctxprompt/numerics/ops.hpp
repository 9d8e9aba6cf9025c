// Copyright 2026 The ctxprompt Authors
// SPDX-License-Identifier: Apache-2.0
//
// Differentiable primitives. Each op computes its forward value eagerly and,
// when a tape is active and an input requires a gradient, records a closure
// that accumulates input gradients during the reverse sweep.
//
// Broadcasting is limited to a trailing-dimension bias (add_bias); anything
// else needs an explicit reshape.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ctxprompt/numerics/tensor.hpp"

namespace ctxprompt::ops {

// [m x k] . [k x n] -> [m x n]
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, Real factor);
// x[..., n] + bias[n]
Tensor add_bias(const Tensor& x, const Tensor& bias);
// Sum of all elements -> scalar.
Tensor sum(const Tensor& x);
// Sum of scalars -> scalar.
Tensor add_n(std::span<const Tensor> scalars);

// GPT-2 tanh approximation:
//   gelu(x) = 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))
Tensor gelu(const Tensor& x);
Tensor tanh(const Tensor& x);

// Softmax along `axis` (negative counts from the end). The per-slice maximum
// is subtracted before exponentiation.
Tensor softmax(const Tensor& x, int axis = -1);

inline constexpr Real kLayerNormEps = Real(1e-5);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, Real eps = kLayerNormEps);

// Rows of table[V x d] selected by ids -> [t x d].
Tensor embedding(const Tensor& table, std::span<const std::int32_t> ids);
// Row i is prompt_table[slots[i]] when slots[i] >= 0, else table[ids[i]].
Tensor embed_mixed(const Tensor& table, const Tensor& prompt_table, std::span<const std::int32_t> ids,
                   std::span<const std::int32_t> slots);

Tensor reshape(const Tensor& x, Shape shape);
Tensor concat_rows(const Tensor& a, const Tensor& b);                     // 2-D, axis 0
Tensor slice_rows(const Tensor& x, std::size_t start, std::size_t count);  // 2-D, axis 0
Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count);  // 2-D, axis 1
// [heads x t x d] tensors joined / cut along the time axis.
Tensor concat_time(const Tensor& a, const Tensor& b);
Tensor slice_time(const Tensor& x, std::size_t start, std::size_t count);
// [t x heads*d] <-> [heads x t x d]
Tensor split_heads(const Tensor& x, std::size_t heads);
Tensor merge_heads(const Tensor& x);

// Scaled dot-product attention, q:[h x t x d], k,v:[h x T x d]. Query i sees
// key j iff j < causal_offset + i + 1.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t causal_offset);

// Sum over positions with mask[i] != 0 of -log softmax(logits[i])[targets[i]].
Tensor masked_nll_sum(const Tensor& logits, std::span<const std::int32_t> targets, std::span<const std::uint8_t> mask);
// Mean of the above over masked positions. All-false mask -> EmptyLossError.
Tensor masked_cross_entropy(const Tensor& logits, std::span<const std::int32_t> targets,
                            std::span<const std::uint8_t> mask);

}  // namespace ctxprompt::ops
