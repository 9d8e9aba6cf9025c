// Copyright 2026 The ctxprompt Authors
// SPDX-License-Identifier: Apache-2.0

#include "ctxprompt/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <initializer_list>
#include <limits>
#include <string>
#include <utility>

#include "ctxprompt/errors.hpp"

namespace ctxprompt::ops {

namespace {

using ImplPtr = std::shared_ptr<detail::TensorImpl>;

bool recording(std::initializer_list<const Tensor*> inputs) {
  if (Tape::active() == nullptr) return false;
  for (const Tensor* t : inputs) {
    if (t->defined() && t->requires_grad()) return true;
  }
  return false;
}

Tensor make(Shape shape, std::vector<Real> data, bool requires_grad) {
  return Tensor::from_data(std::move(shape), std::move(data), requires_grad);
}

void record(std::string_view op, const Tensor& out, std::function<void()> fn) {
  Tape::active()->record(op, out.impl(), std::move(fn));
}

// Returns the accumulator of `t` if it participates in differentiation.
Real* grad_of(const ImplPtr& t) {
  if (!t || !t->requires_grad) return nullptr;
  t->ensure_grad();
  return t->grad.data();
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + " tensor, got " +
                         shape_str(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

// C[m x n] += A[m x k] . B[k x n]. Four rows share each B row load; every
// output element still accumulates over p in increasing order.
void gemm_acc(const Real* A, const Real* B, Real* C, std::size_t m, std::size_t k, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    Real* c0 = C + (i + 0) * n;
    Real* c1 = C + (i + 1) * n;
    Real* c2 = C + (i + 2) * n;
    Real* c3 = C + (i + 3) * n;
    const Real* a0 = A + (i + 0) * k;
    const Real* a1 = A + (i + 1) * k;
    const Real* a2 = A + (i + 2) * k;
    const Real* a3 = A + (i + 3) * k;
    for (std::size_t p = 0; p < k; ++p) {
      const Real* b = B + p * n;
      const Real x0 = a0[p], x1 = a1[p], x2 = a2[p], x3 = a3[p];
      for (std::size_t j = 0; j < n; ++j) {
        const Real bj = b[j];
        c0[j] += x0 * bj;
        c1[j] += x1 * bj;
        c2[j] += x2 * bj;
        c3[j] += x3 * bj;
      }
    }
  }
  for (; i < m; ++i) {
    Real* c0 = C + i * n;
    const Real* a0 = A + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const Real* b = B + p * n;
      const Real x0 = a0[p];
      for (std::size_t j = 0; j < n; ++j) c0[j] += x0 * b[j];
    }
  }
}

std::vector<Real> transpose(const Real* src, std::size_t rows, std::size_t cols) {
  std::vector<Real> out(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = src[r * cols + c];
  return out;
}

std::size_t normalize_axis(int axis, std::size_t rank) {
  const int r = static_cast<int>(rank);
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) throw DimensionError("axis " + std::to_string(axis) + " out of range for rank " + std::to_string(rank));
  return static_cast<std::size_t>(a);
}

constexpr Real kGeluC = Real(0.7978845608028654);  // sqrt(2/pi)
constexpr Real kGeluA = Real(0.044715);

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<Real> out(m * n, Real{0});
  gemm_acc(a.data().data(), b.data().data(), out.data(), m, k, n);
  const bool rg = recording({&a, &b});
  Tensor result = make({m, n}, std::move(out), rg);
  if (rg) {
    ImplPtr ai = a.impl(), bi = b.impl(), oi = result.impl();
    record("matmul", result, [ai, bi, oi, m, k, n] {
      const Real* g = oi->grad.data();
      if (Real* ga = grad_of(ai)) {
        auto bt = transpose(bi->data.data(), k, n);
        gemm_acc(g, bt.data(), ga, m, n, k);
      }
      if (Real* gb = grad_of(bi)) {
        auto at = transpose(ai->data.data(), m, k);
        gemm_acc(at.data(), g, gb, k, m, n);
      }
    });
  }
  return result;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  const auto ad = a.data();
  const auto bd = b.data();
  std::vector<Real> out(ad.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] + bd[i];
  const bool rg = recording({&a, &b});
  Tensor result = make(a.shape(), std::move(out), rg);
  if (rg) {
    ImplPtr ai = a.impl(), bi = b.impl(), oi = result.impl();
    record("add", result, [ai, bi, oi] {
      const auto& g = oi->grad;
      if (Real* ga = grad_of(ai))
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      if (Real* gb = grad_of(bi))
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
    });
  }
  return result;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  const auto ad = a.data();
  const auto bd = b.data();
  std::vector<Real> out(ad.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * bd[i];
  const bool rg = recording({&a, &b});
  Tensor result = make(a.shape(), std::move(out), rg);
  if (rg) {
    ImplPtr ai = a.impl(), bi = b.impl(), oi = result.impl();
    record("mul", result, [ai, bi, oi] {
      const auto& g = oi->grad;
      if (Real* ga = grad_of(ai))
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bi->data[i];
      if (Real* gb = grad_of(bi))
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * ai->data[i];
    });
  }
  return result;
}

Tensor scale(const Tensor& x, Real factor) {
  const auto xd = x.data();
  std::vector<Real> out(xd.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xd[i] * factor;
  const bool rg = recording({&x});
  Tensor result = make(x.shape(), std::move(out), rg);
  if (rg) {
    ImplPtr xi = x.impl(), oi = result.impl();
    record("scale", result, [xi, oi, factor] {
      Real* gx = grad_of(xi);
      const auto& g = oi->grad;
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * factor;
    });
  }
  return result;
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  if (bias.rank() != 1 || x.rank() == 0 || x.shape().back() != bias.dim(0)) {
    throw DimensionError("add_bias: bias " + shape_str(bias.shape()) + " does not match trailing dim of " +
                         shape_str(x.shape()));
  }
  const std::size_t n = bias.dim(0);
  const std::size_t rows = x.numel() / n;
  const auto xd = x.data();
  const auto bd = bias.data();
  std::vector<Real> out(xd.size());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] = xd[r * n + j] + bd[j];
  const bool rg = recording({&x, &bias});
  Tensor result = make(x.shape(), std::move(out), rg);
  if (rg) {
    ImplPtr xi = x.impl(), bi = bias.impl(), oi = result.impl();
    record("add_bias", result, [xi, bi, oi, rows, n] {
      const auto& g = oi->grad;
      if (Real* gx = grad_of(xi))
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      if (Real* gb = grad_of(bi))
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < n; ++j) gb[j] += g[r * n + j];
    });
  }
  return result;
}

Tensor sum(const Tensor& x) {
  Real acc = 0;
  for (Real v : x.data()) acc += v;
  const bool rg = recording({&x});
  Tensor result = make({}, {acc}, rg);
  if (rg) {
    ImplPtr xi = x.impl(), oi = result.impl();
    record("sum", result, [xi, oi] {
      Real* gx = grad_of(xi);
      const Real g = oi->grad[0];
      for (std::size_t i = 0; i < xi->data.size(); ++i) gx[i] += g;
    });
  }
  return result;
}

Tensor add_n(std::span<const Tensor> scalars) {
  if (scalars.empty()) throw DimensionError("add_n: no operands");
  Real acc = 0;
  bool rg = false;
  for (const auto& s : scalars) {
    if (s.numel() != 1) throw DimensionError("add_n: operand " + shape_str(s.shape()) + " is not a scalar");
    acc += s.item();
    rg = rg || recording({&s});
  }
  Tensor result = make({}, {acc}, rg);
  if (rg) {
    std::vector<ImplPtr> ins;
    ins.reserve(scalars.size());
    for (const auto& s : scalars) ins.push_back(s.impl());
    ImplPtr oi = result.impl();
    record("add_n", result, [ins = std::move(ins), oi] {
      const Real g = oi->grad[0];
      for (const auto& in : ins)
        if (Real* gi = grad_of(in)) gi[0] += g;
    });
  }
  return result;
}

Tensor gelu(const Tensor& x) {
  const auto xd = x.data();
  std::vector<Real> out(xd.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const Real v = xd[i];
    out[i] = Real(0.5) * v * (Real(1) + std::tanh(kGeluC * (v + kGeluA * v * v * v)));
  }
  const bool rg = recording({&x});
  Tensor result = make(x.shape(), std::move(out), rg);
  if (rg) {
    ImplPtr xi = x.impl(), oi = result.impl();
    record("gelu", result, [xi, oi] {
      Real* gx = grad_of(xi);
      const auto& g = oi->grad;
      for (std::size_t i = 0; i < g.size(); ++i) {
        const Real v = xi->data[i];
        const Real t = std::tanh(kGeluC * (v + kGeluA * v * v * v));
        const Real dt = kGeluC * (Real(1) + Real(3) * kGeluA * v * v);
        gx[i] += g[i] * (Real(0.5) * (Real(1) + t) + Real(0.5) * v * (Real(1) - t * t) * dt);
      }
    });
  }
  return result;
}

Tensor tanh(const Tensor& x) {
  const auto xd = x.data();
  std::vector<Real> out(xd.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(xd[i]);
  const bool rg = recording({&x});
  Tensor result = make(x.shape(), std::move(out), rg);
  if (rg) {
    ImplPtr xi = x.impl(), oi = result.impl();
    record("tanh", result, [xi, oi] {
      Real* gx = grad_of(xi);
      const auto& g = oi->grad;
      const auto& y = oi->data;
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (Real(1) - y[i] * y[i]);
    });
  }
  return result;
}

Tensor softmax(const Tensor& x, int axis) {
  const auto& shape = x.shape();
  const std::size_t ax = normalize_axis(axis, shape.size());
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < ax; ++i) outer *= shape[i];
  for (std::size_t i = ax + 1; i < shape.size(); ++i) inner *= shape[i];
  const std::size_t n = shape[ax];
  const auto xd = x.data();
  std::vector<Real> out(xd.size());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * n * inner + in;
      Real mx = -std::numeric_limits<Real>::infinity();
      for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, xd[base + j * inner]);
      Real z = 0;
      for (std::size_t j = 0; j < n; ++j) {
        const Real e = std::exp(xd[base + j * inner] - mx);
        out[base + j * inner] = e;
        z += e;
      }
      for (std::size_t j = 0; j < n; ++j) out[base + j * inner] /= z;
    }
  }
  const bool rg = recording({&x});
  Tensor result = make(shape, std::move(out), rg);
  if (rg) {
    ImplPtr xi = x.impl(), oi = result.impl();
    record("softmax", result, [xi, oi, outer, inner, n] {
      Real* gx = grad_of(xi);
      const auto& g = oi->grad;
      const auto& y = oi->data;
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
          const std::size_t base = o * n * inner + in;
          Real dot = 0;
          for (std::size_t j = 0; j < n; ++j) dot += g[base + j * inner] * y[base + j * inner];
          for (std::size_t j = 0; j < n; ++j) {
            const std::size_t idx = base + j * inner;
            gx[idx] += y[idx] * (g[idx] - dot);
          }
        }
      }
    });
  }
  return result;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, Real eps) {
  if (!(eps > 0)) throw ConfigError("layer_norm: eps must be positive");
  if (x.rank() == 0 || gain.rank() != 1 || bias.rank() != 1 || gain.dim(0) != x.shape().back() ||
      bias.dim(0) != gain.dim(0)) {
    throw DimensionError("layer_norm: gain " + shape_str(gain.shape()) + " / bias " + shape_str(bias.shape()) +
                         " do not match " + shape_str(x.shape()));
  }
  const std::size_t d = gain.dim(0);
  const std::size_t rows = x.numel() / d;
  const auto xd = x.data();
  const auto gd = gain.data();
  const auto bd = bias.data();
  std::vector<Real> out(xd.size());
  std::vector<Real> xhat(xd.size());
  std::vector<Real> rstd(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* row = xd.data() + r * d;
    Real mean = 0;
    for (std::size_t j = 0; j < d; ++j) mean += row[j];
    mean /= static_cast<Real>(d);
    Real var = 0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= static_cast<Real>(d);
    const Real rs = Real(1) / std::sqrt(var + eps);
    rstd[r] = rs;
    for (std::size_t j = 0; j < d; ++j) {
      const Real h = (row[j] - mean) * rs;
      xhat[r * d + j] = h;
      out[r * d + j] = h * gd[j] + bd[j];
    }
  }
  const bool rg = recording({&x, &gain, &bias});
  Tensor result = make(x.shape(), std::move(out), rg);
  if (rg) {
    ImplPtr xi = x.impl(), gi = gain.impl(), bi = bias.impl(), oi = result.impl();
    record("layer_norm", result, [xi, gi, bi, oi, xhat = std::move(xhat), rstd = std::move(rstd), rows, d] {
      const auto& g = oi->grad;
      Real* gg = grad_of(gi);
      Real* gb = grad_of(bi);
      Real* gx = grad_of(xi);
      const auto& gain_d = gi->data;
      std::vector<Real> dxhat(d);
      for (std::size_t r = 0; r < rows; ++r) {
        const Real* gr = g.data() + r * d;
        const Real* hr = xhat.data() + r * d;
        if (gg)
          for (std::size_t j = 0; j < d; ++j) gg[j] += gr[j] * hr[j];
        if (gb)
          for (std::size_t j = 0; j < d; ++j) gb[j] += gr[j];
        if (gx) {
          Real mean_dh = 0, mean_dh_h = 0;
          for (std::size_t j = 0; j < d; ++j) {
            dxhat[j] = gr[j] * gain_d[j];
            mean_dh += dxhat[j];
            mean_dh_h += dxhat[j] * hr[j];
          }
          mean_dh /= static_cast<Real>(d);
          mean_dh_h /= static_cast<Real>(d);
          for (std::size_t j = 0; j < d; ++j) gx[r * d + j] += rstd[r] * (dxhat[j] - mean_dh - hr[j] * mean_dh_h);
        }
      }
    });
  }
  return result;
}

Tensor embedding(const Tensor& table, std::span<const std::int32_t> ids) {
  return embed_mixed(table, Tensor{}, ids, {});
}

Tensor embed_mixed(const Tensor& table, const Tensor& prompt_table, std::span<const std::int32_t> ids,
                   std::span<const std::int32_t> slots) {
  if (!slots.empty() && slots.size() != ids.size()) {
    throw DimensionError("embed_mixed: " + std::to_string(ids.size()) + " ids but " + std::to_string(slots.size()) +
                         " slot markers");
  }
  const bool has_table = table.defined();
  const bool has_prompt = prompt_table.defined();
  if (!has_table && !has_prompt) throw DimensionError("embed_mixed: no embedding table");
  if (has_table) require_rank(table, 2, "embedding");
  if (has_prompt) require_rank(prompt_table, 2, "embedding");
  const std::size_t d = has_table ? table.dim(1) : prompt_table.dim(1);
  if (has_table && has_prompt && prompt_table.dim(1) != d) {
    throw DimensionError("embed_mixed: table " + shape_str(table.shape()) + " vs prompt table " +
                         shape_str(prompt_table.shape()));
  }
  const std::size_t t = ids.size();
  std::vector<Real> out(t * d);
  for (std::size_t i = 0; i < t; ++i) {
    const bool virt = !slots.empty() && slots[i] >= 0;
    const Real* src = nullptr;
    if (virt) {
      if (!has_prompt || static_cast<std::size_t>(slots[i]) >= prompt_table.dim(0)) {
        throw RangeError("prompt slot " + std::to_string(slots[i]) + " out of range");
      }
      src = prompt_table.data().data() + static_cast<std::size_t>(slots[i]) * d;
    } else {
      if (!has_table || ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= table.dim(0)) {
        throw RangeError("token id " + std::to_string(ids[i]) + " out of range for embedding table " +
                         (has_table ? shape_str(table.shape()) : std::string("(none)")));
      }
      src = table.data().data() + static_cast<std::size_t>(ids[i]) * d;
    }
    std::copy(src, src + d, out.begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  const bool rg = recording({&table, &prompt_table});
  Tensor result = make({t, d}, std::move(out), rg);
  if (rg) {
    ImplPtr ti = table.impl(), pi = prompt_table.impl(), oi = result.impl();
    std::vector<std::int32_t> id_copy(ids.begin(), ids.end());
    std::vector<std::int32_t> slot_copy(slots.begin(), slots.end());
    record("embedding", result, [ti, pi, oi, id_copy = std::move(id_copy), slot_copy = std::move(slot_copy), d] {
      const auto& g = oi->grad;
      Real* gt = grad_of(ti);
      Real* gp = grad_of(pi);
      for (std::size_t i = 0; i < id_copy.size(); ++i) {
        const bool virt = !slot_copy.empty() && slot_copy[i] >= 0;
        Real* dst = virt ? (gp ? gp + static_cast<std::size_t>(slot_copy[i]) * d : nullptr)
                         : (gt ? gt + static_cast<std::size_t>(id_copy[i]) * d : nullptr);
        if (!dst) continue;
        for (std::size_t j = 0; j < d; ++j) dst[j] += g[i * d + j];
      }
    });
  }
  return result;
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  std::vector<Real> out(x.data().begin(), x.data().end());
  const bool rg = recording({&x});
  Tensor result = make(std::move(shape), std::move(out), rg);
  if (rg) {
    ImplPtr xi = x.impl(), oi = result.impl();
    record("reshape", result, [xi, oi] {
      Real* gx = grad_of(xi);
      const auto& g = oi->grad;
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
  }
  return result;
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "concat_rows");
  require_rank(b, 2, "concat_rows");
  if (a.dim(1) != b.dim(1)) {
    throw DimensionError("concat_rows: column mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  const std::size_t na = a.numel();
  std::vector<Real> out;
  out.reserve(na + b.numel());
  out.insert(out.end(), a.data().begin(), a.data().end());
  out.insert(out.end(), b.data().begin(), b.data().end());
  const bool rg = recording({&a, &b});
  Tensor result = make({a.dim(0) + b.dim(0), a.dim(1)}, std::move(out), rg);
  if (rg) {
    ImplPtr ai = a.impl(), bi = b.impl(), oi = result.impl();
    record("concat_rows", result, [ai, bi, oi, na] {
      const auto& g = oi->grad;
      if (Real* ga = grad_of(ai))
        for (std::size_t i = 0; i < na; ++i) ga[i] += g[i];
      if (Real* gb = grad_of(bi))
        for (std::size_t i = 0; i < bi->data.size(); ++i) gb[i] += g[na + i];
    });
  }
  return result;
}

Tensor slice_rows(const Tensor& x, std::size_t start, std::size_t count) {
  require_rank(x, 2, "slice_rows");
  if (start + count > x.dim(0)) {
    throw DimensionError("slice_rows: rows [" + std::to_string(start) + ", " + std::to_string(start + count) +
                         ") out of range for " + shape_str(x.shape()));
  }
  const std::size_t c = x.dim(1);
  const auto xd = x.data();
  std::vector<Real> out(xd.begin() + static_cast<std::ptrdiff_t>(start * c),
                        xd.begin() + static_cast<std::ptrdiff_t>((start + count) * c));
  const bool rg = recording({&x});
  Tensor result = make({count, c}, std::move(out), rg);
  if (rg) {
    ImplPtr xi = x.impl(), oi = result.impl();
    record("slice_rows", result, [xi, oi, start, c] {
      Real* gx = grad_of(xi) + start * c;
      const auto& g = oi->grad;
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
  }
  return result;
}

Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count) {
  require_rank(x, 2, "slice_cols");
  if (start + count > x.dim(1)) {
    throw DimensionError("slice_cols: columns [" + std::to_string(start) + ", " + std::to_string(start + count) +
                         ") out of range for " + shape_str(x.shape()));
  }
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  const auto xd = x.data();
  std::vector<Real> out(rows * count);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < count; ++j) out[r * count + j] = xd[r * cols + start + j];
  const bool rg = recording({&x});
  Tensor result = make({rows, count}, std::move(out), rg);
  if (rg) {
    ImplPtr xi = x.impl(), oi = result.impl();
    record("slice_cols", result, [xi, oi, rows, cols, start, count] {
      Real* gx = grad_of(xi);
      const auto& g = oi->grad;
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < count; ++j) gx[r * cols + start + j] += g[r * count + j];
    });
  }
  return result;
}

Tensor concat_time(const Tensor& a, const Tensor& b) {
  require_rank(a, 3, "concat_time");
  require_rank(b, 3, "concat_time");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2)) {
    throw DimensionError("concat_time: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  const std::size_t h = a.dim(0), ta = a.dim(1), tb = b.dim(1), d = a.dim(2);
  const auto ad = a.data();
  const auto bd = b.data();
  std::vector<Real> out(h * (ta + tb) * d);
  for (std::size_t hh = 0; hh < h; ++hh) {
    std::copy_n(ad.begin() + static_cast<std::ptrdiff_t>(hh * ta * d), ta * d,
                out.begin() + static_cast<std::ptrdiff_t>(hh * (ta + tb) * d));
    std::copy_n(bd.begin() + static_cast<std::ptrdiff_t>(hh * tb * d), tb * d,
                out.begin() + static_cast<std::ptrdiff_t>((hh * (ta + tb) + ta) * d));
  }
  const bool rg = recording({&a, &b});
  Tensor result = make({h, ta + tb, d}, std::move(out), rg);
  if (rg) {
    ImplPtr ai = a.impl(), bi = b.impl(), oi = result.impl();
    record("concat_time", result, [ai, bi, oi, h, ta, tb, d] {
      const auto& g = oi->grad;
      Real* ga = grad_of(ai);
      Real* gb = grad_of(bi);
      for (std::size_t hh = 0; hh < h; ++hh) {
        const Real* src = g.data() + hh * (ta + tb) * d;
        if (ga)
          for (std::size_t i = 0; i < ta * d; ++i) ga[hh * ta * d + i] += src[i];
        if (gb)
          for (std::size_t i = 0; i < tb * d; ++i) gb[hh * tb * d + i] += src[ta * d + i];
      }
    });
  }
  return result;
}

Tensor slice_time(const Tensor& x, std::size_t start, std::size_t count) {
  require_rank(x, 3, "slice_time");
  if (start + count > x.dim(1)) {
    throw DimensionError("slice_time: steps [" + std::to_string(start) + ", " + std::to_string(start + count) +
                         ") out of range for " + shape_str(x.shape()));
  }
  const std::size_t h = x.dim(0), t = x.dim(1), d = x.dim(2);
  const auto xd = x.data();
  std::vector<Real> out(h * count * d);
  for (std::size_t hh = 0; hh < h; ++hh)
    std::copy_n(xd.begin() + static_cast<std::ptrdiff_t>((hh * t + start) * d), count * d,
                out.begin() + static_cast<std::ptrdiff_t>(hh * count * d));
  const bool rg = recording({&x});
  Tensor result = make({h, count, d}, std::move(out), rg);
  if (rg) {
    ImplPtr xi = x.impl(), oi = result.impl();
    record("slice_time", result, [xi, oi, h, t, d, start, count] {
      Real* gx = grad_of(xi);
      const auto& g = oi->grad;
      for (std::size_t hh = 0; hh < h; ++hh)
        for (std::size_t i = 0; i < count * d; ++i) gx[(hh * t + start) * d + i] += g[hh * count * d + i];
    });
  }
  return result;
}

Tensor split_heads(const Tensor& x, std::size_t heads) {
  require_rank(x, 2, "split_heads");
  const std::size_t t = x.dim(0), width = x.dim(1);
  if (heads == 0 || width % heads != 0) {
    throw DimensionError("split_heads: width " + std::to_string(width) + " not divisible by " + std::to_string(heads));
  }
  const std::size_t d = width / heads;
  const auto xd = x.data();
  std::vector<Real> out(xd.size());
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t hh = 0; hh < heads; ++hh)
      std::copy_n(xd.begin() + static_cast<std::ptrdiff_t>(i * width + hh * d), d,
                  out.begin() + static_cast<std::ptrdiff_t>((hh * t + i) * d));
  const bool rg = recording({&x});
  Tensor result = make({heads, t, d}, std::move(out), rg);
  if (rg) {
    ImplPtr xi = x.impl(), oi = result.impl();
    record("split_heads", result, [xi, oi, t, heads, d, width] {
      Real* gx = grad_of(xi);
      const auto& g = oi->grad;
      for (std::size_t i = 0; i < t; ++i)
        for (std::size_t hh = 0; hh < heads; ++hh)
          for (std::size_t j = 0; j < d; ++j) gx[i * width + hh * d + j] += g[(hh * t + i) * d + j];
    });
  }
  return result;
}

Tensor merge_heads(const Tensor& x) {
  require_rank(x, 3, "merge_heads");
  const std::size_t heads = x.dim(0), t = x.dim(1), d = x.dim(2), width = heads * d;
  const auto xd = x.data();
  std::vector<Real> out(xd.size());
  for (std::size_t hh = 0; hh < heads; ++hh)
    for (std::size_t i = 0; i < t; ++i)
      std::copy_n(xd.begin() + static_cast<std::ptrdiff_t>((hh * t + i) * d), d,
                  out.begin() + static_cast<std::ptrdiff_t>(i * width + hh * d));
  const bool rg = recording({&x});
  Tensor result = make({t, width}, std::move(out), rg);
  if (rg) {
    ImplPtr xi = x.impl(), oi = result.impl();
    record("merge_heads", result, [xi, oi, t, heads, d, width] {
      Real* gx = grad_of(xi);
      const auto& g = oi->grad;
      for (std::size_t hh = 0; hh < heads; ++hh)
        for (std::size_t i = 0; i < t; ++i)
          for (std::size_t j = 0; j < d; ++j) gx[(hh * t + i) * d + j] += g[i * width + hh * d + j];
    });
  }
  return result;
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t causal_offset) {
  require_rank(q, 3, "attention");
  require_rank(k, 3, "attention");
  require_rank(v, 3, "attention");
  if (k.shape() != v.shape()) {
    throw DimensionError("attention: key " + shape_str(k.shape()) + " and value " + shape_str(v.shape()) +
                         " differ");
  }
  if (q.dim(0) != k.dim(0) || q.dim(2) != k.dim(2)) {
    throw DimensionError("attention: query " + shape_str(q.shape()) + " incompatible with key " +
                         shape_str(k.shape()));
  }
  const std::size_t h = q.dim(0), t = q.dim(1), T = k.dim(1), d = q.dim(2);
  const Real scale_factor = Real(1) / std::sqrt(static_cast<Real>(d));
  const auto qd = q.data();
  const auto kd = k.data();
  const auto vd = v.data();
  std::vector<Real> out(h * t * d, Real{0});
  std::vector<Real> probs(h * t * T, Real{0});
  for (std::size_t hh = 0; hh < h; ++hh) {
    for (std::size_t i = 0; i < t; ++i) {
      const std::size_t visible = std::min(T, causal_offset + i + 1);
      const Real* qi = qd.data() + (hh * t + i) * d;
      Real* p = probs.data() + (hh * t + i) * T;
      Real mx = -std::numeric_limits<Real>::infinity();
      for (std::size_t j = 0; j < visible; ++j) {
        const Real* kj = kd.data() + (hh * T + j) * d;
        Real s = 0;
        for (std::size_t c = 0; c < d; ++c) s += qi[c] * kj[c];
        p[j] = s * scale_factor;
        mx = std::max(mx, p[j]);
      }
      Real z = 0;
      for (std::size_t j = 0; j < visible; ++j) {
        p[j] = std::exp(p[j] - mx);
        z += p[j];
      }
      Real* oi = out.data() + (hh * t + i) * d;
      for (std::size_t j = 0; j < visible; ++j) {
        p[j] /= z;
        const Real* vj = vd.data() + (hh * T + j) * d;
        for (std::size_t c = 0; c < d; ++c) oi[c] += p[j] * vj[c];
      }
    }
  }
  const bool rg = recording({&q, &k, &v});
  Tensor result = make({h, t, d}, std::move(out), rg);
  if (rg) {
    ImplPtr qi_ = q.impl(), ki_ = k.impl(), vi_ = v.impl(), oi_ = result.impl();
    record("attention",
           result, [qi_, ki_, vi_, oi_, probs = std::move(probs), h, t, T, d, causal_offset, scale_factor] {
             const auto& g = oi_->grad;
             Real* gq = grad_of(qi_);
             Real* gk = grad_of(ki_);
             Real* gv = grad_of(vi_);
             const auto& qd = qi_->data;
             const auto& kd = ki_->data;
             const auto& vd = vi_->data;
             std::vector<Real> dp(T);
             for (std::size_t hh = 0; hh < h; ++hh) {
               for (std::size_t i = 0; i < t; ++i) {
                 const std::size_t visible = std::min(T, causal_offset + i + 1);
                 const Real* p = probs.data() + (hh * t + i) * T;
                 const Real* go = g.data() + (hh * t + i) * d;
                 Real dot = 0;
                 for (std::size_t j = 0; j < visible; ++j) {
                   const Real* vj = vd.data() + (hh * T + j) * d;
                   Real s = 0;
                   for (std::size_t c = 0; c < d; ++c) s += go[c] * vj[c];
                   dp[j] = s;
                   dot += s * p[j];
                   if (gv) {
                     Real* gvj = gv + (hh * T + j) * d;
                     for (std::size_t c = 0; c < d; ++c) gvj[c] += p[j] * go[c];
                   }
                 }
                 const Real* qrow = qd.data() + (hh * t + i) * d;
                 for (std::size_t j = 0; j < visible; ++j) {
                   const Real ds = p[j] * (dp[j] - dot) * scale_factor;
                   const Real* kj = kd.data() + (hh * T + j) * d;
                   if (gq) {
                     Real* gqi = gq + (hh * t + i) * d;
                     for (std::size_t c = 0; c < d; ++c) gqi[c] += ds * kj[c];
                   }
                   if (gk) {
                     Real* gkj = gk + (hh * T + j) * d;
                     for (std::size_t c = 0; c < d; ++c) gkj[c] += ds * qrow[c];
                   }
                 }
               }
             }
           });
  }
  return result;
}

Tensor masked_nll_sum(const Tensor& logits, std::span<const std::int32_t> targets, std::span<const std::uint8_t> mask) {
  require_rank(logits, 2, "masked_nll_sum");
  const std::size_t t = logits.dim(0), vocab = logits.dim(1);
  if (targets.size() != t || mask.size() != t) {
    throw DimensionError("masked_nll_sum: logits " + shape_str(logits.shape()) + " with " +
                         std::to_string(targets.size()) + " targets and " + std::to_string(mask.size()) +
                         " mask entries");
  }
  const auto ld = logits.data();
  Real total = 0;
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < t; ++i) {
    if (!mask[i]) continue;
    if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= vocab) {
      throw RangeError("target id " + std::to_string(targets[i]) + " out of range for vocabulary " +
                       std::to_string(vocab));
    }
    rows.push_back(i);
    const Real* row = ld.data() + i * vocab;
    Real mx = row[0];
    for (std::size_t j = 1; j < vocab; ++j) mx = std::max(mx, row[j]);
    Real z = 0;
    for (std::size_t j = 0; j < vocab; ++j) z += std::exp(row[j] - mx);
    total += std::log(z) + mx - row[targets[i]];
  }
  const bool rg = recording({&logits});
  Tensor result = make({}, {total}, rg);
  if (rg) {
    ImplPtr li = logits.impl(), oi = result.impl();
    std::vector<std::int32_t> tgt(targets.begin(), targets.end());
    record("masked_nll_sum", result, [li, oi, rows = std::move(rows), tgt = std::move(tgt), vocab] {
      Real* gl = grad_of(li);
      const Real g = oi->grad[0];
      for (std::size_t i : rows) {
        const Real* row = li->data.data() + i * vocab;
        Real mx = row[0];
        for (std::size_t j = 1; j < vocab; ++j) mx = std::max(mx, row[j]);
        Real z = 0;
        for (std::size_t j = 0; j < vocab; ++j) z += std::exp(row[j] - mx);
        Real* gr = gl + i * vocab;
        for (std::size_t j = 0; j < vocab; ++j) gr[j] += g * std::exp(row[j] - mx) / z;
        gr[tgt[i]] -= g;
      }
    });
  }
  return result;
}

Tensor masked_cross_entropy(const Tensor& logits, std::span<const std::int32_t> targets,
                            std::span<const std::uint8_t> mask) {
  const auto count = static_cast<std::size_t>(std::count_if(mask.begin(), mask.end(), [](auto m) { return m != 0; }));
  if (count == 0) throw EmptyLossError("masked_cross_entropy: mask selects no positions");
  return scale(masked_nll_sum(logits, targets, mask), Real(1) / static_cast<Real>(count));
}

}  // namespace ctxprompt::ops
