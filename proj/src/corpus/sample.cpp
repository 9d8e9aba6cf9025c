// Copyright 2026 The ctxprompt Authors
// SPDX-License-Identifier: Apache-2.0

#include "ctxprompt/corpus/sample.hpp"

#include <algorithm>
#include <numeric>

#include "ctxprompt/errors.hpp"

namespace ctxprompt {

std::vector<TokenId> DialogueSample::sequence() const {
  std::vector<TokenId> seq(context);
  seq.insert(seq.end(), response.begin(), response.end());
  return seq;
}

void DialogueSample::validate() const {
  if (context.empty()) throw InvariantError("sample has an empty context");
  if (response.empty()) throw InvariantError("sample has an empty response");
  if (std::accumulate(segments.begin(), segments.end(), std::size_t{0}) != context.size()) {
    throw InvariantError("context segments do not cover the context");
  }
  if (response_mask.size() != length()) throw InvariantError("response mask length mismatch");
  const auto on = static_cast<std::size_t>(std::count(response_mask.begin(), response_mask.end(), 1));
  if (on != response.size()) throw InvariantError("response mask count differs from response length");
  for (std::size_t i = 0; i < length(); ++i) {
    if ((response_mask[i] != 0) != (i >= context.size())) throw InvariantError("response mask misplaced");
  }
}

DialogueSample make_sample(std::vector<TokenId> context, std::vector<TokenId> response,
                           std::vector<std::size_t> segments) {
  DialogueSample s;
  s.context = std::move(context);
  s.response = std::move(response);
  s.segments = std::move(segments);
  s.response_mask.assign(s.context.size(), 0);
  s.response_mask.resize(s.length(), 1);
  s.validate();
  return s;
}

DialogueSample encode_sample(const Vocabulary& vocab, const TextSample& sample) {
  std::vector<TokenId> context;
  std::vector<std::size_t> segments;
  for (const auto& u : sample.context) {
    auto ids = vocab.encode(u);
    context.insert(context.end(), ids.begin(), ids.end());
    context.push_back(kSepId);
    segments.push_back(ids.size() + 1);
  }
  auto response = vocab.encode(sample.response);
  response.push_back(kEosId);
  return make_sample(std::move(context), std::move(response), std::move(segments));
}

std::vector<DialogueSample> encode_dialogues(const Vocabulary& vocab, const std::vector<Dialogue>& dialogues,
                                             const WindowConfig& window) {
  std::vector<DialogueSample> out;
  for (const auto& d : dialogues)
    for (const auto& s : window_samples(d, window)) out.push_back(encode_sample(vocab, s));
  return out;
}

DialogueSample make_lm_sample(std::vector<TokenId> tokens) {
  if (tokens.size() < 2) throw InvariantError("language-model sample needs at least 2 tokens");
  std::vector<TokenId> context{tokens.front()};
  tokens.erase(tokens.begin());
  return make_sample(std::move(context), std::move(tokens), {1});
}

std::size_t PaddedBatch::pad_count() const {
  return static_cast<std::size_t>(std::count(attention_mask.begin(), attention_mask.end(), 0));
}

DialogueSample PaddedBatch::row(std::size_t b) const {
  if (b >= rows) throw RangeError("batch row " + std::to_string(b) + " out of range");
  const auto first = tokens.begin() + static_cast<std::ptrdiff_t>(b * width);
  const auto mask = loss_mask.begin() + static_cast<std::ptrdiff_t>(b * width);
  const std::size_t len = lengths[b];
  const auto m = static_cast<std::size_t>(std::find(mask, mask + static_cast<std::ptrdiff_t>(len), 1) - mask);
  std::vector<TokenId> context(first, first + static_cast<std::ptrdiff_t>(m));
  std::vector<TokenId> response(first + static_cast<std::ptrdiff_t>(m), first + static_cast<std::ptrdiff_t>(len));
  std::vector<std::size_t> segments;
  std::size_t run = 0;
  for (TokenId t : context) {
    ++run;
    if (t == kSepId) {
      segments.push_back(run);
      run = 0;
    }
  }
  if (run > 0) segments.push_back(run);
  return make_sample(std::move(context), std::move(response), std::move(segments));
}

std::vector<PaddedBatch> make_batches(std::span<const DialogueSample> samples, std::size_t batch_size) {
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  std::vector<PaddedBatch> batches;
  for (std::size_t start = 0; start < samples.size(); start += batch_size) {
    const auto chunk = samples.subspan(start, std::min(batch_size, samples.size() - start));
    PaddedBatch b;
    b.rows = chunk.size();
    for (const auto& s : chunk) b.width = std::max(b.width, s.length());
    b.tokens.assign(b.rows * b.width, kPadId);
    b.attention_mask.assign(b.rows * b.width, 0);
    b.loss_mask.assign(b.rows * b.width, 0);
    for (std::size_t r = 0; r < b.rows; ++r) {
      const auto& s = chunk[r];
      const auto seq = s.sequence();
      std::copy(seq.begin(), seq.end(), b.tokens.begin() + static_cast<std::ptrdiff_t>(r * b.width));
      std::fill_n(b.attention_mask.begin() + static_cast<std::ptrdiff_t>(r * b.width), seq.size(), 1);
      std::copy(s.response_mask.begin(), s.response_mask.end(),
                b.loss_mask.begin() + static_cast<std::ptrdiff_t>(r * b.width));
      b.lengths.push_back(seq.size());
    }
    batches.push_back(std::move(b));
  }
  return batches;
}

}  // namespace ctxprompt
