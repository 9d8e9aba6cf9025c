// Copyright 2026 The ctxprompt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ctxprompt/corpus/dialogue.hpp"
#include "ctxprompt/corpus/vocabulary.hpp"

namespace ctxprompt {

// Token-level sample. Every context utterance is followed by <sep>, so the
// response always starts right after a separator; the response ends in <eos>.
struct DialogueSample {
  std::vector<TokenId> context;
  std::vector<TokenId> response;
  std::vector<std::size_t> segments;      // per context utterance, length including its <sep>
  std::vector<std::uint8_t> response_mask;  // over context ++ response

  std::size_t length() const { return context.size() + response.size(); }
  std::vector<TokenId> sequence() const;
  void validate() const;  // throws InvariantError
};

DialogueSample make_sample(std::vector<TokenId> context, std::vector<TokenId> response,
                           std::vector<std::size_t> segments);
DialogueSample encode_sample(const Vocabulary& vocab, const TextSample& sample);
std::vector<DialogueSample> encode_dialogues(const Vocabulary& vocab, const std::vector<Dialogue>& dialogues,
                                             const WindowConfig& window = {});

// Plain language-model sample: first token is context, the rest is scored.
DialogueSample make_lm_sample(std::vector<TokenId> tokens);

struct PaddedBatch {
  std::size_t rows = 0;
  std::size_t width = 0;
  std::vector<TokenId> tokens;               // rows x width, right-padded with <pad>
  std::vector<std::uint8_t> attention_mask;  // 1 on real tokens
  std::vector<std::uint8_t> loss_mask;       // response_mask, 0 on padding
  std::vector<std::size_t> lengths;

  std::size_t pad_count() const;
  // Reconstructs the unpadded sample in row b.
  DialogueSample row(std::size_t b) const;
};

std::vector<PaddedBatch> make_batches(std::span<const DialogueSample> samples, std::size_t batch_size = 32);

}  // namespace ctxprompt
