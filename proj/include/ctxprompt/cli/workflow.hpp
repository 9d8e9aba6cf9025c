// Copyright 2026 The ctxprompt Authors
// SPDX-License-Identifier: Apache-2.0
//
// Pretrain / adapt steps shared by the command-line tool and experiments.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "ctxprompt/adapters/adapter.hpp"
#include "ctxprompt/corpus/dialogue.hpp"
#include "ctxprompt/corpus/vocabulary.hpp"
#include "ctxprompt/train/trainer.hpp"

namespace ctxprompt {

// Whole dialogue as one language-model sample: u1 <sep> u2 <sep> .. un <eos>,
// cut to max_positions tokens. The loss covers every position after the first.
DialogueSample lm_sample(const Vocabulary& vocab, const Dialogue& dialogue, std::size_t max_positions);
std::vector<DialogueSample> lm_samples(const Vocabulary& vocab, std::span<const Dialogue> dialogues,
                                       std::size_t max_positions);

// Drops samples longer than max_length tokens.
std::vector<DialogueSample> fit_length(std::vector<DialogueSample> samples, std::size_t max_length);

struct PretrainOutcome {
  Backbone backbone;
  TrainResult result;
};
PretrainOutcome pretrain_backbone(const ModelConfig& model, std::uint64_t init_seed, const TrainConfig& train,
                                  std::span<const DialogueSample> train_samples,
                                  std::span<const DialogueSample> valid_samples, std::ostream* log = nullptr);

struct AdaptOutcome {
  Adapter adapter;
  Backbone backbone;  // tuned copy for finetune, the input backbone otherwise
  TrainResult result;
};
// Never modifies `backbone`; finetune trains a deep copy.
AdaptOutcome adapt_backbone(const Backbone& backbone, const AdapterConfig& adapter, const TrainConfig& train,
                            std::span<const DialogueSample> train_samples,
                            std::span<const DialogueSample> valid_samples, std::ostream* log = nullptr);

}  // namespace ctxprompt
