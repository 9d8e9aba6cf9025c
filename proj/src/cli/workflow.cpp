// Copyright 2026 The ctxprompt Authors
// SPDX-License-Identifier: Apache-2.0

#include "ctxprompt/cli/workflow.hpp"

#include <algorithm>

#include "ctxprompt/errors.hpp"

namespace ctxprompt {

DialogueSample lm_sample(const Vocabulary& vocab, const Dialogue& dialogue, std::size_t max_positions) {
  std::vector<TokenId> tokens;
  for (std::size_t i = 0; i < dialogue.utterances.size(); ++i) {
    const auto ids = vocab.encode(dialogue.utterances[i]);
    tokens.insert(tokens.end(), ids.begin(), ids.end());
    tokens.push_back(i + 1 < dialogue.utterances.size() ? kSepId : kEosId);
  }
  if (tokens.size() > max_positions) tokens.resize(max_positions);
  if (tokens.size() < 2) throw ParseError("dialogue '" + dialogue.id + "' is too short for a language-model sample");
  return make_lm_sample(std::move(tokens));
}

std::vector<DialogueSample> lm_samples(const Vocabulary& vocab, std::span<const Dialogue> dialogues,
                                       std::size_t max_positions) {
  std::vector<DialogueSample> out;
  out.reserve(dialogues.size());
  for (const auto& d : dialogues) out.push_back(lm_sample(vocab, d, max_positions));
  return out;
}

std::vector<DialogueSample> fit_length(std::vector<DialogueSample> samples, std::size_t max_length) {
  std::erase_if(samples, [&](const DialogueSample& s) { return s.length() > max_length; });
  return samples;
}

PretrainOutcome pretrain_backbone(const ModelConfig& model, std::uint64_t init_seed, const TrainConfig& train,
                                  std::span<const DialogueSample> train_samples,
                                  std::span<const DialogueSample> valid_samples, std::ostream* log) {
  model.validate();
  Backbone bb = Backbone::init(model, init_seed);
  AdapterConfig ac;
  ac.kind = StrategyKind::FineTune;
  Trainer trainer(bb, Adapter::create(ac, bb), train, train_samples.size());
  TrainResult r = fit(trainer, train_samples, valid_samples, log);
  return {trainer.backbone(), std::move(r)};
}

AdaptOutcome adapt_backbone(const Backbone& backbone, const AdapterConfig& adapter, const TrainConfig& train,
                            std::span<const DialogueSample> train_samples,
                            std::span<const DialogueSample> valid_samples, std::ostream* log) {
  const Backbone working = adapter.kind == StrategyKind::FineTune ? backbone.deep_copy() : backbone;
  Trainer trainer(working, Adapter::create(adapter, working), train, train_samples.size());
  TrainResult r = fit(trainer, train_samples, valid_samples, log);
  return {trainer.adapter(), trainer.backbone(), std::move(r)};
}

}  // namespace ctxprompt
