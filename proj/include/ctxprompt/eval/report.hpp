// Copyright 2026 The ctxprompt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ctxprompt/adapters/adapter.hpp"
#include "ctxprompt/corpus/vocabulary.hpp"
#include "ctxprompt/eval/generate.hpp"
#include "ctxprompt/eval/metrics.hpp"

namespace ctxprompt {

struct SampleRecord {
  std::string context;
  std::string reference;
  std::string hypothesis;
  double bleu_avg = 0;
  double meteor_lite = 0;
  double rouge_l = 0;
};

struct Scores {
  double bleu_avg = 0;
  double nist = 0;
  double meteor_lite = 0;
  double rouge_l = 0;
  double avg_length = 0;
};

struct EvalReport {
  std::map<std::string, std::string> config;
  std::uint64_t corpus_digest = 0;
  Scores scores;
  std::vector<SampleRecord> samples;
};

Scores score_corpus(std::span<const Words> hyps, std::span<const Words> refs);

// Order-sensitive digest over context and response token ids.
std::uint64_t corpus_digest(std::span<const DialogueSample> samples);

// Greedy-decodes every sample and scores it against its reference response.
EvalReport evaluate_generation(const Backbone& backbone, const Adapter& adapter, const Vocabulary& vocab,
                               std::span<const DialogueSample> samples, const GenerationConfig& gen = {});

// Element-wise mean of the corpus scores (per-sample records are dropped).
Scores mean_scores(std::span<const Scores> runs);

std::string report_json(const EvalReport& report);
// BLEU NIST METEOR ROUGE-L Length, scores x100 except NIST and length.
std::string scores_table(std::span<const std::pair<std::string, Scores>> rows);
void write_report(const std::filesystem::path& json_path, const EvalReport& report);

}  // namespace ctxprompt
