// Copyright 2026 The ctxprompt Authors
// SPDX-License-Identifier: Apache-2.0
//
// Word-level generation metrics. Scores are in [0, 1] except NIST (>= 0).
//
//   bleu_avg     sentence BLEU-1..4 (cumulative, uniform weights, brevity
//                penalty) averaged; a matched count of 0 is floored at 1e-9
//   nist         corpus-level NIST-5 with information weights from the
//                reference n-gram counts
//   rouge_l      LCS F1
//   meteor_lite  exact then suffix-stem unigram alignment, Fmean with the
//                fragmentation penalty; no synonym stage

#pragma once

#include <span>
#include <string>
#include <vector>

namespace ctxprompt {

using Words = std::vector<std::string>;

inline constexpr double kBleuEpsilon = 1e-9;
inline constexpr int kNistOrder = 5;

// Modified (clipped) n-gram precision counts.
struct NgramMatch {
  std::size_t matched = 0;
  std::size_t total = 0;
};
NgramMatch modified_precision(std::span<const std::string> hyp, std::span<const std::string> ref, int n);

double brevity_penalty(std::size_t hyp_len, std::size_t ref_len);
// Cumulative BLEU-n (geometric mean of precisions 1..n).
double bleu_n(std::span<const std::string> hyp, std::span<const std::string> ref, int n);
double bleu_avg(std::span<const std::string> hyp, std::span<const std::string> ref);
double corpus_bleu_avg(std::span<const Words> hyps, std::span<const Words> refs);

double nist(std::span<const Words> hyps, std::span<const Words> refs, int max_n = kNistOrder);
double nist_length_penalty(std::size_t hyp_len, std::size_t ref_len);

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b);
double rouge_l(std::span<const std::string> hyp, std::span<const std::string> ref);

// Strips one of ing/es/ed/s (first that leaves >= 3 letters), then undoubles a
// trailing doubled consonant: running -> run, passes -> pas, pass -> pas.
std::string meteor_stem(std::string_view word);

struct MeteorAlignment {
  std::size_t matches = 0;
  std::size_t chunks = 0;
};
MeteorAlignment meteor_align(std::span<const std::string> hyp, std::span<const std::string> ref);
double meteor_lite(std::span<const std::string> hyp, std::span<const std::string> ref);

double avg_length(std::span<const Words> hyps);

}  // namespace ctxprompt
