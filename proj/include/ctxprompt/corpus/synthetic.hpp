// Copyright 2026 The ctxprompt Authors
// SPDX-License-Identifier: Apache-2.0
//
// Generated corpora for desk-scale experiments.
//
// base    templated small-talk grammar; code words k00..k63 and v00..v63 occur
//         in random pairings, so no fixed k -> v association is learnable.
//         "the answer is vNN" always repeats a vNN mentioned earlier in the
//         same dialogue
// lookup  a context utterance "my code is kNN" among filler turns; the
//         response "the answer is vMM" where MM = perm(NN) for a fixed
//         permutation of the classes

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "ctxprompt/corpus/dialogue.hpp"

namespace ctxprompt {

inline constexpr std::size_t kLookupClasses = 64;

std::string code_word(char prefix, std::size_t index);  // code_word('k', 7) == "k07"

std::vector<Dialogue> synth_base_corpus(std::size_t dialogues, std::uint64_t seed);

// The permutation depends only on mapping_seed, so corpora drawn with
// different seeds share it.
std::vector<std::size_t> lookup_permutation(std::size_t classes, std::uint64_t mapping_seed);
std::vector<Dialogue> synth_lookup_corpus(std::size_t dialogues, std::uint64_t seed, std::size_t classes = kLookupClasses,
                                          std::uint64_t mapping_seed = 0);

}  // namespace ctxprompt
