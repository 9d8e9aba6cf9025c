// Copyright 2026 The ctxprompt Authors
// SPDX-License-Identifier: Apache-2.0
//
// ctxprompt command-line tool. Subcommands:
//
//   synth     write a generated corpus (base or lookup)
//   pretrain  train a backbone from scratch on a dialogue corpus
//   adapt     train one adapter per seed against a frozen backbone
//   eval      greedy-decode a test corpus, per-seed reports + mean summary
//   sweep     prompt-size or model-size ablation into an append-only CSV
//   chat      interactive session with a rolling context window
//
// Exit status: 0 success, 1 invariant or numeric failure, 2 usage, config,
// corpus or I/O error.

#pragma once

#include <cstddef>
#include <deque>
#include <exception>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "ctxprompt/adapters/adapter.hpp"
#include "ctxprompt/cli/config.hpp"
#include "ctxprompt/corpus/vocabulary.hpp"
#include "ctxprompt/eval/generate.hpp"

namespace ctxprompt {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

int exit_code_for(const std::exception& e);

// `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err);

// Extra positions a strategy adds in front of (or between) the real tokens.
std::size_t prompt_overhead(const AdapterConfig& adapter, std::size_t context_utterances);

void cmd_synth(const std::string& kind, std::size_t dialogues, std::uint64_t seed, std::size_t classes,
               std::uint64_t mapping_seed, const std::filesystem::path& out_path);
void cmd_pretrain(const ConfigMap& config, std::ostream& out);
void cmd_adapt(const ConfigMap& config, std::ostream& out);
void cmd_eval(const ConfigMap& config, std::ostream& out);
// Returns the path of sweep.csv.
std::filesystem::path cmd_sweep(const ConfigMap& config, std::ostream& out);
void cmd_chat(const ConfigMap& config, std::istream& in, std::ostream& out);

inline constexpr std::string_view kSweepHeader =
    "axis,value,strategy,prompt_size,n_layers,d_model,trainable_params,seeds,valid_loss,bleu_avg,nist,meteor_lite,"
    "rouge_l,avg_length";

class ChatSession {
 public:
  ChatSession(Backbone backbone, Adapter adapter, Vocabulary vocab, GenerationConfig gen = {},
              WindowConfig window = {});

  struct Turn {
    bool quit = false;
    std::string text;  // reply, or help text for a malformed command
  };
  Turn handle(std::string_view line);

  // Adds the user utterance, generates, adds the reply.
  std::string respond(std::string_view user_text);
  void reset() { history_.clear(); }
  const std::deque<Utterance>& history() const { return history_; }
  // The context the next reply would condition on, given a new user turn.
  std::vector<Utterance> window_for(const Utterance& user) const;

 private:
  Backbone backbone_;
  Adapter adapter_;
  Vocabulary vocab_;
  GenerationConfig gen_;
  WindowConfig window_;
  std::deque<Utterance> history_;
};

}  // namespace ctxprompt
