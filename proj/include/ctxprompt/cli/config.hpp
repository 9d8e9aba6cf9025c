// Copyright 2026 The ctxprompt Authors
// SPDX-License-Identifier: Apache-2.0
//
// Flat run configuration: "section.key = value" lines, '#' starts a comment.
// Sections: model, adapter, train, pretrain, gen, corpus, run, sweep. Every
// key has a default; unknown keys are rejected. pretrain.* mirrors train.* and
// applies to training a backbone from scratch.

#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "ctxprompt/adapters/adapter.hpp"
#include "ctxprompt/corpus/dialogue.hpp"
#include "ctxprompt/eval/generate.hpp"
#include "ctxprompt/train/trainer.hpp"

namespace ctxprompt {

using ConfigMap = std::map<std::string, std::string>;

ConfigMap default_config();

// Parses config text; ConfigError names the line. Does not merge defaults.
ConfigMap parse_config_text(std::istream& in, std::string_view source = "config");
ConfigMap load_config_file(const std::filesystem::path& path);

// Overlays `overrides` onto `base`; ConfigError on keys absent from defaults.
void merge_config(ConfigMap& base, const ConfigMap& overrides);
std::string format_config(const ConfigMap& config);
void write_config(const std::filesystem::path& path, const ConfigMap& config);

// Named model shapes for the model-size sweep (vocab_size left at 0).
ModelConfig model_preset(std::string_view name);

ModelConfig model_config_of(const ConfigMap& c);  // applies model.preset first
AdapterConfig adapter_config_of(const ConfigMap& c);
TrainConfig train_config_of(const ConfigMap& c);
TrainConfig pretrain_config_of(const ConfigMap& c);
GenerationConfig generation_config_of(const ConfigMap& c);
WindowConfig window_config_of(const ConfigMap& c);

std::vector<std::uint64_t> parse_seed_list(std::string_view text);
std::vector<std::string> split_list(std::string_view text);

}  // namespace ctxprompt
