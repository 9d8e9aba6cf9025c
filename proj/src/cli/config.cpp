// Copyright 2026 The ctxprompt Authors
// SPDX-License-Identifier: Apache-2.0

#include "ctxprompt/cli/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "ctxprompt/errors.hpp"
#include "ctxprompt/util/kv.hpp"

namespace ctxprompt {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

void put_all(ConfigMap& into, const std::map<std::string, std::string>& from) {
  for (const auto& [k, v] : from) into[k] = v;
}

}  // namespace

ConfigMap default_config() {
  ConfigMap c;
  ModelConfig model;
  model.max_positions = 64;
  put_all(c, model.to_kv());
  c["model.preset"] = "";
  put_all(c, AdapterConfig{}.to_kv());
  put_all(c, TrainConfig{}.to_kv());
  TrainConfig pre;
  pre.learning_rate = 5e-3;
  for (const auto& [k, v] : pre.to_kv()) c["pre" + k] = v;
  put_all(c, GenerationConfig{}.to_kv());
  c["corpus.path"] = "";
  c["corpus.test"] = "";
  c["corpus.valid_fraction"] = "0.1";
  c["corpus.split_seed"] = "0";
  c["corpus.min_count"] = "1";
  c["corpus.max_context_utterances"] = "4";
  c["corpus.max_utterance_words"] = "20";
  c["corpus.last_response_only"] = "false";
  c["corpus.lenient"] = "false";
  c["run.out"] = "out";
  c["run.seeds"] = "0";
  c["run.backbone"] = "";
  c["run.adapter"] = "";
  c["run.vocab"] = "";
  c["sweep.axis"] = "prompt_size";
  c["sweep.prompt_sizes"] = "1,5,10,20";
  c["sweep.model_sizes"] = "tiny,small,base";
  c["sweep.strategies"] = "finetune,dynamic";
  c["sweep.pretrain_corpus"] = "";
  return c;
}

ConfigMap parse_config_text(std::istream& in, std::string_view source) {
  ConfigMap out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(std::string(source) + ":" + std::to_string(n) + ": expected key = value");
    }
    const std::string key = trim(std::string_view(t).substr(0, eq));
    if (key.empty() || key.find('.') == std::string::npos) {
      throw ConfigError(std::string(source) + ":" + std::to_string(n) + ": key '" + key + "' needs a section prefix");
    }
    out[key] = trim(std::string_view(t).substr(eq + 1));
  }
  return out;
}

ConfigMap load_config_file(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("--config: cannot open " + path.string());
  return parse_config_text(f, path.string());
}

void merge_config(ConfigMap& base, const ConfigMap& overrides) {
  const ConfigMap defaults = default_config();
  for (const auto& [k, v] : overrides) {
    if (!defaults.contains(k)) throw ConfigError("unknown config key '" + k + "'");
    base[k] = v;
  }
}

std::string format_config(const ConfigMap& config) {
  std::ostringstream os;
  for (const auto& [k, v] : config) os << k << " = " << v << '\n';
  return os.str();
}

void write_config(const std::filesystem::path& path, const ConfigMap& config) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f << format_config(config);
  if (!f) throw IoError("failed writing " + path.string());
}

ModelConfig model_preset(std::string_view name) {
  ModelConfig m;
  m.max_positions = 64;
  if (name == "tiny") {
    m.n_layers = 2, m.n_heads = 2, m.d_model = 16;
  } else if (name == "small") {
    m.n_layers = 4, m.n_heads = 2, m.d_model = 32;
  } else if (name == "base") {
    m.n_layers = 6, m.n_heads = 4, m.d_model = 64;
  } else {
    throw ConfigError("unknown model preset '" + std::string(name) + "' (tiny, small, base)");
  }
  return m;
}

ModelConfig model_config_of(const ConfigMap& c) {
  ConfigMap m = c;
  if (const std::string preset = kv::get_string(c, "model.preset", ""); !preset.empty()) {
    for (const auto& [k, v] : model_preset(preset).to_kv()) {
      if (k != "model.vocab_size" && k != "model.max_positions") m[k] = v;
    }
  }
  return ModelConfig::from_kv(m);
}

AdapterConfig adapter_config_of(const ConfigMap& c) { return AdapterConfig::from_kv(c); }
TrainConfig train_config_of(const ConfigMap& c) { return TrainConfig::from_kv(c); }
TrainConfig pretrain_config_of(const ConfigMap& c) {
  ConfigMap m;
  for (const auto& [k, v] : c) {
    if (k.starts_with("pretrain.")) m[k.substr(3)] = v;
  }
  return TrainConfig::from_kv(m);
}

GenerationConfig generation_config_of(const ConfigMap& c) { return GenerationConfig::from_kv(c); }

WindowConfig window_config_of(const ConfigMap& c) {
  WindowConfig w;
  w.max_context_utterances = kv::get_size(c, "corpus.max_context_utterances", w.max_context_utterances);
  w.max_utterance_words = kv::get_size(c, "corpus.max_utterance_words", w.max_utterance_words);
  w.last_response_only = kv::get_bool(c, "corpus.last_response_only", w.last_response_only);
  if (w.max_context_utterances == 0 || w.max_utterance_words == 0) {
    throw ConfigError("corpus window limits must be positive");
  }
  return w;
}

std::vector<std::string> split_list(std::string_view text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const auto end = comma == std::string_view::npos ? text.size() : comma;
    if (std::string item = trim(text.substr(start, end - start)); !item.empty()) out.push_back(std::move(item));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::vector<std::uint64_t> parse_seed_list(std::string_view text) {
  std::vector<std::uint64_t> seeds;
  for (const auto& item : split_list(text)) {
    std::uint64_t v = 0;
    const auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc{} || p != item.data() + item.size()) throw ConfigError("--seed: '" + item + "' is not a seed");
    seeds.push_back(v);
  }
  if (seeds.empty()) throw ConfigError("--seed: at least one seed is required");
  return seeds;
}

}  // namespace ctxprompt
