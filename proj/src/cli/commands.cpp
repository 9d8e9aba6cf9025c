// Copyright 2026 The ctxprompt Authors
// SPDX-License-Identifier: Apache-2.0

#include "ctxprompt/cli/commands.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ctxprompt/cli/workflow.hpp"
#include "ctxprompt/corpus/synthetic.hpp"
#include "ctxprompt/errors.hpp"
#include "ctxprompt/eval/report.hpp"
#include "ctxprompt/model/checkpoint.hpp"
#include "ctxprompt/util/kv.hpp"

namespace ctxprompt {
namespace fs = std::filesystem;

namespace {

std::string require(const ConfigMap& c, const std::string& key, std::string_view flag) {
  const std::string v = kv::get_string(c, key, "");
  if (v.empty()) throw ConfigError("missing " + std::string(flag) + " (config key " + key + ")");
  return v;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  return f;
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

std::vector<Dialogue> load_dialogues(const ConfigMap& c, const std::string& path, std::ostream& out) {
  LoadOptions opts;
  opts.lenient = kv::get_bool(c, "corpus.lenient", false);
  LoadResult r = load_corpus(path, opts);
  for (const auto& w : r.warnings) out << "warning: " << path << ":" << w.line << ": " << w.message << '\n';
  return std::move(r.dialogues);
}

fs::path vocab_path_for(const ConfigMap& c, const fs::path& backbone) {
  const std::string v = kv::get_string(c, "run.vocab", "");
  return v.empty() ? backbone.parent_path() / "vocab.txt" : fs::path(v);
}

void set_model_keys(ConfigMap& c, const ModelConfig& m) {
  for (const auto& [k, v] : m.to_kv()) c[k] = v;
}

std::string seed_dir(std::uint64_t seed) { return "seed_" + std::to_string(seed); }

// Samples whose composed length fits the position table; eval samples only
// need room for the context plus one generated token.
std::vector<DialogueSample> keep_fitting(std::vector<DialogueSample> samples,
                                         std::span<const AdapterConfig> adapters, std::size_t max_positions,
                                         bool with_response) {
  std::erase_if(samples, [&](const DialogueSample& s) {
    for (const auto& a : adapters) {
      const std::size_t need = prompt_overhead(a, s.segments.size()) + s.context.size() +
                               (with_response ? s.response.size() : 1);
      if (need > max_positions) return true;
    }
    return false;
  });
  return samples;
}

struct AdaptData {
  std::vector<DialogueSample> train, valid;
};

AdaptData adapt_data(const ConfigMap& c, const Vocabulary& vocab, std::size_t max_positions,
                     std::span<const AdapterConfig> adapters, std::ostream& out) {
  const auto dialogues = load_dialogues(c, require(c, "corpus.path", "--corpus"), out);
  const CorpusSplit split = split_by_dialogue(dialogues, kv::get_double(c, "corpus.valid_fraction", 0.1),
                                              kv::get_u64(c, "corpus.split_seed", 0));
  const WindowConfig window = window_config_of(c);
  AdaptData d;
  d.train = keep_fitting(encode_dialogues(vocab, split.train, window), adapters, max_positions, true);
  d.valid = keep_fitting(encode_dialogues(vocab, split.valid, window), adapters, max_positions, true);
  return d;
}

std::vector<DialogueSample> eval_samples(const ConfigMap& c, const Vocabulary& vocab, std::size_t max_positions,
                                         std::span<const AdapterConfig> adapters, std::ostream& out) {
  std::string path = kv::get_string(c, "corpus.test", "");
  if (path.empty()) path = require(c, "corpus.path", "--corpus");
  const auto dialogues = load_dialogues(c, path, out);
  return keep_fitting(encode_dialogues(vocab, dialogues, window_config_of(c)), adapters, max_positions, false);
}

AdapterConfig seeded(AdapterConfig a, std::uint64_t seed) {
  a.seed = seed;
  return a;
}

TrainConfig seeded(TrainConfig t, std::uint64_t seed) {
  t.seed = seed;
  return t;
}

nlohmann::ordered_json scores_json(const Scores& s) {
  nlohmann::ordered_json j;
  j["bleu_avg"] = s.bleu_avg;
  j["nist"] = s.nist;
  j["meteor_lite"] = s.meteor_lite;
  j["rouge_l"] = s.rouge_l;
  j["avg_length"] = s.avg_length;
  return j;
}

struct Pretrained {
  Backbone backbone;
  Vocabulary vocab;
};

// Pretrains into `dir` (backbone.ckpt, vocab.txt, pretrain_log.csv) from the
// dialogues at `corpus`.
Pretrained pretrain_into(const ConfigMap& c, ModelConfig model, const std::string& corpus, std::uint64_t seed,
                         const fs::path& dir, std::ostream& out) {
  make_dir(dir);
  const auto dialogues = load_dialogues(c, corpus, out);
  if (dialogues.empty()) throw EmptyCorpusError("pretraining corpus " + corpus + " has no dialogues");
  Vocabulary vocab = Vocabulary::build(dialogues, kv::get_size(c, "corpus.min_count", 1));
  model.vocab_size = vocab.size();
  model.validate();

  const CorpusSplit split = split_by_dialogue(dialogues, kv::get_double(c, "corpus.valid_fraction", 0.1),
                                              kv::get_u64(c, "corpus.split_seed", 0));
  const auto train = lm_samples(vocab, split.train, model.max_positions);
  const auto valid = lm_samples(vocab, split.valid, model.max_positions);

  auto log = open_out(dir / "pretrain_log.csv");
  PretrainOutcome r = pretrain_backbone(model, seed, seeded(pretrain_config_of(c), seed), train, valid, &log);
  vocab.save(dir / "vocab.txt");
  save_backbone(dir / "backbone.ckpt", r.backbone, {{"run.seed", std::to_string(seed)}});
  out << "pretrained " << (dir / "backbone.ckpt").string() << ": checksum " << checksum_hex(checksum(r.backbone))
      << ", best epoch " << r.result.best_epoch << ", valid loss " << r.result.best_valid_loss << '\n';
  return {std::move(r.backbone), std::move(vocab)};
}

struct CellResult {
  double valid_loss = 0;
  Scores scores;
  std::size_t trainable = 0;
};

// Adapt + eval for every seed; valid loss and scores are seed means.
CellResult run_cell(const ConfigMap& c, const Backbone& backbone, const Vocabulary& vocab,
                    const AdapterConfig& adapter, const AdaptData& data, std::span<const DialogueSample> test,
                    const fs::path& dir, std::ostream& out) {
  const auto seeds = parse_seed_list(kv::get_string(c, "run.seeds", "0"));
  const TrainConfig train = train_config_of(c);
  const GenerationConfig gen = generation_config_of(c);
  CellResult cell;
  std::vector<Scores> runs;
  for (const auto seed : seeds) {
    const fs::path sd = dir / seed_dir(seed);
    make_dir(sd);
    auto log = open_out(sd / "train_log.csv");
    AdaptOutcome r = adapt_backbone(backbone, seeded(adapter, seed), seeded(train, seed), data.train, data.valid, &log);
    EvalReport report = evaluate_generation(r.backbone, r.adapter, vocab, test, gen);
    report.config = c;
    report.config["run.seed"] = std::to_string(seed);
    write_report(sd / "report.json", report);
    cell.valid_loss += r.result.best_valid_loss / static_cast<double>(seeds.size());
    cell.trainable = r.adapter.census(r.backbone).trainable;
    runs.push_back(report.scores);
    out << "  seed " << seed << ": valid loss " << r.result.best_valid_loss << ", bleu " << report.scores.bleu_avg
        << '\n';
  }
  cell.scores = mean_scores(runs);
  return cell;
}

std::set<std::string> completed_cells(const fs::path& csv) {
  std::set<std::string> done;
  std::ifstream f(csv);
  std::string line;
  if (!std::getline(f, line)) return done;
  if (line != kSweepHeader) throw ParseError(csv.string() + ": unexpected header");
  while (std::getline(f, line)) {
    const auto parts = split_list(line);
    if (parts.size() < 3) continue;  // a partially written last line
    done.insert(parts[0] + "," + parts[1] + "," + parts[2]);
  }
  return done;
}

std::string format_fixed(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const InvariantError*>(&e) || dynamic_cast<const NumericError*>(&e)) return kExitFailure;
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ParseError*>(&e) ||
      dynamic_cast<const IoError*>(&e) || dynamic_cast<const EmptyCorpusError*>(&e) ||
      dynamic_cast<const RangeError*>(&e) || dynamic_cast<const ChecksumMismatchError*>(&e) ||
      dynamic_cast<const CapacityError*>(&e) || dynamic_cast<const StateError*>(&e)) {
    return kExitUsage;
  }
  return kExitFailure;
}

std::size_t prompt_overhead(const AdapterConfig& adapter, std::size_t context_utterances) {
  switch (adapter.kind) {
    case StrategyKind::FineTune: return 0;
    case StrategyKind::PTuning: return adapter.k() * context_utterances;
    default: return adapter.k();
  }
}

void cmd_synth(const std::string& kind, std::size_t dialogues, std::uint64_t seed, std::size_t classes,
               std::uint64_t mapping_seed, const fs::path& out_path) {
  if (out_path.empty()) throw ConfigError("missing --out");
  if (out_path.has_parent_path()) make_dir(out_path.parent_path());
  if (kind == "base") {
    write_corpus(out_path, synth_base_corpus(dialogues, seed));
  } else if (kind == "lookup") {
    write_corpus(out_path, synth_lookup_corpus(dialogues, seed, classes, mapping_seed));
  } else {
    throw ConfigError("--kind must be base or lookup, got '" + kind + "'");
  }
}

void cmd_pretrain(const ConfigMap& config, std::ostream& out) {
  ConfigMap c = config;
  const std::string corpus = require(c, "corpus.path", "--corpus");
  const auto seeds = parse_seed_list(kv::get_string(c, "run.seeds", "0"));
  if (seeds.size() != 1) throw ConfigError("pretrain takes a single --seed");
  const fs::path dir = kv::get_string(c, "run.out", "out");
  make_dir(dir);
  const ModelConfig model = model_config_of(c);
  set_model_keys(c, model);
  pretrain_config_of(c).validate();
  write_config(dir / "resolved_config.txt", c);
  pretrain_into(c, model, corpus, seeds.front(), dir, out);
}

void cmd_adapt(const ConfigMap& config, std::ostream& out) {
  ConfigMap c = config;
  const fs::path bb_path = require(c, "run.backbone", "--backbone");
  require(c, "corpus.path", "--corpus");
  const auto seeds = parse_seed_list(kv::get_string(c, "run.seeds", "0"));
  const Backbone backbone = load_backbone(bb_path);
  const Vocabulary vocab = Vocabulary::load(vocab_path_for(c, bb_path));
  set_model_keys(c, backbone.config);
  const AdapterConfig adapter = adapter_config_of(c);
  adapter.validate(backbone.config);
  const TrainConfig train = train_config_of(c);
  train.validate();

  const fs::path dir = kv::get_string(c, "run.out", "out");
  make_dir(dir);
  write_config(dir / "resolved_config.txt", c);

  const AdaptData data = adapt_data(c, vocab, backbone.config.max_positions, std::span(&adapter, 1), out);
  const std::uint64_t base = checksum(backbone);
  for (const auto seed : seeds) {
    const fs::path sd = dir / seed_dir(seed);
    make_dir(sd);
    auto log = open_out(sd / "train_log.csv");
    AdaptOutcome r = adapt_backbone(backbone, seeded(adapter, seed), seeded(train, seed), data.train, data.valid, &log);
    if (checksum(backbone) != base) throw InvariantError("backbone changed during adaptation");
    save_adapter(sd / "adapter.ckpt", r.adapter, r.backbone, base,
                 {{"run.seed", std::to_string(seed)},
                  {"train.best_epoch", std::to_string(r.result.best_epoch)},
                  {"train.best_valid_loss", kv::format_double(r.result.best_valid_loss)}});
    out << strategy_name(adapter.kind) << " seed " << seed << ": best epoch " << r.result.best_epoch
        << ", valid loss " << r.result.best_valid_loss << ", steps " << r.result.steps << '\n';
  }
}

void cmd_eval(const ConfigMap& config, std::ostream& out) {
  ConfigMap c = config;
  const fs::path bb_path = require(c, "run.backbone", "--backbone");
  const fs::path ad_path = require(c, "run.adapter", "--adapter");
  const auto seeds = parse_seed_list(kv::get_string(c, "run.seeds", "0"));
  const bool per_seed = fs::is_directory(ad_path);
  if (!per_seed && seeds.size() > 1) {
    throw ConfigError("--adapter names one checkpoint but several seeds were given; pass the adapt output directory");
  }
  const Backbone backbone = load_backbone(bb_path);
  const Vocabulary vocab = Vocabulary::load(vocab_path_for(c, bb_path));
  set_model_keys(c, backbone.config);
  const GenerationConfig gen = generation_config_of(c);
  gen.validate();

  const fs::path dir = kv::get_string(c, "run.out", "out");
  make_dir(dir);
  write_config(dir / "resolved_config.txt", c);

  std::vector<LoadedAdapter> adapters;
  for (const auto seed : seeds) adapters.push_back(load_adapter(per_seed ? ad_path / seed_dir(seed) / "adapter.ckpt" : ad_path, backbone));
  std::vector<AdapterConfig> configs;
  for (const auto& a : adapters) configs.push_back(a.adapter.config());
  const auto test = eval_samples(c, vocab, backbone.config.max_positions, configs, out);

  nlohmann::ordered_json summary;
  summary["seeds"] = seeds;
  summary["reports"] = nlohmann::ordered_json::array();
  std::vector<Scores> runs;
  std::vector<std::pair<std::string, Scores>> rows;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    EvalReport report = evaluate_generation(adapters[i].backbone, adapters[i].adapter, vocab, test, gen);
    report.config = c;
    report.config["run.seed"] = std::to_string(seeds[i]);
    const std::string name = "report_" + seed_dir(seeds[i]) + ".json";
    write_report(dir / name, report);
    nlohmann::ordered_json entry;
    entry["seed"] = seeds[i];
    entry["file"] = name;
    entry["corpus_digest"] = checksum_hex(report.corpus_digest);
    entry["scores"] = scores_json(report.scores);
    summary["reports"].push_back(std::move(entry));
    runs.push_back(report.scores);
    rows.emplace_back("seed " + std::to_string(seeds[i]), report.scores);
  }
  const Scores mean = mean_scores(runs);
  summary["mean"] = scores_json(mean);
  rows.emplace_back("mean", mean);
  open_out(dir / "summary.json") << summary.dump(2) << '\n';
  const std::string table = scores_table(rows);
  open_out(dir / "summary.txt") << table;
  out << table;
}

fs::path cmd_sweep(const ConfigMap& config, std::ostream& out) {
  ConfigMap c = config;
  const std::string axis = kv::get_string(c, "sweep.axis", "prompt_size");
  if (axis != "prompt_size" && axis != "model_size") {
    throw ConfigError("sweep.axis must be prompt_size or model_size, got '" + axis + "'");
  }
  require(c, "corpus.path", "--corpus");
  const auto seeds = parse_seed_list(kv::get_string(c, "run.seeds", "0"));
  const fs::path dir = kv::get_string(c, "run.out", "out");
  make_dir(dir);
  write_config(dir / "resolved_config.txt", c);

  struct Cell {
    std::string value;
    AdapterConfig adapter;
  };
  std::vector<Cell> cells;
  const AdapterConfig base_adapter = adapter_config_of(c);
  if (axis == "prompt_size") {
    for (const auto& v : split_list(kv::get_string(c, "sweep.prompt_sizes", ""))) {
      AdapterConfig a = base_adapter;
      a.prompt_length = kv::get_size({{"sweep.prompt_sizes", v}}, "sweep.prompt_sizes", 0);
      if (a.prompt_length == 0) throw ConfigError("sweep.prompt_sizes entries must be positive");
      cells.push_back({v, a});
    }
  } else {
    for (const auto& preset : split_list(kv::get_string(c, "sweep.model_sizes", ""))) {
      model_preset(preset);
      for (const auto& s : split_list(kv::get_string(c, "sweep.strategies", ""))) {
        AdapterConfig a = base_adapter;
        a.kind = parse_strategy(s);
        cells.push_back({preset, a});
      }
    }
  }
  if (cells.empty()) throw ConfigError("sweep has no cells");

  const fs::path csv = dir / "sweep.csv";
  std::set<std::string> done = completed_cells(csv);
  const bool fresh = !fs::exists(csv) || fs::file_size(csv) == 0;
  std::ofstream f(csv, std::ios::binary | std::ios::app);
  if (!f) throw IoError("cannot write " + csv.string());
  if (fresh) f << kSweepHeader << '\n' << std::flush;

  std::vector<AdapterConfig> all;
  for (const auto& cell : cells) all.push_back(cell.adapter);

  // One backbone per model-size value (or a single one for the prompt axis).
  std::map<std::string, Pretrained> backbones;
  auto backbone_for = [&](const std::string& preset) -> Pretrained& {
    const std::string name = preset.empty() ? std::string("default") : preset;
    if (auto it = backbones.find(name); it != backbones.end()) return it->second;
    const std::string given = kv::get_string(c, "run.backbone", "");
    if (preset.empty() && !given.empty()) {
      Pretrained p{load_backbone(given), Vocabulary::load(vocab_path_for(c, given))};
      return backbones.emplace(name, std::move(p)).first->second;
    }
    const fs::path bdir = dir / "backbones" / name;
    if (fs::exists(bdir / "backbone.ckpt") && fs::exists(bdir / "vocab.txt")) {
      out << "reusing " << (bdir / "backbone.ckpt").string() << '\n';
      Pretrained p{load_backbone(bdir / "backbone.ckpt"), Vocabulary::load(bdir / "vocab.txt")};
      return backbones.emplace(name, std::move(p)).first->second;
    }
    ModelConfig model = preset.empty() ? model_config_of(c) : model_preset(preset);
    if (!preset.empty()) model.max_positions = model_config_of(c).max_positions;
    Pretrained p = pretrain_into(c, model, require(c, "sweep.pretrain_corpus", "sweep.pretrain_corpus"),
                                 seeds.front(), bdir, out);
    return backbones.emplace(name, std::move(p)).first->second;
  };

  for (const auto& cell : cells) {
    const std::string strategy(strategy_name(cell.adapter.kind));
    const std::string key = axis + "," + cell.value + "," + strategy;
    if (done.contains(key)) {
      out << "skip: " << axis << "=" << cell.value << " " << strategy << " already in " << csv.string() << '\n';
      continue;
    }
    out << axis << "=" << cell.value << " " << strategy << '\n';
    Pretrained& pb = backbone_for(axis == "model_size" ? cell.value : std::string());
    const ModelConfig& m = pb.backbone.config;
    cell.adapter.validate(m);
    const AdaptData data = adapt_data(c, pb.vocab, m.max_positions, all, out);
    auto test = kv::get_string(c, "corpus.test", "").empty()
                    ? data.valid
                    : eval_samples(c, pb.vocab, m.max_positions, all, out);
    const CellResult r = run_cell(c, pb.backbone, pb.vocab, cell.adapter, data, test,
                                  dir / "cells" / (axis + "_" + cell.value + "_" + strategy), out);
    f << axis << ',' << cell.value << ',' << strategy << ','
      << (cell.adapter.kind == StrategyKind::FineTune ? 0 : cell.adapter.k()) << ',' << m.n_layers << ','
      << m.d_model << ',' << r.trainable << ',' << seeds.size() << ',' << format_fixed(r.valid_loss) << ','
      << format_fixed(r.scores.bleu_avg) << ',' << format_fixed(r.scores.nist) << ','
      << format_fixed(r.scores.meteor_lite) << ',' << format_fixed(r.scores.rouge_l) << ','
      << format_fixed(r.scores.avg_length) << '\n'
      << std::flush;
    if (!f) throw IoError("failed writing " + csv.string());
    done.insert(key);
  }
  return csv;
}

ChatSession::ChatSession(Backbone backbone, Adapter adapter, Vocabulary vocab, GenerationConfig gen,
                         WindowConfig window)
    : backbone_(std::move(backbone)),
      adapter_(std::move(adapter)),
      vocab_(std::move(vocab)),
      gen_(gen),
      window_(window) {}

std::vector<Utterance> ChatSession::window_for(const Utterance& user) const {
  std::vector<Utterance> ctx(history_.begin(), history_.end());
  ctx.push_back(user);
  const std::size_t keep = std::min(ctx.size(), window_.max_context_utterances);
  ctx.erase(ctx.begin(), ctx.end() - static_cast<std::ptrdiff_t>(keep));
  for (auto& u : ctx) {
    if (u.size() > window_.max_utterance_words) u.resize(window_.max_utterance_words);
  }
  return ctx;
}

std::string ChatSession::respond(std::string_view user_text) {
  const Utterance user = tokenize(user_text);
  std::vector<Utterance> ctx = window_for(user);
  DialogueSample s = encode_sample(vocab_, {ctx, {}});
  // Drop the oldest utterances until the prompt and one new token fit.
  while (ctx.size() > 1 && prompt_overhead(adapter_.config(), s.segments.size()) + s.context.size() + 1 >
                               backbone_.config.max_positions) {
    ctx.erase(ctx.begin());
    s = encode_sample(vocab_, {ctx, {}});
  }
  const auto ids = generate(backbone_, adapter_, s.context, s.segments, gen_);
  Utterance reply = vocab_.decode_words(ids);
  history_.push_back(user);
  history_.push_back(reply);
  while (history_.size() > window_.max_context_utterances) history_.pop_front();
  return join_words(reply);
}

ChatSession::Turn ChatSession::handle(std::string_view line) {
  const Utterance words = tokenize(line);
  if (words.empty()) return {false, ""};
  if (words.front().starts_with('/')) {
    if (words.size() == 1 && words.front() == "/quit") return {true, ""};
    if (words.size() == 1 && words.front() == "/reset") {
      reset();
      return {false, "(history cleared)"};
    }
    return {false, "commands: /reset clears the history, /quit exits; anything else is a message"};
  }
  return {false, respond(line)};
}

void cmd_chat(const ConfigMap& config, std::istream& in, std::ostream& out) {
  const fs::path bb_path = require(config, "run.backbone", "--backbone");
  fs::path ad_path = require(config, "run.adapter", "--adapter");
  if (fs::is_directory(ad_path)) {
    ad_path = ad_path / seed_dir(parse_seed_list(kv::get_string(config, "run.seeds", "0")).front()) / "adapter.ckpt";
  }
  const Backbone backbone = load_backbone(bb_path);
  Vocabulary vocab = Vocabulary::load(vocab_path_for(config, bb_path));
  LoadedAdapter loaded = load_adapter(ad_path, backbone);
  const StrategyKind kind = loaded.adapter.kind();
  ChatSession session(std::move(loaded.backbone), std::move(loaded.adapter), std::move(vocab),
                      generation_config_of(config), window_config_of(config));
  out << "ctxprompt chat (" << strategy_name(kind) << "); /reset, /quit\n";
  std::string line;
  while (out << "> " << std::flush, std::getline(in, line)) {
    const auto turn = session.handle(line);
    if (turn.quit) break;
    if (!turn.text.empty()) out << turn.text << '\n';
  }
}

namespace {

struct Flags {
  std::string config, seeds, out, strategy, backbone, adapter, corpus, test, vocab;
  std::size_t prompt_size = 0;
  std::vector<std::string> sets;
};

void add_shared(CLI::App* app, Flags& f) {
  app->add_option("--config", f.config, "key = value config file");
  app->add_option("--seed", f.seeds, "seed or comma-separated seeds");
  app->add_option("--out", f.out, "output directory");
  app->add_option("--strategy", f.strategy, "finetune, softprompt, ptuning, prefix or dynamic");
  app->add_option("--prompt-size", f.prompt_size, "prompt length k");
  app->add_option("--backbone", f.backbone, "backbone checkpoint");
  app->add_option("--adapter", f.adapter, "adapter checkpoint or adapt output directory");
  app->add_option("--corpus", f.corpus, "dialogue corpus (JSON Lines)");
  app->add_option("--test-corpus", f.test, "evaluation corpus");
  app->add_option("--vocab", f.vocab, "vocabulary file (default: next to the backbone)");
  app->add_option("--set", f.sets, "override a config key: --set train.batch_size=16");
}

ConfigMap resolve(const Flags& f) {
  ConfigMap c = default_config();
  if (!f.config.empty()) merge_config(c, load_config_file(f.config));
  ConfigMap o;
  for (const auto& s : f.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
    o[s.substr(0, eq)] = s.substr(eq + 1);
  }
  if (!f.seeds.empty()) o["run.seeds"] = f.seeds;
  if (!f.out.empty()) o["run.out"] = f.out;
  if (!f.strategy.empty()) o["adapter.strategy"] = f.strategy;
  if (f.prompt_size > 0) o["adapter.prompt_length"] = std::to_string(f.prompt_size);
  if (!f.backbone.empty()) o["run.backbone"] = f.backbone;
  if (!f.adapter.empty()) o["run.adapter"] = f.adapter;
  if (!f.corpus.empty()) o["corpus.path"] = f.corpus;
  if (!f.test.empty()) o["corpus.test"] = f.test;
  if (!f.vocab.empty()) o["run.vocab"] = f.vocab;
  merge_config(c, o);
  parse_seed_list(c.at("run.seeds"));
  parse_strategy(c.at("adapter.strategy"));
  return c;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err) {
  CLI::App app{"ctxprompt: prompt-based adaptation of small transformer dialogue models"};
  app.require_subcommand(1);
  Flags f;
  std::string kind = "base";
  std::size_t dialogues = 1000, classes = kLookupClasses;
  std::uint64_t synth_seed = 0, mapping_seed = 0;
  std::string synth_out;

  auto* synth = app.add_subcommand("synth", "write a generated corpus");
  synth->add_option("--kind", kind, "base or lookup");
  synth->add_option("--dialogues", dialogues, "number of dialogues");
  synth->add_option("--seed", synth_seed, "generator seed");
  synth->add_option("--classes", classes, "lookup key classes");
  synth->add_option("--mapping-seed", mapping_seed, "lookup permutation seed");
  synth->add_option("--out", synth_out, "output .jsonl path");

  for (const auto& [name, help] : std::initializer_list<std::pair<const char*, const char*>>{
           {"pretrain", "train a backbone from scratch"},
           {"adapt", "train adapters against a frozen backbone"},
           {"eval", "generate and score a test corpus"},
           {"sweep", "prompt-size or model-size ablation"},
           {"chat", "interactive session"}}) {
    add_shared(app.add_subcommand(name, help), f);
  }

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (synth->parsed()) {
      cmd_synth(kind, dialogues, synth_seed, classes, mapping_seed, synth_out);
      return kExitOk;
    }
    const ConfigMap c = resolve(f);
    const std::string name = app.get_subcommands().front()->get_name();
    if (name == "pretrain") cmd_pretrain(c, out);
    else if (name == "adapt") cmd_adapt(c, out);
    else if (name == "eval") cmd_eval(c, out);
    else if (name == "sweep") cmd_sweep(c, out);
    else cmd_chat(c, in, out);
    return kExitOk;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e);
  }
}

}  // namespace ctxprompt
