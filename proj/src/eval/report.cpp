// Copyright 2026 The ctxprompt Authors
// SPDX-License-Identifier: Apache-2.0

#include "ctxprompt/eval/report.hpp"

#include <cstdio>
#include <fstream>

#include <nlohmann/json.hpp>

#include "ctxprompt/corpus/dialogue.hpp"
#include "ctxprompt/errors.hpp"
#include "ctxprompt/model/digest.hpp"

namespace ctxprompt {
namespace {

nlohmann::ordered_json scores_json(const Scores& s) {
  return {{"bleu_avg", s.bleu_avg},     {"nist", s.nist},
          {"meteor_lite", s.meteor_lite}, {"rouge_l", s.rouge_l},
          {"avg_length", s.avg_length}, {"bleu_avg_x100", s.bleu_avg * 100},
          {"meteor_lite_x100", s.meteor_lite * 100}, {"rouge_l_x100", s.rouge_l * 100}};
}

}  // namespace

Scores score_corpus(std::span<const Words> hyps, std::span<const Words> refs) {
  Scores s;
  s.bleu_avg = corpus_bleu_avg(hyps, refs);
  s.nist = nist(hyps, refs);
  double meteor = 0, rouge = 0;
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    meteor += meteor_lite(hyps[i], refs[i]);
    rouge += rouge_l(hyps[i], refs[i]);
  }
  if (!hyps.empty()) {
    s.meteor_lite = meteor / static_cast<double>(hyps.size());
    s.rouge_l = rouge / static_cast<double>(hyps.size());
  }
  s.avg_length = avg_length(hyps);
  return s;
}

std::uint64_t corpus_digest(std::span<const DialogueSample> samples) {
  Fnv1a h;
  for (const auto& s : samples) {
    h.update_pod(s.context.size());
    for (TokenId t : s.context) h.update_pod(t);
    h.update_pod(s.response.size());
    for (TokenId t : s.response) h.update_pod(t);
  }
  return h.digest();
}

EvalReport evaluate_generation(const Backbone& backbone, const Adapter& adapter, const Vocabulary& vocab,
                               std::span<const DialogueSample> samples, const GenerationConfig& gen) {
  if (samples.empty()) throw EmptyCorpusError("no samples to evaluate");
  EvalReport report;
  report.config = gen.to_kv();
  for (const auto& [k, v] : adapter.config().to_kv()) report.config[k] = v;
  report.corpus_digest = corpus_digest(samples);

  std::vector<Words> hyps, refs;
  for (const auto& s : samples) {
    const auto out = generate(backbone, adapter, s, gen);
    hyps.push_back(vocab.decode_words(out));
    refs.push_back(vocab.decode_words(s.response));
    if (refs.back().empty()) throw EmptyCorpusError("sample with an empty reference response");
    SampleRecord r;
    r.context = vocab.decode(s.context);
    r.reference = join_words(refs.back());
    r.hypothesis = join_words(hyps.back());
    r.bleu_avg = bleu_avg(hyps.back(), refs.back());
    r.meteor_lite = meteor_lite(hyps.back(), refs.back());
    r.rouge_l = rouge_l(hyps.back(), refs.back());
    report.samples.push_back(std::move(r));
  }
  report.scores = score_corpus(hyps, refs);
  return report;
}

Scores mean_scores(std::span<const Scores> runs) {
  Scores m;
  if (runs.empty()) return m;
  for (const auto& s : runs) {
    m.bleu_avg += s.bleu_avg;
    m.nist += s.nist;
    m.meteor_lite += s.meteor_lite;
    m.rouge_l += s.rouge_l;
    m.avg_length += s.avg_length;
  }
  const auto n = static_cast<double>(runs.size());
  m.bleu_avg /= n;
  m.nist /= n;
  m.meteor_lite /= n;
  m.rouge_l /= n;
  m.avg_length /= n;
  return m;
}

std::string report_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["config"] = report.config;
  j["corpus_digest"] = checksum_hex(report.corpus_digest);
  j["metric_notes"] = {{"bleu_avg", "sentence-level BLEU-1..4 mean, averaged over samples, epsilon 1e-9"},
                       {"nist", "corpus-level NIST-5"},
                       {"meteor_lite", "exact + suffix-stem alignment, no synonyms"}};
  j["scores"] = scores_json(report.scores);
  auto& arr = j["samples"] = nlohmann::ordered_json::array();
  for (const auto& s : report.samples) {
    arr.push_back({{"context", s.context},
                   {"reference", s.reference},
                   {"hypothesis", s.hypothesis},
                   {"bleu_avg", s.bleu_avg},
                   {"meteor_lite", s.meteor_lite},
                   {"rouge_l", s.rouge_l}});
  }
  return j.dump(2) + "\n";
}

std::string scores_table(std::span<const std::pair<std::string, Scores>> rows) {
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-24s %8s %8s %8s %8s %8s\n", "", "BLEU", "NIST", "METEOR", "ROUGE-L", "Length");
  out += buf;
  for (const auto& [name, s] : rows) {
    std::snprintf(buf, sizeof(buf), "%-24s %8.2f %8.4f %8.2f %8.2f %8.2f\n", name.c_str(), s.bleu_avg * 100, s.nist,
                  s.meteor_lite * 100, s.rouge_l * 100, s.avg_length);
    out += buf;
  }
  return out;
}

void write_report(const std::filesystem::path& json_path, const EvalReport& report) {
  std::ofstream f(json_path, std::ios::binary);
  if (!f) throw IoError("cannot write " + json_path.string());
  f << report_json(report);
  if (!f) throw IoError("failed writing " + json_path.string());
}

}  // namespace ctxprompt
