// Copyright 2026 The ctxprompt Authors
// SPDX-License-Identifier: Apache-2.0

#include "ctxprompt/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "ctxprompt/errors.hpp"

namespace ctxprompt {
namespace {

using Ngram = std::vector<std::string>;
using NgramCounts = std::map<Ngram, std::size_t>;

NgramCounts count_ngrams(std::span<const std::string> words, int n) {
  NgramCounts out;
  const auto un = static_cast<std::size_t>(n);
  if (words.size() < un) return out;
  for (std::size_t i = 0; i + un <= words.size(); ++i) ++out[Ngram(words.begin() + i, words.begin() + i + un)];
  return out;
}

bool is_vowel(char c) { return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u'; }

}  // namespace

NgramMatch modified_precision(std::span<const std::string> hyp, std::span<const std::string> ref, int n) {
  const NgramCounts h = count_ngrams(hyp, n);
  const NgramCounts r = count_ngrams(ref, n);
  NgramMatch m;
  for (const auto& [gram, count] : h) {
    m.total += count;
    if (auto it = r.find(gram); it != r.end()) m.matched += std::min(count, it->second);
  }
  return m;
}

double brevity_penalty(std::size_t hyp_len, std::size_t ref_len) {
  if (hyp_len == 0) return 0.0;
  if (hyp_len > ref_len) return 1.0;
  return std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len));
}

double bleu_n(std::span<const std::string> hyp, std::span<const std::string> ref, int n) {
  if (ref.empty()) throw RangeError("BLEU needs a non-empty reference");
  if (hyp.empty()) return 0.0;
  double log_sum = 0;
  for (int i = 1; i <= n; ++i) {
    const NgramMatch m = modified_precision(hyp, ref, i);
    const double num = m.matched > 0 ? static_cast<double>(m.matched) : kBleuEpsilon;
    const double den = static_cast<double>(std::max<std::size_t>(m.total, 1));
    log_sum += std::log(num / den);
  }
  return brevity_penalty(hyp.size(), ref.size()) * std::exp(log_sum / n);
}

double bleu_avg(std::span<const std::string> hyp, std::span<const std::string> ref) {
  double s = 0;
  for (int n = 1; n <= 4; ++n) s += bleu_n(hyp, ref, n);
  return s / 4.0;
}

double corpus_bleu_avg(std::span<const Words> hyps, std::span<const Words> refs) {
  if (hyps.size() != refs.size()) throw DimensionError("hypothesis and reference counts differ");
  if (hyps.empty()) return 0.0;
  double s = 0;
  for (std::size_t i = 0; i < hyps.size(); ++i) s += bleu_avg(hyps[i], refs[i]);
  return s / static_cast<double>(hyps.size());
}

double nist_length_penalty(std::size_t hyp_len, std::size_t ref_len) {
  if (ref_len == 0) return 0.0;
  const double ratio = static_cast<double>(hyp_len) / static_cast<double>(ref_len);
  if (ratio > 0 && ratio < 1) {
    // penalty 0.5 at a length ratio of 2/3
    const double beta = std::log(0.5) / std::pow(std::log(1.5), 2);
    return std::exp(beta * std::pow(std::log(ratio), 2));
  }
  return std::clamp(ratio, 0.0, 1.0);
}

double nist(std::span<const Words> hyps, std::span<const Words> refs, int max_n) {
  if (hyps.size() != refs.size()) throw DimensionError("hypothesis and reference counts differ");
  if (hyps.empty()) return 0.0;

  std::map<Ngram, std::size_t> freq;
  std::size_t ref_words = 0;
  for (const auto& r : refs) {
    ref_words += r.size();
    for (int n = 1; n <= max_n; ++n) {
      for (const auto& [gram, c] : count_ngrams(r, n)) freq[gram] += c;
    }
  }
  auto info = [&](const Ngram& gram) {
    const double denom = static_cast<double>(freq.at(gram));
    const double num = gram.size() == 1 ? static_cast<double>(ref_words)
                                        : static_cast<double>(freq.at(Ngram(gram.begin(), gram.end() - 1)));
    return std::log2(num / denom);
  };

  std::vector<double> numer(static_cast<std::size_t>(max_n), 0.0), denom(static_cast<std::size_t>(max_n), 0.0);
  std::size_t hyp_len = 0, ref_len = 0;
  for (std::size_t s = 0; s < hyps.size(); ++s) {
    hyp_len += hyps[s].size();
    ref_len += refs[s].size();
    for (int n = 1; n <= max_n; ++n) {
      const auto h = count_ngrams(hyps[s], n);
      const auto r = count_ngrams(refs[s], n);
      const auto i = static_cast<std::size_t>(n - 1);
      for (const auto& [gram, c] : h) {
        if (auto it = r.find(gram); it != r.end()) numer[i] += info(gram) * static_cast<double>(std::min(c, it->second));
      }
      const auto un = static_cast<std::size_t>(n);
      denom[i] += static_cast<double>(hyps[s].size() >= un ? hyps[s].size() - un + 1 : 1);
    }
  }
  double precision = 0;
  for (std::size_t i = 0; i < numer.size(); ++i) precision += numer[i] / denom[i];
  return precision * nist_length_penalty(hyp_len, ref_len);
}

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l(std::span<const std::string> hyp, std::span<const std::string> ref) {
  if (ref.empty()) throw RangeError("ROUGE-L needs a non-empty reference");
  const std::size_t lcs = lcs_length(hyp, ref);
  if (lcs == 0) return 0.0;
  const double p = static_cast<double>(lcs) / static_cast<double>(hyp.size());
  const double r = static_cast<double>(lcs) / static_cast<double>(ref.size());
  return 2 * p * r / (p + r);
}

std::string meteor_stem(std::string_view word) {
  std::string w(word);
  for (std::string_view suffix : {"ing", "es", "ed", "s"}) {
    if (w.size() >= suffix.size() + 3 && w.ends_with(suffix)) {
      w.resize(w.size() - suffix.size());
      break;
    }
  }
  const std::size_t n = w.size();
  if (n >= 3 && w[n - 1] == w[n - 2] && !is_vowel(w[n - 1])) w.pop_back();
  return w;
}

MeteorAlignment meteor_align(std::span<const std::string> hyp, std::span<const std::string> ref) {
  constexpr std::size_t kNone = static_cast<std::size_t>(-1);
  std::vector<std::size_t> link(hyp.size(), kNone);
  std::vector<bool> used(ref.size(), false);
  auto stage = [&](auto&& same) {
    for (std::size_t i = 0; i < hyp.size(); ++i) {
      if (link[i] != kNone) continue;
      for (std::size_t j = 0; j < ref.size(); ++j) {
        if (!used[j] && same(hyp[i], ref[j])) {
          link[i] = j;
          used[j] = true;
          break;
        }
      }
    }
  };
  stage([](const std::string& a, const std::string& b) { return a == b; });
  stage([](const std::string& a, const std::string& b) { return meteor_stem(a) == meteor_stem(b); });

  MeteorAlignment out;
  std::size_t last = kNone;
  for (std::size_t i = 0; i < hyp.size(); ++i) {
    if (link[i] == kNone) {
      last = kNone;
      continue;
    }
    ++out.matches;
    if (last == kNone || link[i] != last + 1) ++out.chunks;
    last = link[i];
  }
  return out;
}

double meteor_lite(std::span<const std::string> hyp, std::span<const std::string> ref) {
  if (ref.empty()) throw RangeError("METEOR needs a non-empty reference");
  const MeteorAlignment a = meteor_align(hyp, ref);
  if (a.matches == 0) return 0.0;
  const double m = static_cast<double>(a.matches);
  const double p = m / static_cast<double>(hyp.size());
  const double r = m / static_cast<double>(ref.size());
  const double fmean = 10 * p * r / (r + 9 * p);
  const double penalty = 0.5 * std::pow(static_cast<double>(a.chunks) / m, 3);
  return fmean * (1 - penalty);
}

double avg_length(std::span<const Words> hyps) {
  if (hyps.empty()) return 0.0;
  std::size_t words = 0;
  for (const auto& h : hyps) words += h.size();
  return static_cast<double>(words) / static_cast<double>(hyps.size());
}

}  // namespace ctxprompt
