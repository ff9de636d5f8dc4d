// Copyright 2026 The cbadapter Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Scoring: character and context-character error rates, shot-bucketed
// word error rates, and attention-mass diagnostics.

#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cba/context.hpp"
#include "cba/corpus.hpp"
#include "cba/model.hpp"

namespace cba {

enum class EditOp { kMatch, kSub, kIns, kDel };

struct AlignedOp {
  EditOp op;
  std::size_t ref_pos;  // for kIns: number of reference symbols consumed so far
  std::size_t hyp_pos;
};

// Unit-cost Levenshtein alignment. Backtrace ties prefer match/substitution,
// then insertion, then deletion.
template <class T>
std::vector<AlignedOp> align(std::span<const T> ref, std::span<const T> hyp) {
  const std::size_t n = ref.size(), m = hyp.size();
  std::vector<std::size_t> dp((n + 1) * (m + 1));
  auto at = [&](std::size_t i, std::size_t j) -> std::size_t& { return dp[i * (m + 1) + j]; };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = i;
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = j;
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t diag = at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      at(i, j) = std::min({diag, at(i, j - 1) + 1, at(i - 1, j) + 1});
    }
  }
  std::vector<AlignedOp> ops;
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0) {
      const bool same = ref[i - 1] == hyp[j - 1];
      if (at(i, j) == at(i - 1, j - 1) + (same ? 0 : 1)) {
        ops.push_back({same ? EditOp::kMatch : EditOp::kSub, i - 1, j - 1});
        --i;
        --j;
        continue;
      }
    }
    if (j > 0 && at(i, j) == at(i, j - 1) + 1) {
      ops.push_back({EditOp::kIns, i, j - 1});
      --j;
      continue;
    }
    ops.push_back({EditOp::kDel, i - 1, j});
    --i;
  }
  return {ops.rbegin(), ops.rend()};
}

template <class T>
std::size_t edit_distance(std::span<const T> a, std::span<const T> b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = std::min({prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1), prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

struct CharErrorCount {
  std::size_t errors = 0;
  std::size_t ref_len = 0;
  double rate() const;
};

// Plain mode (spans empty): Levenshtein distance / |ref|. Span mode: edits
// charged to characters inside `spans` (substitutions, deletions, and
// insertions strictly inside a span) over the total span length.
CharErrorCount char_errors(std::span<const std::size_t> ref, std::span<const std::size_t> hyp,
                           std::span<const Span> spans = {});
double cer(std::span<const std::size_t> ref, std::span<const std::size_t> hyp,
           std::span<const Span> spans = {});

struct BucketCounts {
  std::array<std::size_t, kNumBuckets> ref_count{};
  std::array<std::size_t, kNumBuckets> errors{};
  std::size_t total_refs() const;
  double rate(ShotBucket b) const;  // NaN when the bucket is empty
  void add(const BucketCounts& other);
};

struct WordScores {
  BucketCounts word;
  BucketCounts context;  // restricted to reference words in the context list
};

WordScores bucketed_word_errors(const std::vector<std::string>& ref_words,
                                const std::vector<std::string>& hyp_words, const FreqTable& freq,
                                const ContextList* context_list);

// Test-split words seen fewer than `threshold` times, plus all zero-shot words.
ContextList build_inference_context_list(const std::vector<Utterance>& test,
                                         const std::vector<std::string>& zero_shot,
                                         std::uint64_t threshold = 10);

struct RefMass {
  std::string word;
  Span span;
  double ref_mass = 0.0;         // mean attention on the word's own column over its span
  double no_context_mass = 0.0;  // mean column-0 attention over the same span
};

struct AttentionSummary {
  std::vector<RefMass> refs;
  double silence_no_context_mass = 0.0;  // mean column-0 attention over non-word frames
  std::size_t silence_frames = 0;
};

AttentionSummary attention_summary(const Matrix& attention, const ContextSubset& subset,
                                   const std::vector<Span>& word_spans);

enum class EvalMode { kRealistic, kDiagnostic };

struct EvalOptions {
  std::size_t s_hat = 32;
  std::uint64_t test_count_threshold = 10;
  EvalMode mode = EvalMode::kRealistic;
  std::size_t word_gap = 2;  // blank frames that separate hypothesis words
};

struct EvalReport {
  std::size_t n_utterances = 0;
  CharErrorCount chars;
  CharErrorCount context_chars;
  WordScores words;
  // Attention diagnostics (adapter runs only).
  std::size_t n_ref_occurrences = 0;
  double mean_ref_mass = 0.0;
  double mean_no_context_in_context = 0.0;
  double mean_no_context_in_silence = 0.0;
  bool has_attention = false;

  double cer() const { return chars.rate(); }
  double c_cer() const { return context_chars.rate(); }
};

struct EvalResult {
  EvalReport report;
  std::vector<AttentionSummary> per_utterance;
  ContextList context_list;
};

// Scores the recognizer on `test`. With `adapter` null the adapter-free
// backbone is scored. In realistic mode the inference list is cut into
// consecutive chunks of s_hat - 1 words; each utterance is decoded with the
// chunk holding the most of its reference words.
EvalResult evaluate(const std::vector<Utterance>& test, const FreqTable& freq,
                    const std::vector<std::string>& zero_shot, const BackboneParams& backbone,
                    const AdapterParams* adapter, const EvalOptions& options);

// Subset entries `utt` is decoded with: the chunk holding the most of its
// reference words (realistic) or its references followed by list order
// (diagnostic).
std::vector<std::string> decoding_entries(const Utterance& utt, const ContextList& list,
                                          const EvalOptions& options);

std::string chars_to_string(std::span<const std::size_t> chars);

// Report files: key = value text, and per-bucket TSVs.
std::string format_report(const EvalReport& report, EvalMode mode);
std::string format_bucket_tsv(const BucketCounts& counts);
std::string format_attention_tsv(const Matrix& attention, const std::vector<std::string>& entries);
std::string format_attention_summary_tsv(const std::vector<AttentionSummary>& summaries,
                                         const std::vector<Utterance>& test);

}  // namespace cba
