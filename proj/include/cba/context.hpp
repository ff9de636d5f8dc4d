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

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "cba/corpus.hpp"
#include "cba/numerics.hpp"

namespace cba {

// Sentinel entry at index 0 of every subset. Never serialized.
inline constexpr const char* kNoContext = "<no-context>";

/// Biasing candidates: every vocabulary word with n_w <= gamma, sorted.
struct ContextList {
  std::vector<std::string> words;
  std::uint64_t gamma = 0;

  bool contains(const std::string& w) const;
};

struct RefOccurrence {
  std::string word;
  Span span;  // gold frame span in the utterance
};

/// A sampled training subset. entries[0] is always kNoContext.
struct ContextSubset {
  std::vector<std::string> entries;
  std::vector<std::size_t> ref_indices;   // distinct reference columns, ascending
  std::vector<std::size_t> ref_sequence;  // column per reference occurrence, utterance order
  std::vector<Span> ref_spans;            // gold span per ref_sequence element
};

ContextList build_context_list(const FreqTable& freq, const std::vector<std::string>& vocab,
                               std::uint64_t gamma);

// Words of `utt` that are in `list`, in order and with multiplicity.
std::vector<RefOccurrence> reference_context(const Utterance& utt, const ContextList& list);

// [no-context] + distinct references + uniform distractors without
// replacement, capped at s_hat entries.
ContextSubset sample_context_subset(const std::vector<RefOccurrence>& refs,
                                    const ContextList& list, std::size_t s_hat, Rng& rng);

// Builds a subset from explicit entries (index 0 must be kNoContext) and
// marks the references found among them.
ContextSubset make_subset(std::vector<std::string> entries,
                          const std::vector<RefOccurrence>& refs);

// Checks the subset invariants; throws on violation.
void validate_subset(const ContextSubset& subset);

// One word per line, sorted, sentinel omitted.
void save_context_list(const ContextList& list, const std::filesystem::path& path);
ContextList load_context_list(const std::filesystem::path& path);

}  // namespace cba
