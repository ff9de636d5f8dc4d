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

#include "cba/context.hpp"

#include <algorithm>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "cba/text_io.hpp"

namespace cba {

bool ContextList::contains(const std::string& w) const {
  return std::binary_search(words.begin(), words.end(), w);
}

ContextList build_context_list(const FreqTable& freq, const std::vector<std::string>& vocab,
                               std::uint64_t gamma) {
  if (gamma < 1) throw Error("gamma must be at least 1", ErrorKind::kArgument);
  std::set<std::string> picked;
  for (const auto& w : vocab) {
    if (freq.count(w) <= gamma) picked.insert(w);
  }
  if (picked.empty()) {
    throw Error("context list is empty at gamma " + std::to_string(gamma));
  }
  return ContextList{{picked.begin(), picked.end()}, gamma};
}

std::vector<RefOccurrence> reference_context(const Utterance& utt, const ContextList& list) {
  std::vector<RefOccurrence> out;
  for (std::size_t i = 0; i < utt.words.size(); ++i) {
    if (list.contains(utt.words[i])) {
      out.push_back({utt.words[i], i < utt.word_spans.size() ? utt.word_spans[i] : Span{}});
    }
  }
  return out;
}

ContextSubset make_subset(std::vector<std::string> entries,
                          const std::vector<RefOccurrence>& refs) {
  if (entries.empty() || entries.front() != kNoContext) {
    throw Error("subset must start with the no-context entry");
  }
  ContextSubset subset;
  subset.entries = std::move(entries);
  std::unordered_map<std::string, std::size_t> column;
  for (std::size_t s = 1; s < subset.entries.size(); ++s) column.emplace(subset.entries[s], s);
  std::set<std::size_t> distinct;
  for (const auto& r : refs) {
    auto it = column.find(r.word);
    if (it == column.end()) continue;
    distinct.insert(it->second);
    subset.ref_sequence.push_back(it->second);
    subset.ref_spans.push_back(r.span);
  }
  subset.ref_indices.assign(distinct.begin(), distinct.end());
  return subset;
}

ContextSubset sample_context_subset(const std::vector<RefOccurrence>& refs,
                                    const ContextList& list, std::size_t s_hat, Rng& rng) {
  std::vector<std::string> distinct;
  std::unordered_set<std::string> ref_set;
  for (const auto& r : refs) {
    if (ref_set.insert(r.word).second) distinct.push_back(r.word);
  }
  if (distinct.size() + 1 > s_hat) {
    throw Error("subset capacity exceeded: " + std::to_string(distinct.size()) +
                " reference words need s_hat >= " + std::to_string(distinct.size() + 1) +
                "; raise train.s_hat");
  }
  std::vector<std::string> candidates;
  candidates.reserve(list.words.size());
  for (const auto& w : list.words) {
    if (!ref_set.count(w)) candidates.push_back(w);
  }
  const std::size_t want = std::min(s_hat - 1 - distinct.size(), candidates.size());
  // Partial Fisher-Yates: the first `want` slots are a uniform sample in
  // random order.
  for (std::size_t i = 0; i < want; ++i) {
    const std::size_t j = i + rng.below(candidates.size() - i);
    std::swap(candidates[i], candidates[j]);
  }
  std::vector<std::string> entries;
  entries.reserve(1 + distinct.size() + want);
  entries.emplace_back(kNoContext);
  entries.insert(entries.end(), distinct.begin(), distinct.end());
  entries.insert(entries.end(), candidates.begin(),
                 candidates.begin() + static_cast<std::ptrdiff_t>(want));
  return make_subset(std::move(entries), refs);
}

void validate_subset(const ContextSubset& subset) {
  if (subset.entries.empty() || subset.entries.front() != kNoContext) {
    throw Error("subset index 0 is not the no-context entry");
  }
  std::unordered_set<std::string> seen;
  for (const auto& e : subset.entries) {
    if (!seen.insert(e).second) throw Error("duplicate subset entry '" + e + "'");
  }
  for (std::size_t idx : subset.ref_indices) {
    if (idx == 0 || idx >= subset.entries.size()) throw Error("reference index out of range");
  }
  for (std::size_t idx : subset.ref_sequence) {
    if (!std::binary_search(subset.ref_indices.begin(), subset.ref_indices.end(), idx)) {
      throw Error("reference occurrence without a reference index");
    }
  }
}

void save_context_list(const ContextList& list, const std::filesystem::path& path) {
  write_lines(path, list.words);
}

ContextList load_context_list(const std::filesystem::path& path) {
  std::set<std::string> words;
  for (auto& line : read_lines(path)) {
    if (line.empty()) continue;
    if (line == kNoContext) throw Error("context list must not contain the no-context entry");
    words.insert(line);
  }
  return ContextList{{words.begin(), words.end()}, 0};
}

}  // namespace cba
