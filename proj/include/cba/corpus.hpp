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

// Synthetic long-tailed corpus: Zipfian word draws over multi-character
// words, prototype-plus-noise "acoustic" frames, and frequency statistics.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "cba/numerics.hpp"

namespace cba {

// Characters are 'a'..'z' then 'A'..'Z'; index i maps to the i-th symbol.
inline constexpr std::size_t kMaxCharset = 52;
char char_symbol(std::size_t index);
// Returns the index of `c`, or throws "unknown character".
std::size_t char_index(char c, std::size_t charset_size);
std::vector<std::size_t> word_to_indices(std::string_view word, std::size_t charset_size);

/// Training-set occurrence counts n_w with total N.
class FreqTable {
 public:
  void add(const std::string& word, std::uint64_t n = 1);
  std::uint64_t count(const std::string& word) const;  // 0 when absent
  std::uint64_t total() const noexcept { return total_; }
  const std::map<std::string, std::uint64_t>& counts() const noexcept { return counts_; }

 private:
  std::map<std::string, std::uint64_t> counts_;
  std::uint64_t total_ = 0;
};

struct Span {
  std::size_t start = 0;  // inclusive
  std::size_t end = 0;    // exclusive
  friend bool operator==(const Span&, const Span&) = default;
};

struct Utterance {
  std::string id;
  std::vector<std::string> words;
  std::vector<std::size_t> chars;  // concatenation of the words' characters
  Matrix frames;                   // T x F
  std::vector<Span> word_spans;    // frame interval per word
};

enum class ShotBucket { kMany = 0, kMedium = 1, kFew = 2, kZero = 3 };
inline constexpr std::size_t kNumBuckets = 4;
ShotBucket shot_bucket(std::uint64_t n);
const char* bucket_name(ShotBucket b);

struct CorpusConfig {
  std::size_t charset_size = 26;
  std::size_t vocab_size = 200;
  double zipf_exponent = 1.0;
  std::size_t word_len_min = 2;
  std::size_t word_len_max = 4;
  std::size_t utt_len_min = 3;
  std::size_t utt_len_max = 8;
  std::size_t frames_per_char = 3;
  std::size_t silence_frames = 2;
  std::size_t feature_dim = 16;
  double noise_sigma = 0.1;
  std::size_t n_train = 2000;
  std::size_t n_test = 200;
  std::size_t n_zero_shot_words = 20;
  // Probability that a test word slot holds a zero-shot word.
  double zero_shot_rate = 0.3;
  // Scale of the cluster centres characters are drawn around.
  double proto_scale = 1.0;
  // Characters come in confusable pairs: centre +/- pair_offset along a
  // random unit direction.
  double pair_offset = 0.15;
  // 0: every word draws both members of a pair alike. 1: the more frequent
  // half of the vocabulary uses only even members; odd members become more
  // likely with rank, reaching certainty for the zero-shot words.
  double tail_char_skew = 1.0;
  std::uint64_t seed = 1;
};

// Throws Error(kConfig) naming the first violated constraint.
void validate(const CorpusConfig& config);

struct Corpus {
  std::vector<Utterance> train;
  std::vector<Utterance> test;
  Matrix prototypes;                    // charset x F
  FreqTable freq;                       // from train only
  std::vector<std::string> vocab;       // training vocabulary, rank order
  std::vector<std::string> zero_shot;   // held-out words, disjoint from vocab
};

// Normalized Zipf probabilities p_r proportional to 1 / r^s, r = 1..vocab_size.
std::vector<double> zipf_probabilities(std::size_t vocab_size, double exponent);

Corpus generate_corpus(const CorpusConfig& config);

struct FrameBlock {
  Matrix frames;
  std::vector<Span> word_spans;
};

FrameBlock synthesize_frames(const std::vector<std::string>& words,
                             const Matrix& prototypes, const CorpusConfig& config,
                             Rng& rng);

FreqTable count_words(const std::vector<Utterance>& utterances);

// n_nctx / n_ctx with n_ctx the mass of words with n_w <= gamma.
double imbalance_rate(const FreqTable& freq, std::uint64_t gamma);

// Checks the chars/spans invariants; throws naming the offending utterance.
void validate_utterance(const Utterance& utt, std::size_t charset_size);

// On-disk layout (one directory): train.tsv, test.tsv, prototypes.txt,
// vocab.txt, zero_shot.txt.
void save_corpus(const Corpus& corpus, const std::filesystem::path& dir);
Corpus load_corpus(const std::filesystem::path& dir, std::size_t charset_size);

std::string encode_frames(const Matrix& frames);
Matrix decode_frames(std::string_view b64, std::size_t cols);

}  // namespace cba
