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

// Hand-rolled generators and brute-force oracles shared by the test binaries.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "cba/context.hpp"
#include "cba/corpus.hpp"
#include "cba/model.hpp"
#include "cba/numerics.hpp"
#include "cba/objectives.hpp"

namespace cba::testing {

inline Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double scale = 1.0) {
  Matrix m(rows, cols);
  for (double& x : m.flat()) x = scale * rng.gaussian();
  return m;
}

// Rows drawn from a softmax of gaussian logits, so every entry is positive.
inline Matrix random_stochastic(std::size_t rows, std::size_t cols, Rng& rng) {
  return softmax_rows(random_matrix(rows, cols, rng, 1.5));
}

inline std::vector<std::size_t> random_labels(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<std::size_t> out(n);
  for (auto& x : out) x = rng.below(k);
  return out;
}

// Sum over all K^T frame strings of the path probability, kept only when the
// CTC collapse (merge repeats, drop blank) yields `labels`.
inline double brute_force_ctc_log_prob(const Matrix& p, const std::vector<std::size_t>& labels,
                                       std::size_t blank) {
  const std::size_t t_len = p.rows(), k = p.cols();
  std::vector<std::size_t> path(t_len, 0);
  double total = 0.0;
  while (true) {
    std::vector<std::size_t> collapsed;
    std::size_t prev = blank;
    double prob = 1.0;
    for (std::size_t t = 0; t < t_len; ++t) {
      prob *= p(t, path[t]);
      if (path[t] != blank && path[t] != prev) collapsed.push_back(path[t]);
      prev = path[t];
    }
    if (collapsed == labels) total += prob;
    std::size_t pos = 0;
    while (pos < t_len && ++path[pos] == k) path[pos++] = 0;
    if (pos == t_len) break;
  }
  return total > 0.0 ? std::log(total) : -std::numeric_limits<double>::infinity();
}

// Exponential recursion straight from the definition. A matching first
// character is consumed directly, which never loses optimality.
inline std::size_t recursive_levenshtein(const char* a, std::size_t n, const char* b,
                                         std::size_t m) {
  if (n == 0) return m;
  if (m == 0) return n;
  if (a[0] == b[0]) return recursive_levenshtein(a + 1, n - 1, b + 1, m - 1);
  return 1 + std::min({recursive_levenshtein(a + 1, n - 1, b + 1, m - 1),
                       recursive_levenshtein(a + 1, n - 1, b, m),
                       recursive_levenshtein(a, n, b + 1, m - 1)});
}

inline std::size_t recursive_levenshtein(const std::string& a, const std::string& b) {
  return recursive_levenshtein(a.data(), a.size(), b.data(), b.size());
}

// Every string over `alphabet` with length <= max_len, shortest first.
inline std::vector<std::string> all_strings(const std::string& alphabet, std::size_t max_len) {
  std::vector<std::string> out{""};
  std::size_t begin = 0;
  for (std::size_t len = 1; len <= max_len; ++len) {
    const std::size_t end = out.size();
    for (std::size_t i = begin; i < end; ++i)
      for (char c : alphabet) out.push_back(out[i] + c);
    begin = end;
  }
  return out;
}

inline ModelDims tiny_dims(std::size_t charset = 5, std::size_t width = 6) {
  ModelDims d;
  d.charset = charset;
  d.feature_dim = 4;
  d.width = width;
  d.embed = 3;
  d.hidden = width / 2;
  return d;
}

// A random word over the first `charset` letters.
inline std::string random_word(std::size_t charset, Rng& rng, std::size_t min_len = 1,
                               std::size_t max_len = 3) {
  std::string w;
  const std::size_t len = min_len + rng.below(max_len - min_len + 1);
  for (std::size_t i = 0; i < len; ++i) w.push_back(char_symbol(rng.below(charset)));
  return w;
}

// Builds an utterance from words using random prototypes.
inline Utterance make_utterance(const std::vector<std::string>& words, std::size_t charset,
                                std::size_t feature_dim, Rng& rng, std::size_t fpc = 1,
                                std::size_t silence = 1) {
  CorpusConfig cc;
  cc.charset_size = charset;
  cc.feature_dim = feature_dim;
  cc.frames_per_char = fpc;
  cc.silence_frames = silence;
  cc.noise_sigma = 0.1;
  const Matrix protos = random_matrix(charset, feature_dim, rng);
  FrameBlock block = synthesize_frames(words, protos, cc, rng);
  Utterance u;
  u.id = "u";
  u.words = words;
  for (const auto& w : words) {
    auto idx = word_to_indices(w, charset);
    u.chars.insert(u.chars.end(), idx.begin(), idx.end());
  }
  u.frames = std::move(block.frames);
  u.word_spans = std::move(block.word_spans);
  return u;
}

// A scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    Rng rng(std::hash<std::string>{}(tag) ^ static_cast<std::uint64_t>(
                                                 std::filesystem::file_time_type::clock::now()
                                                     .time_since_epoch()
                                                     .count()));
    path_ = std::filesystem::temp_directory_path() /
            ("cba_" + tag + "_" + std::to_string(rng.next_u64() % 1000000007ULL));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace cba::testing
