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

#include "cba/corpus.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "cba/text_io.hpp"

namespace cba {

char char_symbol(std::size_t index) {
  if (index < 26) return static_cast<char>('a' + index);
  if (index < kMaxCharset) return static_cast<char>('A' + (index - 26));
  throw Error("character index out of range: " + std::to_string(index));
}

std::size_t char_index(char c, std::size_t charset_size) {
  std::size_t idx = kMaxCharset;
  if (c >= 'a' && c <= 'z') idx = static_cast<std::size_t>(c - 'a');
  else if (c >= 'A' && c <= 'Z') idx = 26 + static_cast<std::size_t>(c - 'A');
  if (idx >= charset_size) {
    throw Error(std::string("unknown character '") + c + "'");
  }
  return idx;
}

std::vector<std::size_t> word_to_indices(std::string_view word, std::size_t charset_size) {
  std::vector<std::size_t> out;
  out.reserve(word.size());
  for (char c : word) out.push_back(char_index(c, charset_size));
  return out;
}

void FreqTable::add(const std::string& word, std::uint64_t n) {
  counts_[word] += n;
  total_ += n;
}

std::uint64_t FreqTable::count(const std::string& word) const {
  auto it = counts_.find(word);
  return it == counts_.end() ? 0 : it->second;
}

ShotBucket shot_bucket(std::uint64_t n) {
  if (n > 100) return ShotBucket::kMany;
  if (n > 20) return ShotBucket::kMedium;
  if (n > 0) return ShotBucket::kFew;
  return ShotBucket::kZero;
}

const char* bucket_name(ShotBucket b) {
  switch (b) {
    case ShotBucket::kMany: return "many";
    case ShotBucket::kMedium: return "medium";
    case ShotBucket::kFew: return "few";
    case ShotBucket::kZero: return "zero";
  }
  return "?";
}

namespace {

[[noreturn]] void config_error(const std::string& msg) {
  throw Error(msg, ErrorKind::kConfig);
}

// Number of distinct words without adjacent repeated characters.
double word_capacity(const CorpusConfig& c) {
  double total = 0.0;
  const double n = static_cast<double>(c.charset_size);
  for (std::size_t len = c.word_len_min; len <= c.word_len_max; ++len) {
    total += n * std::pow(n - 1.0, static_cast<double>(len - 1));
  }
  return total;
}

// odd_prob: chance that a character comes from the odd half of each
// confusable pair.
std::string random_word(const CorpusConfig& c, double odd_prob, Rng& rng) {
  const std::size_t len =
      c.word_len_min + rng.below(c.word_len_max - c.word_len_min + 1);
  const std::size_t n_even = (c.charset_size + 1) / 2, n_odd = c.charset_size / 2;
  std::string w;
  std::size_t prev = kMaxCharset;
  for (std::size_t i = 0; i < len; ++i) {
    // Adjacent repeats would be merged by CTC collapse.
    std::size_t idx;
    do {
      const bool odd = rng.uniform01() < odd_prob;
      idx = odd ? 2 * rng.below(n_odd) + 1 : 2 * rng.below(n_even);
    } while (idx == prev);
    w.push_back(char_symbol(idx));
    prev = idx;
  }
  return w;
}

Matrix make_prototypes(const CorpusConfig& c, Rng& rng) {
  const std::size_t f = c.feature_dim;
  Matrix protos(c.charset_size, f);
  for (std::size_t base = 0; base < c.charset_size; base += 2) {
    std::vector<double> centre(f), dir(f);
    for (auto& v : centre) v = c.proto_scale * rng.gaussian();
    double norm = 0.0;
    for (auto& v : dir) {
      v = rng.gaussian();
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (std::size_t j = 0; j < f; ++j) {
      const double off = c.pair_offset * dir[j] / norm;
      protos(base, j) = centre[j] + off;
      if (base + 1 < c.charset_size) protos(base + 1, j) = centre[j] - off;
    }
  }
  return protos;
}

class ZipfSampler {
 public:
  ZipfSampler(std::size_t n, double s) : cdf_(zipf_probabilities(n, s)) {
    for (std::size_t i = 1; i < cdf_.size(); ++i) cdf_[i] += cdf_[i - 1];
    cdf_.back() = 1.0;
  }
  std::size_t sample(Rng& rng) const {
    const double u = rng.uniform01();
    auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    return std::min<std::size_t>(it - cdf_.begin(), cdf_.size() - 1);
  }

 private:
  std::vector<double> cdf_;
};

std::size_t utt_length(const CorpusConfig& c, Rng& rng) {
  return c.utt_len_min + rng.below(c.utt_len_max - c.utt_len_min + 1);
}

Utterance make_utterance(std::string id, std::vector<std::string> words,
                         const Matrix& protos, const CorpusConfig& c, Rng& rng) {
  Utterance u;
  u.id = std::move(id);
  for (const auto& w : words) {
    auto idx = word_to_indices(w, c.charset_size);
    u.chars.insert(u.chars.end(), idx.begin(), idx.end());
  }
  u.words = std::move(words);
  auto block = synthesize_frames(u.words, protos, c, rng);
  u.frames = std::move(block.frames);
  u.word_spans = std::move(block.word_spans);
  return u;
}

std::string utt_id(const char* prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%06zu", prefix, i);
  return buf;
}

}  // namespace

void validate(const CorpusConfig& c) {
  if (c.charset_size < 2 || c.charset_size > kMaxCharset)
    config_error("charset_size must be in [2, 52]");
  if (c.vocab_size == 0) config_error("vocab_size must be positive");
  if (!(c.zipf_exponent >= 0.0)) config_error("zipf_exponent must be nonnegative");
  if (c.word_len_min < 2) config_error("word_len_min must be at least 2");
  if (c.word_len_max < c.word_len_min) config_error("word_len_max must be >= word_len_min");
  if (c.utt_len_min == 0) config_error("utt_len_min must be positive");
  if (c.utt_len_max < c.utt_len_min) config_error("utt_len_max must be >= utt_len_min");
  if (c.frames_per_char == 0) config_error("frames_per_char must be positive");
  if (c.silence_frames == 0) config_error("silence_frames must be positive");
  if (c.feature_dim == 0) config_error("feature_dim must be positive");
  if (!(c.noise_sigma >= 0.0)) config_error("noise_sigma must be nonnegative");
  if (c.n_train == 0) config_error("n_train must be positive");
  if (c.n_test == 0) config_error("n_test must be positive");
  if (!(c.zero_shot_rate >= 0.0 && c.zero_shot_rate <= 1.0))
    config_error("zero_shot_rate out of range [0,1]");
  if (!(c.proto_scale > 0.0)) config_error("proto_scale must be positive");
  if (!(c.pair_offset > 0.0)) config_error("pair_offset must be positive");
  if (!(c.tail_char_skew >= 0.0 && c.tail_char_skew <= 1.0))
    config_error("tail_char_skew out of range [0,1]");
  if (c.vocab_size < c.n_zero_shot_words)
    config_error("vocab_size smaller than the requested zero-shot word count");
  if (word_capacity(c) < static_cast<double>(c.vocab_size + c.n_zero_shot_words))
    config_error("charset and word lengths cannot produce enough distinct words");
}

std::vector<double> zipf_probabilities(std::size_t vocab_size, double exponent) {
  if (vocab_size == 0) throw Error("zipf: empty vocabulary");
  std::vector<double> p(vocab_size);
  double z = 0.0;
  for (std::size_t r = 0; r < vocab_size; ++r) {
    p[r] = 1.0 / std::pow(static_cast<double>(r + 1), exponent);
    z += p[r];
  }
  for (double& v : p) v /= z;
  return p;
}

FrameBlock synthesize_frames(const std::vector<std::string>& words,
                             const Matrix& prototypes, const CorpusConfig& c,
                             Rng& rng) {
  const std::size_t f = prototypes.cols();
  std::vector<std::vector<std::size_t>> indices;
  std::size_t n_chars = 0;
  for (const auto& w : words) {
    indices.push_back(word_to_indices(w, prototypes.rows()));
    n_chars += indices.back().size();
  }
  const std::size_t t_total =
      c.silence_frames * (words.size() + 1) + c.frames_per_char * n_chars;
  FrameBlock block{Matrix(t_total, f), {}};
  std::size_t t = 0;
  auto silence = [&] {
    for (std::size_t k = 0; k < c.silence_frames; ++k, ++t) {
      for (std::size_t j = 0; j < f; ++j) block.frames(t, j) = c.noise_sigma * rng.gaussian();
    }
  };
  silence();
  for (const auto& word : indices) {
    const std::size_t start = t;
    for (std::size_t ch : word) {
      for (std::size_t k = 0; k < c.frames_per_char; ++k, ++t) {
        for (std::size_t j = 0; j < f; ++j) {
          block.frames(t, j) = prototypes(ch, j) + c.noise_sigma * rng.gaussian();
        }
      }
    }
    block.word_spans.push_back({start, t});
    silence();
  }
  return block;
}

FreqTable count_words(const std::vector<Utterance>& utterances) {
  FreqTable freq;
  for (const auto& u : utterances) {
    for (const auto& w : u.words) freq.add(w);
  }
  return freq;
}

Corpus generate_corpus(const CorpusConfig& c) {
  validate(c);
  Rng rng(c.seed);
  Corpus corpus;

  std::unordered_set<std::string> seen;
  std::vector<std::string> pool;
  const std::size_t pool_size = c.vocab_size + c.n_zero_shot_words;
  while (pool.size() < pool_size) {
    // Frequency rank decides how often the odd member of a pair is used.
    const double rank = pool_size > 1 ? static_cast<double>(pool.size()) /
                                            static_cast<double>(pool_size - 1)
                                      : 0.5;
    const double odd_prob =
        (1.0 - c.tail_char_skew) * 0.5 + c.tail_char_skew * std::max(0.0, 2.0 * rank - 1.0);
    auto w = random_word(c, odd_prob, rng);
    if (seen.insert(w).second) pool.push_back(std::move(w));
  }
  corpus.vocab.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(c.vocab_size));
  corpus.zero_shot.assign(pool.begin() + static_cast<std::ptrdiff_t>(c.vocab_size), pool.end());
  corpus.prototypes = make_prototypes(c, rng);

  const ZipfSampler zipf(c.vocab_size, c.zipf_exponent);
  corpus.train.reserve(c.n_train);
  for (std::size_t i = 0; i < c.n_train; ++i) {
    std::vector<std::string> words(utt_length(c, rng));
    for (auto& w : words) w = corpus.vocab[zipf.sample(rng)];
    corpus.train.push_back(
        make_utterance(utt_id("train", i), std::move(words), corpus.prototypes, c, rng));
  }

  std::vector<std::vector<std::string>> test_words(c.n_test);
  std::unordered_map<std::string, std::size_t> zs_count;
  for (const auto& w : corpus.zero_shot) zs_count[w] = 0;
  for (auto& words : test_words) {
    words.resize(utt_length(c, rng));
    for (auto& w : words) {
      if (!corpus.zero_shot.empty() && rng.uniform01() < c.zero_shot_rate) {
        w = corpus.zero_shot[rng.below(corpus.zero_shot.size())];
        ++zs_count[w];
      } else {
        w = corpus.vocab[zipf.sample(rng)];
      }
    }
  }
  // Every zero-shot word must occur at least once in the test split.
  std::vector<std::pair<std::size_t, std::size_t>> slots;
  for (std::size_t i = 0; i < test_words.size(); ++i)
    for (std::size_t j = 0; j < test_words[i].size(); ++j) slots.emplace_back(i, j);
  for (const auto& w : corpus.zero_shot) {
    if (zs_count[w] > 0) continue;
    const std::size_t offset = rng.below(slots.size());
    bool placed = false;
    for (std::size_t k = 0; k < slots.size() && !placed; ++k) {
      auto [i, j] = slots[(offset + k) % slots.size()];
      std::string& cur = test_words[i][j];
      auto it = zs_count.find(cur);
      if (it == zs_count.end() || it->second > 1) {
        if (it != zs_count.end()) --it->second;
        cur = w;
        ++zs_count[w];
        placed = true;
      }
    }
    if (!placed) config_error("test split too small to hold every zero-shot word");
  }
  corpus.test.reserve(c.n_test);
  for (std::size_t i = 0; i < c.n_test; ++i) {
    corpus.test.push_back(make_utterance(utt_id("test", i), std::move(test_words[i]),
                                         corpus.prototypes, c, rng));
  }
  corpus.freq = count_words(corpus.train);
  return corpus;
}

double imbalance_rate(const FreqTable& freq, std::uint64_t gamma) {
  if (gamma < 1) throw Error("gamma must be at least 1", ErrorKind::kArgument);
  std::uint64_t n_ctx = 0;
  for (const auto& [w, n] : freq.counts()) {
    if (n <= gamma) n_ctx += n;
  }
  if (n_ctx == 0) throw Error("no context-word occurrences at this threshold");
  return static_cast<double>(freq.total() - n_ctx) / static_cast<double>(n_ctx);
}

void validate_utterance(const Utterance& u, std::size_t charset_size) {
  auto fail = [&](const std::string& why) {
    throw Error("utterance " + u.id + ": " + why);
  };
  std::vector<std::size_t> expect;
  for (const auto& w : u.words) {
    if (w.size() < 2) fail("word '" + w + "' has fewer than 2 characters");
    auto idx = word_to_indices(w, charset_size);
    expect.insert(expect.end(), idx.begin(), idx.end());
  }
  if (expect != u.chars) fail("chars are not the concatenation of words");
  if (u.word_spans.size() != u.words.size()) fail("span count differs from word count");
  std::size_t prev_end = 0;
  for (std::size_t i = 0; i < u.word_spans.size(); ++i) {
    const Span& s = u.word_spans[i];
    if (s.start >= s.end) fail("empty span");
    if (s.start < prev_end) fail("spans overlap or are out of order");
    if (s.end > u.frames.rows()) fail("span exceeds frame count");
    prev_end = s.end;
  }
}

// --- serialization --------------------------------------------------------

namespace {

constexpr char kB64[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string base64_encode(const std::vector<unsigned char>& bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    out.push_back(kB64[(v >> 18) & 63]);
    out.push_back(kB64[(v >> 12) & 63]);
    out.push_back(kB64[(v >> 6) & 63]);
    out.push_back(kB64[v & 63]);
  }
  const std::size_t rem = bytes.size() - i;
  if (rem > 0) {
    std::uint32_t v = bytes[i] << 16;
    if (rem == 2) v |= bytes[i + 1] << 8;
    out.push_back(kB64[(v >> 18) & 63]);
    out.push_back(kB64[(v >> 12) & 63]);
    out.push_back(rem == 2 ? kB64[(v >> 6) & 63] : '=');
    out.push_back('=');
  }
  return out;
}

std::vector<unsigned char> base64_decode(std::string_view s) {
  std::array<int, 256> table;
  table.fill(-1);
  for (int i = 0; i < 64; ++i) table[static_cast<unsigned char>(kB64[i])] = i;
  if (s.size() % 4 != 0) throw Error("base64: length not a multiple of 4");
  std::vector<unsigned char> out;
  out.reserve(s.size() / 4 * 3);
  for (std::size_t i = 0; i < s.size(); i += 4) {
    std::uint32_t v = 0;
    int pad = 0;
    for (std::size_t k = 0; k < 4; ++k) {
      const char ch = s[i + k];
      int d;
      if (ch == '=') {
        if (i + 4 != s.size() || k < 2) throw Error("base64: misplaced padding");
        d = 0;
        ++pad;
      } else {
        d = table[static_cast<unsigned char>(ch)];
        if (d < 0 || pad > 0) throw Error("base64: invalid character");
      }
      v = (v << 6) | static_cast<std::uint32_t>(d);
    }
    out.push_back(static_cast<unsigned char>((v >> 16) & 0xFF));
    if (pad < 2) out.push_back(static_cast<unsigned char>((v >> 8) & 0xFF));
    if (pad < 1) out.push_back(static_cast<unsigned char>(v & 0xFF));
  }
  return out;
}

std::string join_words(const std::vector<std::string>& words) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out.push_back(' ');
    out += words[i];
  }
  return out;
}

std::string format_spans(const std::vector<Span>& spans) {
  std::string out;
  for (std::size_t i = 0; i < spans.size(); ++i) {
    if (i) out.push_back(',');
    out += std::to_string(spans[i].start) + "-" + std::to_string(spans[i].end);
  }
  return out;
}

std::vector<Span> parse_spans(std::string_view s) {
  std::vector<Span> out;
  if (s.empty()) return out;
  for (auto item : split(s, ',')) {
    const auto dash = item.find('-');
    if (dash == std::string_view::npos) throw Error("bad span '" + std::string(item) + "'");
    out.push_back({parse_size(item.substr(0, dash)), parse_size(item.substr(dash + 1))});
  }
  return out;
}

void save_split(const std::vector<Utterance>& utts, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write " + path.string());
  for (const auto& u : utts) {
    os << u.id << '\t' << join_words(u.words) << '\t' << encode_frames(u.frames) << '\t'
       << format_spans(u.word_spans) << '\n';
  }
  if (!os) throw Error("write failed: " + path.string());
}

std::vector<Utterance> load_split(const std::filesystem::path& path, std::size_t feature_dim,
                                  std::size_t charset_size) {
  std::vector<Utterance> out;
  std::size_t lineno = 0;
  for (const auto& line : read_lines(path)) {
    ++lineno;
    if (line.empty()) continue;
    auto fields = split(line, '\t');
    if (fields.size() != 4) {
      throw Error(path.string() + ":" + std::to_string(lineno) + ": expected 4 fields");
    }
    Utterance u;
    u.id = std::string(fields[0]);
    if (!fields[1].empty()) {
      for (auto w : split(fields[1], ' ')) u.words.emplace_back(w);
    }
    for (const auto& w : u.words) {
      auto idx = word_to_indices(w, charset_size);
      u.chars.insert(u.chars.end(), idx.begin(), idx.end());
    }
    u.frames = decode_frames(fields[2], feature_dim);
    u.word_spans = parse_spans(fields[3]);
    out.push_back(std::move(u));
  }
  return out;
}

}  // namespace

std::string encode_frames(const Matrix& frames) {
  std::vector<unsigned char> bytes;
  bytes.reserve(frames.size() * 8);
  for (double v : frames.flat()) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int b = 0; b < 8; ++b) bytes.push_back(static_cast<unsigned char>(bits >> (8 * b)));
  }
  return base64_encode(bytes);
}

Matrix decode_frames(std::string_view b64, std::size_t cols) {
  auto bytes = base64_decode(b64);
  if (cols == 0 || bytes.size() % (8 * cols) != 0) {
    throw Error("frame block size is not a whole number of rows");
  }
  std::vector<double> data(bytes.size() / 8);
  for (std::size_t i = 0; i < data.size(); ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[i * 8 + b]) << (8 * b);
    data[i] = std::bit_cast<double>(bits);
  }
  const std::size_t rows = data.size() / cols;
  return Matrix(rows, cols, std::move(data));
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_split(corpus.train, dir / "train.tsv");
  save_split(corpus.test, dir / "test.tsv");
  {
    std::ofstream os(dir / "prototypes.txt");
    for (std::size_t r = 0; r < corpus.prototypes.rows(); ++r) {
      for (std::size_t c = 0; c < corpus.prototypes.cols(); ++c) {
        if (c) os << ' ';
        os << format_real(corpus.prototypes(r, c));
      }
      os << '\n';
    }
  }
  write_lines(dir / "vocab.txt", corpus.vocab);
  write_lines(dir / "zero_shot.txt", corpus.zero_shot);
}

Corpus load_corpus(const std::filesystem::path& dir, std::size_t charset_size) {
  Corpus corpus;
  std::vector<std::vector<double>> rows;
  for (const auto& line : read_lines(dir / "prototypes.txt")) {
    if (line.empty()) continue;
    std::vector<double> row;
    for (auto tok : split(line, ' ')) row.push_back(parse_real(tok));
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw Error("prototypes.txt: ragged rows");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw Error("prototypes.txt: no prototypes");
  if (rows.size() != charset_size) {
    throw Error("prototypes.txt: " + std::to_string(rows.size()) +
                " rows but charset_size is " + std::to_string(charset_size));
  }
  corpus.prototypes = Matrix(rows.size(), rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r)
    std::copy(rows[r].begin(), rows[r].end(), corpus.prototypes.row(r).begin());
  const std::size_t f = corpus.prototypes.cols();
  corpus.train = load_split(dir / "train.tsv", f, charset_size);
  corpus.test = load_split(dir / "test.tsv", f, charset_size);
  for (const auto& w : read_lines(dir / "vocab.txt"))
    if (!w.empty()) corpus.vocab.push_back(w);
  for (const auto& w : read_lines(dir / "zero_shot.txt"))
    if (!w.empty()) corpus.zero_shot.push_back(w);
  corpus.freq = count_words(corpus.train);
  return corpus;
}

}  // namespace cba
