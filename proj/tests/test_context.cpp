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


#include <algorithm>
#include <set>
#include <string>
#include <vector>

#include "cba/context.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace cba;

namespace {

FreqTable toy_freq() {
  FreqTable f;
  f.add("a", 5);
  f.add("b", 3);
  f.add("c", 1);
  return f;
}

Utterance words_only(const std::vector<std::string>& words) {
  Utterance u;
  u.words = words;
  std::size_t t = 1;
  for (const auto& w : words) {
    u.word_spans.push_back({t, t + w.size()});
    t += w.size() + 1;
  }
  return u;
}

ContextList list_of(std::vector<std::string> words) {
  ContextList l;
  l.words = std::move(words);
  std::sort(l.words.begin(), l.words.end());
  l.gamma = 65536;
  return l;
}

}  // namespace

TEST_CASE("context list filters by threshold and sorts") {
  const std::vector<std::string> vocab{"c", "a", "b"};
  auto all = build_context_list(toy_freq(), vocab, 16);
  CHECK(all.words == std::vector<std::string>{"a", "b", "c"});
  CHECK(all.gamma == 16);
  CHECK(build_context_list(toy_freq(), vocab, 1).words == std::vector<std::string>{"c"});
  CHECK(build_context_list(toy_freq(), vocab, 65536).words.size() == 3);
  FreqTable heavy;
  heavy.add("a", 50);
  CHECK_THROWS(build_context_list(heavy, {"a"}, 4));
  CHECK(all.contains("b"));
  CHECK_FALSE(all.contains("d"));
}

TEST_CASE("context lists nest as the threshold grows (property)") {
  Rng rng(31);
  for (int trial = 0; trial < 30; ++trial) {
    FreqTable f;
    std::vector<std::string> vocab;
    for (std::size_t i = 0; i < 1 + rng.below(20); ++i) {
      vocab.push_back("w" + std::to_string(i));
      f.add(vocab.back(), 1 + rng.below(200));
    }
    std::uint64_t g1 = 1 + rng.below(100), g2 = g1 + rng.below(100);
    std::vector<std::string> small, large;
    try {
      small = build_context_list(f, vocab, g1).words;
    } catch (const Error&) {
    }
    large = build_context_list(f, vocab, 1000).words;
    if (g2 < 1000) {
      try {
        large = build_context_list(f, vocab, g2).words;
      } catch (const Error&) {
        large.clear();
      }
    }
    for (const auto& w : small) CHECK(std::find(large.begin(), large.end(), w) != large.end());
  }
}

TEST_CASE("reference context keeps order and multiplicity") {
  const auto list = list_of({"w2"});
  auto one = reference_context(words_only({"w1", "w2", "w3"}), list);
  REQUIRE(one.size() == 1);
  CHECK(one[0].word == "w2");
  auto two = reference_context(words_only({"w2", "w1", "w2"}), list);
  REQUIRE(two.size() == 2);
  CHECK(two[0].word == "w2");
  CHECK(two[1].word == "w2");
  CHECK_FALSE(two[0].span == two[1].span);
  CHECK(reference_context(words_only({"x", "y"}), list).empty());
}

TEST_CASE("subset composition examples") {
  std::vector<std::string> words;
  for (int i = 0; i < 100; ++i) words.push_back("v" + std::to_string(1000 + i));
  const auto list = list_of(words);
  Rng rng(2);
  auto refs = reference_context(words_only({"v1003", "zz", "v1050"}), list);
  auto s = sample_context_subset(refs, list, 4, rng);
  REQUIRE(s.entries.size() == 4);
  CHECK(s.entries[0] == kNoContext);
  CHECK(s.entries[1] == "v1003");
  CHECK(s.entries[2] == "v1050");
  CHECK(s.ref_indices == std::vector<std::size_t>{1, 2});
  CHECK(s.ref_sequence == std::vector<std::size_t>{1, 2});

  auto none = sample_context_subset({}, list, 4, rng);
  CHECK(none.entries.size() == 4);
  CHECK(none.ref_indices.empty());

  auto tiny = sample_context_subset({}, list_of({"p", "q"}), 200, rng);
  CHECK(tiny.entries.size() == 3);

  CHECK_THROWS_WITH(sample_context_subset(refs, list, 2, rng),
                    doctest::Contains("subset capacity exceeded"));
}

TEST_CASE("sampled subsets keep every reference, stay unique, reproduce (property)") {
  Rng gen(77);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::string> words;
    const std::size_t n = 1 + gen.below(30);
    for (std::size_t i = 0; i < n; ++i) words.push_back("w" + std::to_string(i));
    const auto list = list_of(words);
    std::vector<std::string> utt;
    for (std::size_t i = 0; i < 1 + gen.below(6); ++i)
      utt.push_back(gen.below(4) == 0 ? "oov" : words[gen.below(n)]);
    const auto refs = reference_context(words_only(utt), list);
    std::set<std::string> distinct;
    for (const auto& r : refs) distinct.insert(r.word);
    const std::size_t s_hat = distinct.size() + 1 + gen.below(10);
    const std::uint64_t seed = gen.next_u64();
    Rng r1(seed), r2(seed);
    auto a = sample_context_subset(refs, list, s_hat, r1);
    auto b = sample_context_subset(refs, list, s_hat, r2);
    CHECK(a.entries == b.entries);
    CHECK_NOTHROW(validate_subset(a));
    CHECK(a.entries.size() == std::min(s_hat, n + 1));
    CHECK(std::count(a.entries.begin(), a.entries.end(), std::string(kNoContext)) == 1);
    CHECK(std::set<std::string>(a.entries.begin(), a.entries.end()).size() == a.entries.size());
    for (const auto& w : distinct)
      CHECK(std::find(a.entries.begin(), a.entries.end(), w) != a.entries.end());
    REQUIRE(a.ref_sequence.size() == refs.size());
    for (std::size_t i = 0; i < refs.size(); ++i) {
      CHECK(a.entries[a.ref_sequence[i]] == refs[i].word);
      CHECK(a.ref_spans[i] == refs[i].span);
    }
  }
}

TEST_CASE("explicit subsets mark their references") {
  const auto list = list_of({"k1", "k2", "k3"});
  auto refs = reference_context(words_only({"k3", "k1", "k3"}), list);
  auto s = make_subset({kNoContext, "k1", "k2", "k3"}, refs);
  CHECK(s.ref_indices == std::vector<std::size_t>{1, 3});
  CHECK(s.ref_sequence == std::vector<std::size_t>{3, 1, 3});
  CHECK_THROWS(make_subset({"k1", kNoContext}, refs));
  ContextSubset bad = s;
  bad.entries[2] = "k1";
  CHECK_THROWS(validate_subset(bad));
}

TEST_CASE("context list files round trip") {
  testing::TempDir dir("ctx");
  const auto list = list_of({"bb", "aa", "cc"});
  save_context_list(list, dir.path() / "list.txt");
  CHECK(load_context_list(dir.path() / "list.txt").words == list.words);
}
