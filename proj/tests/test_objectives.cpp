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


#include <cmath>
#include <string>
#include <vector>

#include "cba/objectives.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace cba;

namespace {

struct Instance {
  ModelDims dims;
  BackboneParams backbone;
  AdapterParams adapter;
  Utterance utt;
  ContextSubset subset;
  FreqTable freq;
};

// T <= 5, S_hat <= 4, D <= 8.
Instance random_instance(std::uint64_t seed) {
  Rng rng(seed);
  Instance in;
  in.dims = testing::tiny_dims(4, 2 * (1 + rng.below(4)));
  in.backbone = init_backbone(in.dims, rng, 0.7);
  in.adapter = init_adapter(in.dims, rng, 0.7);
  const std::string w = testing::random_word(in.dims.charset, rng, 1, 2);
  std::vector<std::string> words{w};
  if (w.size() == 1 && rng.below(2) == 0) words.push_back(w);
  in.utt = testing::make_utterance(words, in.dims.charset, in.dims.feature_dim, rng, 1, 1);
  if (in.utt.frames.rows() > 5) {
    words.resize(1);
    in.utt = testing::make_utterance(words, in.dims.charset, in.dims.feature_dim, rng, 1, 1);
  }
  std::vector<std::string> entries{kNoContext, w};
  const std::vector<std::string> distractors{"abd", "cbd"};
  for (std::size_t i = 0; i < 1 + rng.below(2); ++i) entries.push_back(distractors[i]);
  std::vector<RefOccurrence> refs;
  for (std::size_t i = 0; i < in.utt.words.size(); ++i) refs.push_back({in.utt.words[i], in.utt.word_spans[i]});
  in.subset = make_subset(entries, refs);
  in.freq.add(w, 1 + rng.below(50));
  return in;
}

double loss_at(const Instance& in, const LossConfig& cfg, std::span<const double> flat) {
  AdapterParams a = in.adapter;
  unflatten(a, flat);
  ForwardCache c = forward_full(in.utt, in.subset, in.backbone, a);
  return total_loss(c, in.utt, in.subset, in.freq, cfg, in.backbone, a).total;
}

double adapter_grad_error(const Instance& in, const LossConfig& cfg) {
  ForwardCache c = forward_full(in.utt, in.subset, in.backbone, in.adapter);
  LossBreakdown lb = total_loss(c, in.utt, in.subset, in.freq, cfg, in.backbone, in.adapter);
  const std::vector<double> params = flatten(in.adapter);
  return grad_check([&](std::span<const double> x) { return loss_at(in, cfg, x); }, lb.grads,
                    params, 1e-4);
}

}  // namespace

TEST_CASE("effective-number weight examples") {
  for (double a : {0.0, 0.5, 0.9, 0.9999}) CHECK(cb_weight(1, a) == 1.0);
  for (std::uint64_t n = 1; n <= 100; ++n) CHECK(cb_weight(n, 0.0) == 1.0);
  CHECK(cb_weight(2, 0.9) == doctest::Approx(0.1 / 0.19).epsilon(1e-12));
  CHECK(std::abs(cb_weight(5, 0.999999) - 0.2) < 1e-4);
  CHECK_THROWS_WITH(cb_weight(0, 0.5), "undefined weight for unseen word");
  CHECK_THROWS_WITH(cb_weight(3, 1.0), "alpha out of range [0,1)");
}

TEST_CASE("effective-number weights decrease with count and stay bounded (property)") {
  Rng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const double a = 0.001 + 0.998 * rng.uniform01();
    double prev = 2.0;
    for (std::uint64_t n = 1; std::pow(a, static_cast<double>(n)) > 1e-9; ++n) {
      const double w = cb_weight(n, a);
      CHECK(w < prev);
      CHECK(w > 1.0 - a);
      CHECK(w <= 1.0);
      prev = w;
    }
  }
}

TEST_CASE("balance loss examples") {
  Matrix uniform(5, 4, 0.25);
  std::vector<std::size_t> ref{2};
  std::vector<double> one{1.0};
  CHECK(balance_loss(uniform, ref, one).loss == doctest::Approx(std::log(4.0)).epsilon(1e-14));
  auto empty = balance_loss(uniform, {}, {});
  CHECK(empty.loss == 0.0);
  for (double g : empty.grad.flat()) CHECK(g == 0.0);
  Matrix peaked(3, 4, 0.0);
  for (std::size_t t = 0; t < 3; ++t) peaked(t, 2) = 1.0;
  CHECK(balance_loss(peaked, ref, one).loss == 0.0);
}

TEST_CASE("balance loss gradient matches differences and skips column 0") {
  Rng rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t t_len = 1 + rng.below(5), s = 2 + rng.below(3);
    Matrix att = testing::random_stochastic(t_len, s, rng);
    std::vector<std::size_t> refs;
    std::vector<double> w;
    for (std::size_t c = 1; c < s; ++c)
      if (rng.below(2) == 0) {
        refs.push_back(c);
        w.push_back(0.2 + rng.uniform01());
      }
    auto lg = balance_loss(att, refs, w);
    for (std::size_t t = 0; t < t_len; ++t) CHECK(lg.grad(t, 0) == 0.0);
    auto f = [&](std::span<const double> x) {
      Matrix m(t_len, s, std::vector<double>(x.begin(), x.end()));
      return balance_loss(m, refs, w).loss;
    };
    CHECK(grad_check(f, lg.grad.flat(), att.flat(), 1e-6) < 1e-6);
  }
}

TEST_CASE("ctc loss examples") {
  Rng rng(3);
  Matrix p = testing::random_stochastic(4, 3, rng);
  double expect = 0.0;
  for (std::size_t t = 0; t < 4; ++t) expect -= std::log(p(t, 2));
  CHECK(ctc_loss(p, {}, 2).loss == doctest::Approx(expect).epsilon(1e-13));

  Matrix half(2, 2, 0.5);
  std::vector<std::size_t> a{0};
  CHECK(ctc_loss(half, a, 1).loss == doctest::Approx(-std::log(0.75)).epsilon(1e-13));

  std::vector<std::size_t> repeat{0, 0};
  CHECK_THROWS_WITH(ctc_loss(half, repeat, 1), "infeasible alignment");
  CHECK_NOTHROW(ctc_loss(Matrix(3, 2, 0.5), repeat, 1));
}

TEST_CASE("ctc loss equals brute-force enumeration (property)") {
  Rng rng(2024);
  int checked = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t k = 2 + rng.below(3), t_len = 1 + rng.below(6);
    const std::size_t blank = rng.below(k);
    std::vector<std::size_t> labels;
    for (std::size_t i = 0; i < rng.below(4); ++i) {
      std::size_t s = rng.below(k - 1);
      labels.push_back(s >= blank ? s + 1 : s);
    }
    std::size_t need = labels.size();
    for (std::size_t i = 1; i < labels.size(); ++i) need += labels[i] == labels[i - 1];
    Matrix p = testing::random_stochastic(t_len, k, rng);
    if (need > t_len) {
      CHECK_THROWS(ctc_loss(p, labels, blank));
      continue;
    }
    const double oracle = testing::brute_force_ctc_log_prob(p, labels, blank);
    CHECK(std::abs(-ctc_loss(p, labels, blank).loss - oracle) < 1e-9);
    ++checked;
  }
  CHECK(checked > 100);
}

TEST_CASE("ctc gradient with respect to posteriors matches differences") {
  Rng rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t k = 3, t_len = 3 + rng.below(3);
    Matrix p = testing::random_stochastic(t_len, k, rng);
    std::vector<std::size_t> labels = testing::random_labels(1 + rng.below(2), k - 1, rng);
    if (labels.size() == 2 && labels[0] == labels[1] && t_len < 3) continue;
    auto lg = ctc_loss(p, labels, k - 1);
    auto f = [&](std::span<const double> x) {
      return ctc_loss(Matrix(t_len, k, std::vector<double>(x.begin(), x.end())), labels, k - 1).loss;
    };
    CHECK(grad_check(f, lg.grad.flat(), p.flat(), 1e-6) < 1e-6);
  }
}

TEST_CASE("loss recombination examples") {
  LossConfig c;
  c.lambda1 = 0.5;
  c.lambda2 = 0.5;
  CHECK(combine_losses(2.0, 1.0, 4.0, c) == doctest::Approx(2.25).epsilon(1e-15));
  c.lambda1 = 1.0;
  for (double l2 : {0.0, 0.3, 1.0}) {
    c.lambda2 = l2;
    CHECK(combine_losses(3.5, 9.0, 7.0, c) == 3.5);
  }
  c.lambda1 = 0.5;
  c.lambda2 = 1.0;
  CHECK(combine_losses(3.0, 5.0, 100.0, c) == doctest::Approx(4.0).epsilon(1e-15));
}

TEST_CASE("total loss is the exact recombination of its parts (property)") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Instance in = random_instance(seed);
    Rng rng(seed);
    LossConfig cfg;
    cfg.lambda1 = rng.uniform01();
    cfg.lambda2 = rng.uniform01();
    cfg.alpha = 0.99 * rng.uniform01();
    ForwardCache c = forward_full(in.utt, in.subset, in.backbone, in.adapter);
    LossBreakdown lb = total_loss(c, in.utt, in.subset, in.freq, cfg, in.backbone, in.adapter);
    const double expect = cfg.lambda1 * lb.aed +
                          (1 - cfg.lambda1) * (cfg.lambda2 * lb.ctc + (1 - cfg.lambda2) * lb.balance);
    CHECK(std::abs(lb.total - expect) < 1e-12);
    CHECK(lb.grads.size() == num_params(in.adapter));
  }
}

TEST_CASE("adapter gradients of every loss part match differences") {
  const LossConfig only_balance{0.0, 0.0, 0.9, false};
  const LossConfig only_ctc{0.0, 1.0, 0.9, false};
  const LossConfig only_aed{1.0, 0.0, 0.9, false};
  const LossConfig mixed{0.5, 0.5, 0.9, false};
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Instance in = random_instance(seed);
    CAPTURE(seed);
    CHECK(adapter_grad_error(in, only_balance) <= 1e-4);
    CHECK(adapter_grad_error(in, only_ctc) <= 1e-4);
    CHECK(adapter_grad_error(in, only_aed) <= 1e-4);
    CHECK(adapter_grad_error(in, mixed) <= 1e-4);
  }
}

TEST_CASE("backbone loss gradient matches differences") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    ModelDims d = testing::tiny_dims(4, 4);
    BackboneParams b = init_backbone(d, rng, 0.7);
    Utterance u = testing::make_utterance({testing::random_word(4, rng, 1, 2)}, 4, d.feature_dim, rng, 1, 1);
    BackboneParams g = zeros_like(b);
    backbone_loss(u, b, &g);
    auto f = [&](std::span<const double> x) {
      BackboneParams p = b;
      unflatten(p, x);
      return backbone_loss(u, p, nullptr);
    };
    CHECK(grad_check(f, flatten(g), flatten(b), 1e-4) <= 1e-4);
  }
}

TEST_CASE("loss configuration validation") {
  CHECK_THROWS(validate(LossConfig{1.5, 0.5, 0.9, false}));
  CHECK_THROWS(validate(LossConfig{0.5, -0.1, 0.9, false}));
  CHECK_THROWS_WITH(validate(LossConfig{0.5, 0.5, 1.5, false}), "alpha out of range [0,1)");
}

TEST_CASE("duplicate reference labels collapse only when deduplication is on") {
  Instance in = random_instance(4);
  std::vector<RefOccurrence> refs{{in.utt.words[0], in.utt.word_spans[0]},
                                  {in.utt.words[0], in.utt.word_spans[0]}};
  Rng rng(4);
  in.utt = testing::make_utterance({in.utt.words[0], in.utt.words[0]}, in.dims.charset,
                                   in.dims.feature_dim, rng, 1, 1);
  in.subset = make_subset(in.subset.entries, refs);
  ForwardCache c = forward_full(in.utt, in.subset, in.backbone, in.adapter);
  LossConfig keep{0.0, 1.0, 0.9, false}, dedupe{0.0, 1.0, 0.9, true};
  const double a = total_loss(c, in.utt, in.subset, in.freq, keep, in.backbone, in.adapter).ctc;
  const double b = total_loss(c, in.utt, in.subset, in.freq, dedupe, in.backbone, in.adapter).ctc;
  std::vector<std::size_t> two{in.subset.ref_sequence[0], in.subset.ref_sequence[0]};
  CHECK(a == doctest::Approx(ctc_loss(c.attention, two, 0).loss));
  CHECK(b == doctest::Approx(ctc_loss(c.attention, std::vector<std::size_t>{two[0]}, 0).loss));
}
