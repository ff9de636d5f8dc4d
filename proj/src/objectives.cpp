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

#include "cba/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace cba {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

void validate(const LossConfig& c) {
  if (!(c.lambda1 >= 0.0 && c.lambda1 <= 1.0))
    throw Error("lambda1 out of range [0,1]", ErrorKind::kConfig);
  if (!(c.lambda2 >= 0.0 && c.lambda2 <= 1.0))
    throw Error("lambda2 out of range [0,1]", ErrorKind::kConfig);
  if (!(c.alpha >= 0.0 && c.alpha < 1.0))
    throw Error("alpha out of range [0,1)", ErrorKind::kConfig);
}

double cb_weight(std::uint64_t n, double alpha) {
  if (n == 0) throw Error("undefined weight for unseen word", ErrorKind::kArgument);
  if (!(alpha >= 0.0 && alpha < 1.0)) throw Error("alpha out of range [0,1)", ErrorKind::kArgument);
  return (1.0 - alpha) / (1.0 - std::pow(alpha, static_cast<double>(n)));
}

double combine_losses(double aed, double ctc, double balance, const LossConfig& c) {
  return c.lambda1 * aed + (1.0 - c.lambda1) * (c.lambda2 * ctc + (1.0 - c.lambda2) * balance);
}

LossAndGrad balance_loss(const Matrix& attention, std::span<const std::size_t> ref_indices,
                         std::span<const double> weights) {
  if (weights.size() != ref_indices.size()) {
    throw Error("balance_loss: one weight per reference column required");
  }
  LossAndGrad out{0.0, Matrix(attention.rows(), attention.cols())};
  if (ref_indices.empty()) return out;
  const std::size_t t_len = attention.rows();
  if (t_len == 0) throw Error("balance_loss: no frames");
  const double inv_t = 1.0 / static_cast<double>(t_len);
  for (std::size_t r = 0; r < ref_indices.size(); ++r) {
    const std::size_t s = ref_indices[r];
    if (s == 0 || s >= attention.cols()) {
      throw Error("balance_loss: reference column out of range");
    }
    double prior = 0.0;
    for (std::size_t t = 0; t < t_len; ++t) prior += attention(t, s);
    prior *= inv_t;
    if (!(prior > 0.0)) throw Error("vanished prior");
    out.loss -= weights[r] * std::log(prior);
    const double g = -weights[r] * inv_t / prior;
    for (std::size_t t = 0; t < t_len; ++t) out.grad(t, s) += g;
  }
  return out;
}

LossAndGrad ctc_loss(const Matrix& posteriors, std::span<const std::size_t> labels,
                     std::size_t blank) {
  const std::size_t t_len = posteriors.rows();
  const std::size_t k_len = posteriors.cols();
  if (blank >= k_len) throw Error("ctc_loss: blank index out of range");
  std::size_t required = labels.size();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == blank || labels[i] >= k_len) {
      throw Error("ctc_loss: label out of range or equal to blank");
    }
    if (i > 0 && labels[i] == labels[i - 1]) ++required;
  }
  if (t_len < required) throw Error("infeasible alignment");

  LossAndGrad out{0.0, Matrix(t_len, k_len)};
  if (t_len == 0) return out;

  const std::size_t s_len = 2 * labels.size() + 1;
  std::vector<std::size_t> ext(s_len, blank);
  for (std::size_t i = 0; i < labels.size(); ++i) ext[2 * i + 1] = labels[i];
  auto can_skip = [&](std::size_t s) {  // transition s-2 -> s allowed
    return s >= 2 && ext[s] != blank && ext[s] != ext[s - 2];
  };

  Matrix logy(t_len, k_len);
  for (std::size_t i = 0; i < posteriors.size(); ++i) {
    const double p = posteriors.flat()[i];
    if (!(p >= 0.0)) throw Error("ctc_loss: negative or non-finite posterior");
    logy.flat()[i] = std::log(p);
  }

  // alpha_in excludes the emission at t; alpha includes it.
  Matrix alpha_in(t_len, s_len, kNegInf), alpha(t_len, s_len, kNegInf);
  alpha_in(0, 0) = 0.0;
  if (s_len > 1) alpha_in(0, 1) = 0.0;
  for (std::size_t t = 0; t < t_len; ++t) {
    if (t > 0) {
      for (std::size_t s = 0; s < s_len; ++s) {
        double v = alpha(t - 1, s);
        if (s >= 1) v = log_add(v, alpha(t - 1, s - 1));
        if (can_skip(s)) v = log_add(v, alpha(t - 1, s - 2));
        alpha_in(t, s) = v;
      }
    }
    for (std::size_t s = 0; s < s_len; ++s) alpha(t, s) = alpha_in(t, s) + logy(t, ext[s]);
  }
  double log_p = alpha(t_len - 1, s_len - 1);
  if (s_len > 1) log_p = log_add(log_p, alpha(t_len - 1, s_len - 2));
  if (!std::isfinite(log_p)) throw Error("infeasible alignment");
  out.loss = -log_p;

  // beta excludes the emission at t.
  Matrix beta(t_len, s_len, kNegInf);
  beta(t_len - 1, s_len - 1) = 0.0;
  if (s_len > 1) beta(t_len - 1, s_len - 2) = 0.0;
  for (std::size_t t = t_len - 1; t-- > 0;) {
    for (std::size_t s = 0; s < s_len; ++s) {
      double v = beta(t + 1, s) + logy(t + 1, ext[s]);
      if (s + 1 < s_len) v = log_add(v, beta(t + 1, s + 1) + logy(t + 1, ext[s + 1]));
      if (s + 2 < s_len && can_skip(s + 2)) {
        v = log_add(v, beta(t + 1, s + 2) + logy(t + 1, ext[s + 2]));
      }
      beta(t, s) = v;
    }
  }

  for (std::size_t t = 0; t < t_len; ++t) {
    for (std::size_t s = 0; s < s_len; ++s) {
      const double lv = alpha_in(t, s) + beta(t, s) - log_p;
      if (lv == kNegInf) continue;
      out.grad(t, ext[s]) -= std::exp(lv);
    }
  }
  return out;
}

Matrix softmax_backward(const Matrix& probs, const Matrix& d_probs) {
  Matrix out(probs.rows(), probs.cols());
  for (std::size_t t = 0; t < probs.rows(); ++t) {
    const auto p = probs.row(t);
    const auto g = d_probs.row(t);
    double dot = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) dot += p[k] * g[k];
    auto o = out.row(t);
    for (std::size_t k = 0; k < p.size(); ++k) o[k] = p[k] * (g[k] - dot);
  }
  return out;
}

LossBreakdown total_loss(const ForwardCache& cache, const Utterance& utt,
                         const ContextSubset& subset, const FreqTable& freq,
                         const LossConfig& config, const BackboneParams& backbone,
                         const AdapterParams& adapter) {
  validate(config);
  LossBreakdown out;
  const std::size_t blank = cache.logits.cols() - 1;

  const Matrix probs = softmax_rows(cache.logits);
  LossAndGrad aed = ctc_loss(probs, utt.chars, blank);
  out.aed = aed.loss;

  std::vector<std::size_t> labels;
  if (config.dedupe_ctc_labels) {
    std::set<std::size_t> seen;
    for (std::size_t idx : subset.ref_sequence)
      if (seen.insert(idx).second) labels.push_back(idx);
  } else {
    labels = subset.ref_sequence;
  }
  LossAndGrad guide = ctc_loss(cache.attention, labels, 0);
  out.ctc = guide.loss;

  std::vector<double> weights;
  weights.reserve(subset.ref_indices.size());
  for (std::size_t idx : subset.ref_indices) {
    const std::uint64_t n = freq.count(subset.entries[idx]);
    if (n == 0) {
      throw Error("reference word '" + subset.entries[idx] + "' has no training occurrences");
    }
    weights.push_back(cb_weight(n, config.alpha));
  }
  LossAndGrad bal = balance_loss(cache.attention, subset.ref_indices, weights);
  out.balance = bal.loss;
  out.total = combine_losses(out.aed, out.ctc, out.balance, config);
  if (!std::isfinite(out.total)) throw Error("non-finite loss");

  const double w_ctc = (1.0 - config.lambda1) * config.lambda2;
  const double w_bal = (1.0 - config.lambda1) * (1.0 - config.lambda2);
  Matrix d_att(cache.attention.rows(), cache.attention.cols());
  {
    auto d = d_att.flat();
    auto gc = guide.grad.flat();
    auto gb = bal.grad.flat();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = w_ctc * gc[i] + w_bal * gb[i];
  }
  Matrix d_logits = softmax_backward(probs, aed.grad);
  for (double& v : d_logits.flat()) v *= config.lambda1;

  AdapterParams grad = zeros_like(adapter);
  backward_adapter(cache, d_logits, d_att, backbone, adapter, grad);
  out.grads = flatten(grad);
  return out;
}

double backbone_loss(const Utterance& utt, const BackboneParams& backbone,
                     BackboneParams* grad) {
  const Matrix h = encode_acoustic(utt.frames, backbone);
  const Matrix probs = softmax_rows(head_logits(h, backbone));
  LossAndGrad aed = ctc_loss(probs, utt.chars, probs.cols() - 1);
  if (grad != nullptr) {
    backward_backbone(utt.frames, h, softmax_backward(probs, aed.grad), backbone, *grad);
  }
  return aed.loss;
}

}  // namespace cba
