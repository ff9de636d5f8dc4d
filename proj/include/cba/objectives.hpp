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
#include <span>
#include <vector>

#include "cba/context.hpp"
#include "cba/corpus.hpp"
#include "cba/model.hpp"
#include "cba/numerics.hpp"

namespace cba {

struct LossConfig {
  double lambda1 = 0.5;
  double lambda2 = 0.5;
  double alpha = 0.9;  // strictly below 1
  bool dedupe_ctc_labels = false;
};

void validate(const LossConfig& config);

struct LossBreakdown {
  double aed = 0.0;
  double ctc = 0.0;
  double balance = 0.0;
  double total = 0.0;
  std::vector<double> grads;  // flattened, aligned with AdapterParams::tensors()
};

// Effective-number weight (1 - alpha) / (1 - alpha^n).
double cb_weight(std::uint64_t n, double alpha);

// Affine recombination of the three parts.
double combine_losses(double aed, double ctc, double balance, const LossConfig& config);

struct LossAndGrad {
  double loss = 0.0;
  Matrix grad;  // same shape as the input probabilities
};

// -sum over reference columns of w_s * ln(mean_t attention[t, s]).
// `weights` is aligned with `ref_indices`.
LossAndGrad balance_loss(const Matrix& attention, std::span<const std::size_t> ref_indices,
                         std::span<const double> weights);

// CTC negative log-likelihood over row-stochastic posteriors (T x K), with
// the gradient with respect to the posteriors.
LossAndGrad ctc_loss(const Matrix& posteriors, std::span<const std::size_t> labels,
                     std::size_t blank);

// Chain rule through a row softmax: given p = softmax(z) and dL/dp,
// returns dL/dz.
Matrix softmax_backward(const Matrix& probs, const Matrix& d_probs);

// Full objective for one utterance. Gradients flow to adapter parameters
// only. `char_labels` are the utterance's characters.
LossBreakdown total_loss(const ForwardCache& cache, const Utterance& utt,
                         const ContextSubset& subset, const FreqTable& freq,
                         const LossConfig& config, const BackboneParams& backbone,
                         const AdapterParams& adapter);

// Character CTC loss of the adapter-free recognizer and its gradient with
// respect to the backbone, for stage-0 pretraining.
double backbone_loss(const Utterance& utt, const BackboneParams& backbone,
                     BackboneParams* grad);

}  // namespace cba
