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

// Frozen toy recognizer (per-frame affine+tanh encoder, character CTC head)
// and the trainable contextual adapter: a character BiLSTM context encoder
// followed by single-head cross-attention whose value mixture is added to
// the acoustic states.
//
// Matrices multiply row vectors from the right, so a query is
// q_t = h_t * wq with wq stored D x D.

#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "cba/context.hpp"
#include "cba/corpus.hpp"
#include "cba/numerics.hpp"

namespace cba {

struct ModelDims {
  std::size_t charset = 26;     // output symbols exclude the blank
  std::size_t feature_dim = 16;
  std::size_t width = 32;       // D
  std::size_t embed = 16;       // E
  std::size_t hidden = 16;      // h per LSTM direction; 2h must equal D
  std::size_t blank() const noexcept { return charset; }
  std::size_t num_outputs() const noexcept { return charset + 1; }
};

void validate(const ModelDims& dims);

using NamedTensor = std::pair<std::string, Matrix*>;
using ConstNamedTensor = std::pair<std::string, const Matrix*>;

struct BackboneParams {
  Matrix enc_weight;  // F x D
  Matrix enc_bias;    // 1 x D
  Matrix head_weight; // D x (charset + 1), last column is the blank
  Matrix head_bias;   // 1 x (charset + 1)

  std::vector<NamedTensor> tensors();
  std::vector<ConstNamedTensor> tensors() const;
};

struct LstmWeights {
  Matrix wx;  // E x 4h, gate blocks ordered input, forget, cell, output
  Matrix wh;  // h x 4h
  Matrix b;   // 1 x 4h
};

struct AdapterParams {
  Matrix char_embed;  // charset x E
  LstmWeights fwd;
  LstmWeights bwd;
  Matrix proj;        // 2h x D
  Matrix proj_bias;   // 1 x D
  Matrix no_context;  // 1 x D
  Matrix wq, wk, wv;  // D x D

  std::vector<NamedTensor> tensors();
  std::vector<ConstNamedTensor> tensors() const;
};

// Generic helpers over any parameter struct exposing tensors().
template <class P>
std::size_t num_params(const P& p) {
  std::size_t n = 0;
  for (const auto& [name, m] : p.tensors()) n += m->size();
  return n;
}

template <class P>
std::vector<double> flatten(const P& p) {
  std::vector<double> out;
  out.reserve(num_params(p));
  for (const auto& [name, m] : p.tensors()) out.insert(out.end(), m->flat().begin(), m->flat().end());
  return out;
}

template <class P>
void unflatten(P& p, std::span<const double> flat) {
  if (flat.size() != num_params(p)) throw Error("unflatten: size mismatch");
  std::size_t off = 0;
  for (auto& [name, m] : p.tensors()) {
    auto dst = m->flat();
    std::copy(flat.begin() + static_cast<std::ptrdiff_t>(off),
              flat.begin() + static_cast<std::ptrdiff_t>(off + dst.size()), dst.begin());
    off += dst.size();
  }
}

template <class P>
P zeros_like(const P& p) {
  P out = p;
  for (auto& [name, m] : out.tensors()) m->fill(0.0);
  return out;
}

BackboneParams init_backbone(const ModelDims& dims, Rng& rng, double sigma = 0.1);
// Gaussian init with the forget-gate bias set to 1.
AdapterParams init_adapter(const ModelDims& dims, Rng& rng, double sigma = 0.1);

ModelDims dims_of(const BackboneParams& b, const AdapterParams& a);

// Per-step LSTM record kept for backpropagation.
struct LstmStep {
  std::size_t ch = 0;
  std::vector<double> h_prev, c_prev, i, f, g, o, c, tanh_c;
};

struct LstmTrace {
  std::vector<LstmStep> steps;
  std::vector<double> h_last;
};

struct ContextEncoding {
  Matrix h_ctx;                 // S_hat x D
  Matrix z;                     // S_hat x 2h, row 0 unused
  std::vector<LstmTrace> fwd;   // per entry; empty for row 0
  std::vector<LstmTrace> bwd;
};

struct ForwardCache {
  Matrix h_aco;      // T x D
  ContextEncoding ctx;
  Matrix q, k, v;    // T x D, S x D, S x D
  Matrix attention;  // T x S
  Matrix bias;       // T x D
  Matrix h_fused;    // T x D
  Matrix logits;     // T x (charset + 1)
};

Matrix encode_acoustic(const Matrix& frames, const BackboneParams& backbone);
Matrix head_logits(const Matrix& states, const BackboneParams& backbone);
// Logits of the adapter-free recognizer.
Matrix backbone_logits(const Matrix& frames, const BackboneParams& backbone);

ContextEncoding encode_context(const ContextSubset& subset, const AdapterParams& adapter);
// Encodes arbitrary entries; entries[0] must be the no-context sentinel.
ContextEncoding encode_entries(const std::vector<std::string>& entries,
                               const AdapterParams& adapter);

struct Attended {
  Matrix q, k, v, attention, bias, h_fused;
};
Attended cross_attend(const Matrix& h_aco, const Matrix& h_ctx, const AdapterParams& adapter);

ForwardCache forward_full(const Utterance& utt, const ContextSubset& subset,
                          const BackboneParams& backbone, const AdapterParams& adapter);
// Forward with an already-encoded context (shared across utterances).
ForwardCache forward_encoded(const Matrix& frames, ContextEncoding ctx,
                             const BackboneParams& backbone, const AdapterParams& adapter);

// Accumulates adapter gradients given loss gradients with respect to the
// output logits and (directly) the attention matrix.
void backward_adapter(const ForwardCache& cache, const Matrix& d_logits,
                      const Matrix& d_attention, const BackboneParams& backbone,
                      const AdapterParams& adapter, AdapterParams& grad);

// Gradients of the adapter-free recognizer given d(loss)/d(logits).
void backward_backbone(const Matrix& frames, const Matrix& h_aco, const Matrix& d_logits,
                       const BackboneParams& backbone, BackboneParams& grad);

// Best path: per-frame argmax (lowest index on ties), merge repeats, drop blank.
std::vector<std::size_t> greedy_decode(const Matrix& logits);
// Best path split into words wherever a run of at least `min_gap` blank
// frames separates emitted symbols.
std::vector<std::vector<std::size_t>> greedy_decode_words(const Matrix& logits,
                                                          std::size_t min_gap);

}  // namespace cba
