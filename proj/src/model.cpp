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

#include "cba/model.hpp"

#include <algorithm>
#include <cmath>

namespace cba {

void validate(const ModelDims& d) {
  if (d.charset < 2 || d.charset > kMaxCharset)
    throw Error("model charset must be in [2, 52]", ErrorKind::kConfig);
  if (d.feature_dim == 0 || d.width == 0 || d.embed == 0 || d.hidden == 0)
    throw Error("model dimensions must be positive", ErrorKind::kConfig);
  if (2 * d.hidden != d.width)
    throw Error("model width must equal twice the LSTM hidden size", ErrorKind::kConfig);
}

std::vector<NamedTensor> BackboneParams::tensors() {
  return {{"enc_weight", &enc_weight},
          {"enc_bias", &enc_bias},
          {"head_weight", &head_weight},
          {"head_bias", &head_bias}};
}

std::vector<ConstNamedTensor> BackboneParams::tensors() const {
  return {{"enc_weight", &enc_weight},
          {"enc_bias", &enc_bias},
          {"head_weight", &head_weight},
          {"head_bias", &head_bias}};
}

std::vector<NamedTensor> AdapterParams::tensors() {
  return {{"char_embed", &char_embed}, {"lstm_fwd_wx", &fwd.wx}, {"lstm_fwd_wh", &fwd.wh},
          {"lstm_fwd_b", &fwd.b},      {"lstm_bwd_wx", &bwd.wx}, {"lstm_bwd_wh", &bwd.wh},
          {"lstm_bwd_b", &bwd.b},      {"proj", &proj},          {"proj_bias", &proj_bias},
          {"no_context", &no_context}, {"wq", &wq},              {"wk", &wk},
          {"wv", &wv}};
}

std::vector<ConstNamedTensor> AdapterParams::tensors() const {
  return {{"char_embed", &char_embed}, {"lstm_fwd_wx", &fwd.wx}, {"lstm_fwd_wh", &fwd.wh},
          {"lstm_fwd_b", &fwd.b},      {"lstm_bwd_wx", &bwd.wx}, {"lstm_bwd_wh", &bwd.wh},
          {"lstm_bwd_b", &bwd.b},      {"proj", &proj},          {"proj_bias", &proj_bias},
          {"no_context", &no_context}, {"wq", &wq},              {"wk", &wk},
          {"wv", &wv}};
}

namespace {

Matrix gaussian(std::size_t r, std::size_t c, double sigma, Rng& rng) {
  Matrix m(r, c);
  for (double& v : m.flat()) v = sigma * rng.gaussian();
  return m;
}

LstmWeights init_lstm(const ModelDims& d, Rng& rng, double sigma) {
  LstmWeights w{gaussian(d.embed, 4 * d.hidden, sigma, rng),
                gaussian(d.hidden, 4 * d.hidden, sigma, rng),
                gaussian(1, 4 * d.hidden, sigma, rng)};
  for (std::size_t j = d.hidden; j < 2 * d.hidden; ++j) w.b(0, j) = 1.0;
  return w;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

LstmTrace run_lstm(const std::vector<std::size_t>& chars, bool reverse, const LstmWeights& w,
                   const Matrix& embed) {
  const std::size_t h = w.wh.rows();
  LstmTrace trace;
  std::vector<double> hs(h, 0.0), cs(h, 0.0), a(4 * h);
  trace.steps.reserve(chars.size());
  for (std::size_t n = 0; n < chars.size(); ++n) {
    const std::size_t ch = chars[reverse ? chars.size() - 1 - n : n];
    LstmStep st;
    st.ch = ch;
    st.h_prev = hs;
    st.c_prev = cs;
    for (std::size_t j = 0; j < 4 * h; ++j) a[j] = w.b(0, j);
    const auto x = embed.row(ch);
    for (std::size_t e = 0; e < x.size(); ++e) {
      const double xv = x[e];
      const double* wr = w.wx.row(e).data();
      for (std::size_t j = 0; j < 4 * h; ++j) a[j] += xv * wr[j];
    }
    for (std::size_t k = 0; k < h; ++k) {
      const double hv = hs[k];
      if (hv == 0.0) continue;
      const double* wr = w.wh.row(k).data();
      for (std::size_t j = 0; j < 4 * h; ++j) a[j] += hv * wr[j];
    }
    st.i.resize(h);
    st.f.resize(h);
    st.g.resize(h);
    st.o.resize(h);
    st.c.resize(h);
    st.tanh_c.resize(h);
    for (std::size_t k = 0; k < h; ++k) {
      st.i[k] = sigmoid(a[k]);
      st.f[k] = sigmoid(a[h + k]);
      st.g[k] = std::tanh(a[2 * h + k]);
      st.o[k] = sigmoid(a[3 * h + k]);
      st.c[k] = st.f[k] * cs[k] + st.i[k] * st.g[k];
      st.tanh_c[k] = std::tanh(st.c[k]);
      hs[k] = st.o[k] * st.tanh_c[k];
    }
    cs = st.c;
    trace.steps.push_back(std::move(st));
  }
  trace.h_last = hs;
  return trace;
}

// BPTT from d(h_last); accumulates into the direction's weights and the
// shared embedding gradient.
void backprop_lstm(const LstmTrace& trace, std::span<const double> dh_last,
                   const LstmWeights& w, const Matrix& embed, LstmWeights& gw,
                   Matrix& g_embed) {
  const std::size_t h = w.wh.rows();
  const std::size_t e_dim = embed.cols();
  std::vector<double> dh(dh_last.begin(), dh_last.end()), dc(h, 0.0), da(4 * h);
  for (std::size_t n = trace.steps.size(); n-- > 0;) {
    const LstmStep& st = trace.steps[n];
    for (std::size_t k = 0; k < h; ++k) {
      const double d_o = dh[k] * st.tanh_c[k];
      const double dck = dc[k] + dh[k] * st.o[k] * (1.0 - st.tanh_c[k] * st.tanh_c[k]);
      const double d_i = dck * st.g[k];
      const double d_g = dck * st.i[k];
      const double d_f = dck * st.c_prev[k];
      dc[k] = dck * st.f[k];
      da[k] = d_i * st.i[k] * (1.0 - st.i[k]);
      da[h + k] = d_f * st.f[k] * (1.0 - st.f[k]);
      da[2 * h + k] = d_g * (1.0 - st.g[k] * st.g[k]);
      da[3 * h + k] = d_o * st.o[k] * (1.0 - st.o[k]);
    }
    for (std::size_t j = 0; j < 4 * h; ++j) gw.b(0, j) += da[j];
    const auto x = embed.row(st.ch);
    auto gx = g_embed.row(st.ch);
    for (std::size_t e = 0; e < e_dim; ++e) {
      double* gr = gw.wx.row(e).data();
      const double* wr = w.wx.row(e).data();
      double acc = 0.0;
      for (std::size_t j = 0; j < 4 * h; ++j) {
        gr[j] += x[e] * da[j];
        acc += wr[j] * da[j];
      }
      gx[e] += acc;
    }
    for (std::size_t k = 0; k < h; ++k) {
      double* gr = gw.wh.row(k).data();
      const double* wr = w.wh.row(k).data();
      const double hp = st.h_prev[k];
      double acc = 0.0;
      for (std::size_t j = 0; j < 4 * h; ++j) {
        gr[j] += hp * da[j];
        acc += wr[j] * da[j];
      }
      dh[k] = acc;
    }
  }
}

}  // namespace

BackboneParams init_backbone(const ModelDims& d, Rng& rng, double sigma) {
  validate(d);
  BackboneParams b;
  b.enc_weight = gaussian(d.feature_dim, d.width, sigma, rng);
  b.enc_bias = gaussian(1, d.width, sigma, rng);
  b.head_weight = gaussian(d.width, d.num_outputs(), sigma, rng);
  b.head_bias = gaussian(1, d.num_outputs(), sigma, rng);
  return b;
}

AdapterParams init_adapter(const ModelDims& d, Rng& rng, double sigma) {
  validate(d);
  AdapterParams a;
  a.char_embed = gaussian(d.charset, d.embed, sigma, rng);
  a.fwd = init_lstm(d, rng, sigma);
  a.bwd = init_lstm(d, rng, sigma);
  a.proj = gaussian(2 * d.hidden, d.width, sigma, rng);
  a.proj_bias = gaussian(1, d.width, sigma, rng);
  a.no_context = gaussian(1, d.width, sigma, rng);
  a.wq = gaussian(d.width, d.width, sigma, rng);
  a.wk = gaussian(d.width, d.width, sigma, rng);
  a.wv = gaussian(d.width, d.width, sigma, rng);
  return a;
}

ModelDims dims_of(const BackboneParams& b, const AdapterParams& a) {
  ModelDims d;
  d.feature_dim = b.enc_weight.rows();
  d.width = b.enc_weight.cols();
  d.charset = b.head_weight.cols() - 1;
  d.embed = a.char_embed.cols();
  d.hidden = a.fwd.wh.rows();
  return d;
}

Matrix encode_acoustic(const Matrix& frames, const BackboneParams& backbone) {
  if (frames.cols() != backbone.enc_weight.rows()) {
    throw Error("feature dimension " + std::to_string(frames.cols()) +
                " does not match encoder input " + std::to_string(backbone.enc_weight.rows()));
  }
  Matrix h = matmul(frames, backbone.enc_weight);
  add_row_bias(h, backbone.enc_bias);
  for (double& v : h.flat()) v = std::tanh(v);
  return h;
}

Matrix head_logits(const Matrix& states, const BackboneParams& backbone) {
  Matrix logits = matmul(states, backbone.head_weight);
  add_row_bias(logits, backbone.head_bias);
  return logits;
}

Matrix backbone_logits(const Matrix& frames, const BackboneParams& backbone) {
  return head_logits(encode_acoustic(frames, backbone), backbone);
}

ContextEncoding encode_entries(const std::vector<std::string>& entries,
                               const AdapterParams& adapter) {
  if (entries.empty() || entries.front() != kNoContext) {
    throw Error("context entries must start with the no-context sentinel");
  }
  const std::size_t d = adapter.proj.cols();
  const std::size_t h = adapter.fwd.wh.rows();
  const std::size_t charset = adapter.char_embed.rows();
  ContextEncoding enc;
  enc.h_ctx = Matrix(entries.size(), d);
  enc.z = Matrix(entries.size(), 2 * h);
  enc.fwd.resize(entries.size());
  enc.bwd.resize(entries.size());
  std::copy(adapter.no_context.flat().begin(), adapter.no_context.flat().end(),
            enc.h_ctx.row(0).begin());
  for (std::size_t s = 1; s < entries.size(); ++s) {
    const auto chars = word_to_indices(entries[s], charset);
    enc.fwd[s] = run_lstm(chars, false, adapter.fwd, adapter.char_embed);
    enc.bwd[s] = run_lstm(chars, true, adapter.bwd, adapter.char_embed);
    auto z = enc.z.row(s);
    std::copy(enc.fwd[s].h_last.begin(), enc.fwd[s].h_last.end(), z.begin());
    std::copy(enc.bwd[s].h_last.begin(), enc.bwd[s].h_last.end(), z.begin() + static_cast<std::ptrdiff_t>(h));
    auto out = enc.h_ctx.row(s);
    for (std::size_t j = 0; j < d; ++j) out[j] = adapter.proj_bias(0, j);
    for (std::size_t k = 0; k < 2 * h; ++k) {
      const double zv = z[k];
      const double* pr = adapter.proj.row(k).data();
      for (std::size_t j = 0; j < d; ++j) out[j] += zv * pr[j];
    }
  }
  return enc;
}

ContextEncoding encode_context(const ContextSubset& subset, const AdapterParams& adapter) {
  return encode_entries(subset.entries, adapter);
}

Attended cross_attend(const Matrix& h_aco, const Matrix& h_ctx, const AdapterParams& adapter) {
  if (h_ctx.rows() == 0) throw Error("cross_attend: empty context");
  const std::size_t d = adapter.wq.rows();
  if (h_aco.cols() != d || h_ctx.cols() != d) throw Error("cross_attend: width mismatch");
  Attended out;
  out.q = matmul(h_aco, adapter.wq);
  out.k = matmul(h_ctx, adapter.wk);
  out.v = matmul(h_ctx, adapter.wv);
  Matrix scores = matmul_nt(out.q, out.k);
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  for (double& s : scores.flat()) s *= scale;
  out.attention = softmax_rows(scores);
  out.bias = matmul(out.attention, out.v);
  out.h_fused = h_aco;
  auto dst = out.h_fused.flat();
  auto src = out.bias.flat();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  return out;
}

ForwardCache forward_encoded(const Matrix& frames, ContextEncoding ctx,
                             const BackboneParams& backbone, const AdapterParams& adapter) {
  ForwardCache cache;
  cache.h_aco = encode_acoustic(frames, backbone);
  cache.ctx = std::move(ctx);
  Attended att = cross_attend(cache.h_aco, cache.ctx.h_ctx, adapter);
  cache.q = std::move(att.q);
  cache.k = std::move(att.k);
  cache.v = std::move(att.v);
  cache.attention = std::move(att.attention);
  cache.bias = std::move(att.bias);
  cache.h_fused = std::move(att.h_fused);
  cache.logits = head_logits(cache.h_fused, backbone);
  return cache;
}

ForwardCache forward_full(const Utterance& utt, const ContextSubset& subset,
                          const BackboneParams& backbone, const AdapterParams& adapter) {
  return forward_encoded(utt.frames, encode_context(subset, adapter), backbone, adapter);
}

void backward_adapter(const ForwardCache& c, const Matrix& d_logits, const Matrix& d_attention,
                      const BackboneParams& backbone, const AdapterParams& adapter,
                      AdapterParams& grad) {
  const std::size_t t_len = c.attention.rows();
  const std::size_t s_len = c.attention.cols();
  const std::size_t d = adapter.wq.rows();
  const std::size_t h = adapter.fwd.wh.rows();

  Matrix d_fused = matmul_nt(d_logits, backbone.head_weight);  // T x D
  Matrix d_att = matmul_nt(d_fused, c.v);                      // T x S
  if (!d_attention.empty()) {
    auto a = d_att.flat();
    auto b = d_attention.flat();
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  }
  Matrix d_v = matmul_tn(c.attention, d_fused);  // S x D

  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  Matrix d_scores(t_len, s_len);
  for (std::size_t t = 0; t < t_len; ++t) {
    const auto p = c.attention.row(t);
    const auto g = d_att.row(t);
    double dot = 0.0;
    for (std::size_t s = 0; s < s_len; ++s) dot += p[s] * g[s];
    for (std::size_t s = 0; s < s_len; ++s) d_scores(t, s) = p[s] * (g[s] - dot) * scale;
  }
  Matrix d_q = matmul(d_scores, c.k);     // T x D
  Matrix d_k = matmul_tn(d_scores, c.q);  // S x D

  accumulate_tn(grad.wq, c.h_aco, d_q);
  accumulate_tn(grad.wk, c.ctx.h_ctx, d_k);
  accumulate_tn(grad.wv, c.ctx.h_ctx, d_v);

  Matrix d_ctx = matmul_nt(d_k, adapter.wk);
  {
    Matrix tmp = matmul_nt(d_v, adapter.wv);
    auto a = d_ctx.flat();
    auto b = tmp.flat();
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  }

  for (std::size_t j = 0; j < d; ++j) grad.no_context(0, j) += d_ctx(0, j);
  std::vector<double> dz(2 * h);
  for (std::size_t s = 1; s < s_len; ++s) {
    const auto g = d_ctx.row(s);
    const auto z = c.ctx.z.row(s);
    for (std::size_t j = 0; j < d; ++j) grad.proj_bias(0, j) += g[j];
    for (std::size_t k = 0; k < 2 * h; ++k) {
      double* gp = grad.proj.row(k).data();
      const double* pr = adapter.proj.row(k).data();
      double acc = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        gp[j] += z[k] * g[j];
        acc += pr[j] * g[j];
      }
      dz[k] = acc;
    }
    backprop_lstm(c.ctx.fwd[s], std::span<const double>(dz.data(), h), adapter.fwd,
                  adapter.char_embed, grad.fwd, grad.char_embed);
    backprop_lstm(c.ctx.bwd[s], std::span<const double>(dz.data() + h, h), adapter.bwd,
                  adapter.char_embed, grad.bwd, grad.char_embed);
  }
}

void backward_backbone(const Matrix& frames, const Matrix& h_aco, const Matrix& d_logits,
                       const BackboneParams& backbone, BackboneParams& grad) {
  accumulate_tn(grad.head_weight, h_aco, d_logits);
  for (std::size_t t = 0; t < d_logits.rows(); ++t) {
    for (std::size_t k = 0; k < d_logits.cols(); ++k) grad.head_bias(0, k) += d_logits(t, k);
  }
  Matrix d_pre = matmul_nt(d_logits, backbone.head_weight);
  auto dp = d_pre.flat();
  auto hv = h_aco.flat();
  for (std::size_t i = 0; i < dp.size(); ++i) dp[i] *= 1.0 - hv[i] * hv[i];
  accumulate_tn(grad.enc_weight, frames, d_pre);
  for (std::size_t t = 0; t < d_pre.rows(); ++t) {
    for (std::size_t j = 0; j < d_pre.cols(); ++j) grad.enc_bias(0, j) += d_pre(t, j);
  }
}

namespace {

std::size_t argmax_row(std::span<const double> row) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < row.size(); ++k) {
    if (row[k] > row[best]) best = k;
  }
  return best;
}

}  // namespace

std::vector<std::size_t> greedy_decode(const Matrix& logits) {
  std::vector<std::size_t> out;
  if (logits.cols() == 0) return out;
  const std::size_t blank = logits.cols() - 1;
  std::size_t prev = blank;
  for (std::size_t t = 0; t < logits.rows(); ++t) {
    const std::size_t k = argmax_row(logits.row(t));
    if (k != blank && k != prev) out.push_back(k);
    prev = k;
  }
  return out;
}

std::vector<std::vector<std::size_t>> greedy_decode_words(const Matrix& logits,
                                                          std::size_t min_gap) {
  std::vector<std::vector<std::size_t>> words;
  if (logits.cols() == 0) return words;
  const std::size_t blank = logits.cols() - 1;
  std::size_t prev = blank;
  std::size_t blank_run = 0;
  std::vector<std::size_t> current;
  for (std::size_t t = 0; t < logits.rows(); ++t) {
    const std::size_t k = argmax_row(logits.row(t));
    if (k == blank) {
      ++blank_run;
    } else {
      if (!current.empty() && blank_run >= std::max<std::size_t>(min_gap, 1)) {
        words.push_back(std::move(current));
        current.clear();
      }
      if (k != prev) current.push_back(k);
      blank_run = 0;
    }
    prev = k;
  }
  if (!current.empty()) words.push_back(std::move(current));
  return words;
}

}  // namespace cba
