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

#include "cba/trainer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <sstream>

#include "cba/eval.hpp"
#include "cba/text_io.hpp"

namespace cba {

namespace {

constexpr char kMagic[4] = {'C', 'B', 'A', '1'};

// Stream tags for derive_seed.
constexpr std::uint64_t kTagBackboneInit = 0x10;
constexpr std::uint64_t kTagPretrainOrder = 0x11;
constexpr std::uint64_t kTagAdapterInit = 0x20;
constexpr std::uint64_t kTagAdapterOrder = 0x21;
constexpr std::uint64_t kTagSubsets = 0x22;

void shuffle_in_place(std::vector<std::size_t>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = rng.below(i);
    std::swap(v[i - 1], v[j]);
  }
}

void add_into(std::vector<double>& acc, std::span<const double> g) {
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[i];
}

}  // namespace

void validate(const TrainConfig& c) {
  validate(c.loss);
  if (c.gamma < 1) throw Error("gamma must be at least 1", ErrorKind::kConfig);
  if (c.s_hat < 2) throw Error("s_hat must be at least 2", ErrorKind::kConfig);
  if (!(c.learning_rate > 0.0)) throw Error("learning_rate must be positive", ErrorKind::kConfig);
  if (!(c.pretrain_learning_rate > 0.0))
    throw Error("pretrain_learning_rate must be positive", ErrorKind::kConfig);
  if (c.batch_size == 0) throw Error("batch_size must be positive", ErrorKind::kConfig);
  if (!(c.init_sigma > 0.0)) throw Error("init_sigma must be positive", ErrorKind::kConfig);
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& st,
               double lr) {
  if (grads.size() != params.size()) throw Error("adam_step: gradient size mismatch");
  if (st.m.empty()) {
    st.m.assign(params.size(), 0.0);
    st.v.assign(params.size(), 0.0);
  }
  if (st.m.size() != params.size()) throw Error("adam_step: optimizer state size mismatch");
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) {
      throw Error("non-finite gradient at parameter " + std::to_string(i) + " (step " +
                  std::to_string(st.step + 1) + ")");
    }
  }
  ++st.step;
  const double c1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(st.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    st.m[i] = kAdamBeta1 * st.m[i] + (1.0 - kAdamBeta1) * grads[i];
    st.v[i] = kAdamBeta2 * st.v[i] + (1.0 - kAdamBeta2) * grads[i] * grads[i];
    const double m_hat = st.m[i] / c1;
    const double v_hat = st.v[i] / c2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + kAdamEps);
  }
}

PretrainResult pretrain_backbone(const std::vector<Utterance>& train, const ModelDims& dims,
                                 const TrainConfig& config, const EpochCallback& on_epoch) {
  validate(config);
  if (config.stage != Stage::kPretrain) throw Error("pretrain_backbone requires stage pretrain");
  if (train.empty()) throw Error("pretrain_backbone: empty training set");
  Rng init_rng(derive_seed(config.seed, kTagBackboneInit));
  Rng order_rng(derive_seed(config.seed, kTagPretrainOrder));

  PretrainResult result;
  result.backbone = init_backbone(dims, init_rng, config.init_sigma);
  const std::size_t heldout = std::max<std::size_t>(1, train.size() / 20);
  const std::size_t n_fit = train.size() > heldout ? train.size() - heldout : train.size();

  std::vector<double> params = flatten(result.backbone);
  AdamState opt;
  BackboneParams grad = zeros_like(result.backbone);
  std::vector<double> acc(params.size(), 0.0);
  std::vector<std::size_t> order(n_fit);
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < config.pretrain_epochs; ++epoch) {
    if (config.shuffle) shuffle_in_place(order, order_rng);
    EpochMetrics m{epoch + 1};
    std::size_t in_batch = 0;
    for (std::size_t idx : order) {
      unflatten(result.backbone, params);
      for (auto& [name, t] : grad.tensors()) t->fill(0.0);
      const double loss = backbone_loss(train[idx], result.backbone, &grad);
      if (!std::isfinite(loss)) throw Error("pretraining diverged: non-finite loss");
      m.aed += loss;
      add_into(acc, flatten(grad));
      if (++in_batch == config.batch_size) {
        adam_step(params, acc, opt, config.pretrain_learning_rate);
        std::fill(acc.begin(), acc.end(), 0.0);
        in_batch = 0;
      }
    }
    if (in_batch > 0) {
      adam_step(params, acc, opt, config.pretrain_learning_rate);
      std::fill(acc.begin(), acc.end(), 0.0);
    }
    m.aed /= static_cast<double>(order.size());
    m.total = m.aed;
    result.history.push_back(m);
    if (on_epoch) on_epoch(m);
  }
  unflatten(result.backbone, params);

  std::size_t errors = 0, ref_len = 0;
  for (std::size_t i = train.size() - heldout; i < train.size(); ++i) {
    const auto hyp = greedy_decode(backbone_logits(train[i].frames, result.backbone));
    errors += edit_distance(std::span<const std::size_t>(train[i].chars),
                            std::span<const std::size_t>(hyp));
    ref_len += train[i].chars.size();
  }
  result.heldout_size = heldout;
  result.heldout_cer = ref_len ? static_cast<double>(errors) / static_cast<double>(ref_len) : 0.0;
  return result;
}

AdapterResult train_adapter(const std::vector<Utterance>& train, const FreqTable& freq,
                            const std::vector<std::string>& vocab,
                            const BackboneParams& backbone, const ModelDims& dims,
                            const TrainConfig& config, const EpochCallback& on_epoch) {
  validate(config);
  if (config.stage != Stage::kAdapter) throw Error("train_adapter requires stage adapter");
  const ContextList list = build_context_list(freq, vocab, config.gamma);
  Rng init_rng(derive_seed(config.seed, kTagAdapterInit));
  Rng order_rng(derive_seed(config.seed, kTagAdapterOrder));
  Rng subset_rng(derive_seed(config.seed, kTagSubsets));

  AdapterResult result;
  result.adapter = init_adapter(dims, init_rng, config.init_sigma);
  std::vector<double> params = flatten(result.adapter);
  std::vector<double> acc(params.size(), 0.0);
  AdamState opt;

  std::vector<std::vector<RefOccurrence>> refs(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) refs[i] = reference_context(train[i], list);
  std::vector<ContextSubset> fixed_subsets;
  if (!config.resample_each_epoch) {
    fixed_subsets.reserve(train.size());
    for (std::size_t i = 0; i < train.size(); ++i)
      fixed_subsets.push_back(sample_context_subset(refs[i], list, config.s_hat, subset_rng));
  }

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    if (config.shuffle) shuffle_in_place(order, order_rng);
    EpochMetrics m{epoch + 1};
    std::size_t in_batch = 0;
    for (std::size_t idx : order) {
      const Utterance& utt = train[idx];
      ContextSubset subset = config.resample_each_epoch
                                 ? sample_context_subset(refs[idx], list, config.s_hat, subset_rng)
                                 : fixed_subsets[idx];
      if (subset.ref_sequence.size() != refs[idx].size()) {
        throw Error("utterance " + utt.id + ": reference word missing from its subset");
      }
      unflatten(result.adapter, params);
      const ForwardCache cache = forward_full(utt, subset, backbone, result.adapter);
      const LossBreakdown loss =
          total_loss(cache, utt, subset, freq, config.loss, backbone, result.adapter);
      m.aed += loss.aed;
      m.ctc += loss.ctc;
      m.balance += loss.balance;
      m.total += loss.total;
      add_into(acc, loss.grads);
      if (++in_batch == config.batch_size) {
        adam_step(params, acc, opt, config.learning_rate);
        std::fill(acc.begin(), acc.end(), 0.0);
        in_batch = 0;
      }
    }
    if (in_batch > 0) {
      adam_step(params, acc, opt, config.learning_rate);
      std::fill(acc.begin(), acc.end(), 0.0);
    }
    const double n = static_cast<double>(std::max<std::size_t>(1, train.size()));
    m.aed /= n;
    m.ctc /= n;
    m.balance /= n;
    m.total /= n;
    result.history.push_back(m);
    if (on_epoch) on_epoch(m);
  }
  unflatten(result.adapter, params);
  return result;
}

std::filesystem::path blob_path(const std::filesystem::path& manifest) {
  auto p = manifest;
  p += ".bin";
  return p;
}

void save_checkpoint(const std::vector<ConstNamedTensor>& tensors,
                     const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ostringstream manifest;
  manifest << "CBA1\n";
  std::string blob(kMagic, sizeof(kMagic));
  for (const auto& [name, m] : tensors) {
    manifest << name << ' ' << m->rows() << ' ' << m->cols() << '\n';
    for (double v : m->flat()) {
      const auto bits = std::bit_cast<std::uint64_t>(v);
      for (int b = 0; b < 8; ++b) blob.push_back(static_cast<char>((bits >> (8 * b)) & 0xFF));
    }
  }
  write_text(path, manifest.str());
  write_text(blob_path(path), blob);
}

void load_checkpoint(std::vector<NamedTensor> tensors, const std::filesystem::path& path) {
  const auto lines = read_lines(path);
  if (lines.empty() || lines.front() != "CBA1") {
    throw Error(path.string() + ": bad manifest magic (expected CBA1)");
  }
  std::vector<std::string> entries;
  for (std::size_t i = 1; i < lines.size(); ++i)
    if (!lines[i].empty()) entries.push_back(lines[i]);
  if (entries.size() != tensors.size()) {
    throw Error(path.string() + ": manifest lists " + std::to_string(entries.size()) +
                " tensors, expected " + std::to_string(tensors.size()));
  }
  std::size_t total = 0;
  std::vector<std::pair<std::size_t, std::size_t>> shapes;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto parts = split(entries[i], ' ');
    if (parts.size() != 3) throw Error(path.string() + ": malformed manifest entry '" + entries[i] + "'");
    if (parts[0] != tensors[i].first) {
      throw Error(path.string() + ": manifest entry " + std::to_string(i) + " is '" +
                  std::string(parts[0]) + "', expected '" + tensors[i].first + "'");
    }
    shapes.emplace_back(parse_size(parts[1]), parse_size(parts[2]));
    total += shapes.back().first * shapes.back().second;
  }
  std::ifstream is(blob_path(path), std::ios::binary);
  if (!is) throw Error("cannot open " + blob_path(path).string());
  std::string blob((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (blob.size() < 4 || blob.compare(0, 4, kMagic, 4) != 0) {
    throw Error(blob_path(path).string() + ": bad blob magic (expected CBA1)");
  }
  if (blob.size() != 4 + 8 * total) {
    throw Error(blob_path(path).string() + ": blob holds " + std::to_string(blob.size() - 4) +
                " bytes, manifest needs " + std::to_string(8 * total));
  }
  std::size_t off = 4;
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    auto [rows, cols] = shapes[i];
    std::vector<double> data(rows * cols);
    for (double& v : data) {
      std::uint64_t bits = 0;
      for (int b = 0; b < 8; ++b)
        bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(blob[off + b])) << (8 * b);
      v = std::bit_cast<double>(bits);
      off += 8;
    }
    *tensors[i].second = Matrix(rows, cols, std::move(data));
  }
}

std::string checkpoint_bytes(const std::filesystem::path& path) {
  std::string out;
  for (const auto& p : {path, blob_path(path)}) {
    std::ifstream is(p, std::ios::binary);
    if (!is) throw Error("cannot open " + p.string());
    out.append(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
  }
  return out;
}

}  // namespace cba
