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
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cba/context.hpp"
#include "cba/corpus.hpp"
#include "cba/model.hpp"
#include "cba/objectives.hpp"

namespace cba {

enum class Stage { kPretrain, kAdapter };

struct TrainConfig {
  std::uint64_t gamma = 65536;
  std::size_t s_hat = 32;
  LossConfig loss;
  double learning_rate = 5e-4;
  std::size_t epochs = 20;
  std::size_t batch_size = 1;
  std::uint64_t seed = 1;
  Stage stage = Stage::kAdapter;
  // Stage-0 schedule.
  double pretrain_learning_rate = 5e-3;
  std::size_t pretrain_epochs = 10;
  // Fresh subset per utterance every epoch; otherwise sampled once.
  bool resample_each_epoch = true;
  bool shuffle = true;
  double init_sigma = 0.1;
};

void validate(const TrainConfig& config);

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t step = 0;
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;

// One bias-corrected Adam update in place. Throws on a non-finite gradient.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               double lr);

struct EpochMetrics {
  std::size_t epoch = 0;
  double aed = 0.0;
  double ctc = 0.0;
  double balance = 0.0;
  double total = 0.0;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

struct PretrainResult {
  BackboneParams backbone;
  std::vector<EpochMetrics> history;
  double heldout_cer = 0.0;
  std::size_t heldout_size = 0;
};

// Trains the encoder and head with the character CTC loss alone. The last
// 1/20 of the training utterances are held out for the reported CER.
PretrainResult pretrain_backbone(const std::vector<Utterance>& train, const ModelDims& dims,
                                 const TrainConfig& config, const EpochCallback& on_epoch = {});

struct AdapterResult {
  AdapterParams adapter;
  std::vector<EpochMetrics> history;
};

// Trains only the adapter against the frozen backbone.
AdapterResult train_adapter(const std::vector<Utterance>& train, const FreqTable& freq,
                            const std::vector<std::string>& vocab,
                            const BackboneParams& backbone, const ModelDims& dims,
                            const TrainConfig& config, const EpochCallback& on_epoch = {});

// Checkpoints: `path` holds the text manifest ("CBA1", then one
// "name rows cols" line per tensor in fixed order); `path` + ".bin" holds
// "CBA1" followed by the row-major little-endian doubles in manifest order.
void save_checkpoint(const std::vector<ConstNamedTensor>& tensors,
                     const std::filesystem::path& path);
void load_checkpoint(std::vector<NamedTensor> tensors, const std::filesystem::path& path);

template <class P>
void save_params(const P& params, const std::filesystem::path& path) {
  save_checkpoint(params.tensors(), path);
}

template <class P>
P load_params(const std::filesystem::path& path) {
  P params;
  load_checkpoint(params.tensors(), path);
  return params;
}

std::filesystem::path blob_path(const std::filesystem::path& manifest);

// Raw manifest + blob bytes, for byte-level identity checks.
std::string checkpoint_bytes(const std::filesystem::path& path);

}  // namespace cba
