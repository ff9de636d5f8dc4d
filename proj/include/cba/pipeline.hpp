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

// Run-directory commands. Layout under the output directory:
//
//   corpus/                      train.tsv test.tsv prototypes.txt vocab.txt
//                                zero_shot.txt config.json
//   backbone.ckpt{,.bin}         pretrain_metrics.tsv pretrain_report.txt
//   adapter.ckpt{,.bin}          train_metrics.tsv context_list.txt
//   baseline_report.txt ...      eval outputs (see run_eval)
//   imbalance.tsv freq_rank.tsv  stats outputs
//   ablate/cell_NN/              one directory per grid cell; ablation.tsv
//   <command>.config.json        effective configuration of each command

#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cba/config.hpp"

namespace cba {

using LogFn = std::function<void(const std::string&)>;

struct Run {
  RunConfig config;
  LogFn log;  // may be empty

  std::filesystem::path dir() const { return config.out_dir; }
};

void run_gen_corpus(const Run& run);
void run_pretrain(const Run& run);
void run_train_adapter(const Run& run);
void run_eval(const Run& run);
void run_stats(const Run& run);
// Returns the written TSV path.
std::filesystem::path run_attention_dump(const Run& run, const std::string& utt_id);

struct AblationCell {
  std::uint64_t gamma;
  double lambda2;
  double alpha;  // unused when lambda2 == 1
};

// The grid rows: lambda2 = 1 over four thresholds, lambda2 = 0.5 over the
// same thresholds with alpha 0.9, then the alpha sweep at gamma 2^16.
const std::vector<AblationCell>& ablation_grid();

// Runs one cell (index into ablation_grid) or, with no index, every cell;
// then rebuilds ablation.tsv from whichever cells are complete.
void run_ablate(const Run& run, std::optional<std::size_t> cell);

// The per-row summary line of an ablation TSV for one evaluation report.
std::string ablation_header();

}  // namespace cba
