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

// Run configuration: a flat JSON object whose keys are dotted paths
// ("corpus.vocab_size", "train.alpha", ...). A bare key ("alpha") is
// accepted when exactly one section defines it.

#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "cba/corpus.hpp"
#include "cba/eval.hpp"
#include "cba/model.hpp"
#include "cba/trainer.hpp"

namespace cba {

struct RunConfig {
  CorpusConfig corpus;
  ModelDims model;  // charset and feature_dim follow the corpus section
  TrainConfig train;
  EvalOptions eval;
  std::string out_dir = "run";
};

// Throws Error(kConfig) naming the key and its line.
RunConfig parse_config_text(std::string_view text);
RunConfig parse_config(const std::filesystem::path& path);

// Checks every section and the cross-section constraints.
void validate(const RunConfig& config);

// All keys with their effective values, one per line, sorted.
std::string serialize_config(const RunConfig& config);

std::vector<std::string> config_keys();

}  // namespace cba
