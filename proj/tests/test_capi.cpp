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
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "cba/cba.h"
#include "doctest.h"

namespace {

std::filesystem::path scratch(const char* tag) {
  auto p = std::filesystem::temp_directory_path() / (std::string("cba_capi_") + tag);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

std::filesystem::path write_config(const std::filesystem::path& dir, const std::string& body) {
  const auto path = dir / "config.json";
  std::ofstream(path) << body;
  return path;
}

}  // namespace

TEST_CASE("version and argument checks") {
  CHECK(std::string(cba_version()).size() > 0);
  CHECK(cba_run_create(nullptr, nullptr) == CBA_ERR_ARGUMENT);
  CHECK(std::string(cba_last_error()).find("null") != std::string::npos);
  CHECK(cba_gen_corpus(nullptr) == CBA_ERR_ARGUMENT);
  CHECK(cba_run_set_out_dir(nullptr, "x") == CBA_ERR_ARGUMENT);
  CHECK(cba_attention_dump(nullptr, "u") == CBA_ERR_ARGUMENT);
  cba_run_destroy(nullptr);
}

TEST_CASE("stateless helpers") {
  double w = 0.0;
  REQUIRE(cba_cb_weight(2, 0.9, &w) == CBA_OK);
  CHECK(w == doctest::Approx(0.1 / 0.19));
  CHECK(cba_cb_weight(0, 0.9, &w) == CBA_ERR_ARGUMENT);
  CHECK(cba_cb_weight(3, 1.0, &w) == CBA_ERR_ARGUMENT);
  CHECK(std::string(cba_last_error()) == "alpha out of range [0,1)");

  const double post[] = {0.5, 0.5, 0.5, 0.5};
  const size_t label[] = {0};
  double loss = 0.0;
  REQUIRE(cba_ctc_loss(post, 2, 2, label, 1, 1, &loss) == CBA_OK);
  CHECK(loss == doctest::Approx(-std::log(0.75)));
  const size_t repeat[] = {0, 0};
  CHECK(cba_ctc_loss(post, 2, 2, repeat, 2, 1, &loss) == CBA_ERR_RUNTIME);

  double rate = -1.0;
  REQUIRE(cba_cer("abc", "axc", &rate) == CBA_OK);
  CHECK(rate == doctest::Approx(1.0 / 3.0));
  CHECK(cba_cer("", "a", &rate) != CBA_OK);
}

TEST_CASE("config errors surface as config status") {
  const auto dir = scratch("cfg");
  cba_run* run = nullptr;
  CHECK(cba_run_create(write_config(dir, "{\"alpha\": 1.5}").c_str(), &run) == CBA_ERR_CONFIG);
  CHECK(run == nullptr);
  CHECK(std::string(cba_last_error()).find("alpha out of range [0,1)") != std::string::npos);
  CHECK(cba_run_create((dir / "missing.json").c_str(), &run) == CBA_ERR_CONFIG);
  std::filesystem::remove_all(dir);
}

TEST_CASE("a run handle drives the commands") {
  const auto dir = scratch("run");
  const auto cfg = write_config(dir, R"({"corpus.vocab_size": 40, "corpus.n_train": 50,
    "corpus.n_test": 10, "corpus.n_zero_shot_words": 4, "train.epochs": 1,
    "train.pretrain_epochs": 1, "train.s_hat": 12, "eval.s_hat": 8})");
  cba_run* run = nullptr;
  REQUIRE(cba_run_create(cfg.c_str(), &run) == CBA_OK);
  REQUIRE(cba_run_set_out_dir(run, (dir / "out").c_str()) == CBA_OK);
  REQUIRE(cba_run_set_seed(run, 7) == CBA_OK);
  REQUIRE(cba_run_set_quiet(run, 1) == CBA_OK);

  size_t needed = 0;
  REQUIRE(cba_run_config_json(run, nullptr, 0, &needed) == CBA_OK);
  std::vector<char> buf(needed + 1);
  REQUIRE(cba_run_config_json(run, buf.data(), buf.size(), &needed) == CBA_OK);
  const std::string json(buf.data());
  CHECK(json.size() == needed);
  CHECK(json.find("\"corpus.seed\": 7") != std::string::npos);
  CHECK(json.find("\"train.seed\": 7") != std::string::npos);
  char small[8];
  REQUIRE(cba_run_config_json(run, small, sizeof small, nullptr) == CBA_OK);
  CHECK(std::string(small).size() == 7);

  CHECK(cba_pretrain(run) == CBA_ERR_RUNTIME);
  CHECK(std::string(cba_last_error()).find("gen-corpus") != std::string::npos);
  REQUIRE(cba_gen_corpus(run) == CBA_OK);
  REQUIRE(cba_pretrain(run) == CBA_OK);
  REQUIRE(cba_train_adapter(run) == CBA_OK);
  REQUIRE(cba_eval(run) == CBA_OK);
  REQUIRE(cba_stats(run) == CBA_OK);
  CHECK(cba_attention_dump(run, "nope") != CBA_OK);
  REQUIRE(cba_attention_dump(run, "test000000") == CBA_OK);
  CHECK(std::filesystem::exists(dir / "out" / "attention_test000000.tsv"));
  CHECK(std::filesystem::exists(dir / "out" / "eval_report.txt"));
  CHECK(std::filesystem::exists(dir / "out" / "imbalance.tsv"));
  cba_run_destroy(run);
  std::filesystem::remove_all(dir);
}
