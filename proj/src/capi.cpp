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

#include "cba/cba.h"

#include <cstring>
#include <iostream>
#include <string>
#include <vector>

#include "cba/config.hpp"
#include "cba/eval.hpp"
#include "cba/objectives.hpp"
#include "cba/pipeline.hpp"

struct cba_run {
  cba::RunConfig config;
  bool quiet = false;
};

namespace {

thread_local std::string last_error;

cba_status fail(cba_status status, const std::string& msg) {
  last_error = msg;
  return status;
}

template <class F>
cba_status guarded(F&& f) {
  try {
    f();
    last_error.clear();
    return CBA_OK;
  } catch (const cba::Error& e) {
    switch (e.kind()) {
      case cba::ErrorKind::kArgument: return fail(CBA_ERR_ARGUMENT, e.what());
      case cba::ErrorKind::kConfig: return fail(CBA_ERR_CONFIG, e.what());
      case cba::ErrorKind::kRuntime: break;
    }
    return fail(CBA_ERR_RUNTIME, e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(CBA_ERR_RUNTIME, e.what());
  } catch (const std::bad_alloc&) {
    return fail(CBA_ERR_RUNTIME, "out of memory");
  } catch (const std::exception& e) {
    return fail(CBA_ERR_RUNTIME, e.what());
  }
}

cba::Run make_run(const cba_run* run) {
  cba::Run r{run->config, {}};
  if (!run->quiet) r.log = [](const std::string& line) { std::cerr << line << '\n'; };
  return r;
}

}  // namespace

extern "C" {

const char* cba_version(void) { return "1.0.0"; }

const char* cba_last_error(void) { return last_error.c_str(); }

cba_status cba_run_create(const char* config_path, cba_run** out) {
  if (out == nullptr) return fail(CBA_ERR_ARGUMENT, "cba_run_create: null output pointer");
  *out = nullptr;
  return guarded([&] {
    auto run = std::make_unique<cba_run>();
    if (config_path != nullptr) {
      run->config = cba::parse_config(config_path);
    } else {
      run->config = cba::parse_config_text("");
    }
    *out = run.release();
  });
}

void cba_run_destroy(cba_run* run) { delete run; }

cba_status cba_run_set_out_dir(cba_run* run, const char* dir) {
  if (run == nullptr || dir == nullptr || *dir == '\0')
    return fail(CBA_ERR_ARGUMENT, "cba_run_set_out_dir: null run or empty directory");
  run->config.out_dir = dir;
  return CBA_OK;
}

cba_status cba_run_set_seed(cba_run* run, uint64_t seed) {
  if (run == nullptr) return fail(CBA_ERR_ARGUMENT, "cba_run_set_seed: null run");
  run->config.corpus.seed = seed;
  run->config.train.seed = seed;
  return CBA_OK;
}

cba_status cba_run_set_quiet(cba_run* run, int quiet) {
  if (run == nullptr) return fail(CBA_ERR_ARGUMENT, "cba_run_set_quiet: null run");
  run->quiet = quiet != 0;
  return CBA_OK;
}

cba_status cba_run_config_json(const cba_run* run, char* buf, size_t cap, size_t* needed) {
  if (run == nullptr) return fail(CBA_ERR_ARGUMENT, "cba_run_config_json: null run");
  const std::string text = cba::serialize_config(run->config);
  if (needed != nullptr) *needed = text.size();
  if (buf != nullptr && cap > 0) {
    const size_t n = std::min(cap - 1, text.size());
    std::memcpy(buf, text.data(), n);
    buf[n] = '\0';
  }
  return CBA_OK;
}

#define CBA_COMMAND(name, call)                                         \
  cba_status name(cba_run* run) {                                       \
    if (run == nullptr) return fail(CBA_ERR_ARGUMENT, #name ": null run"); \
    return guarded([&] { call(make_run(run)); });                       \
  }

CBA_COMMAND(cba_gen_corpus, cba::run_gen_corpus)
CBA_COMMAND(cba_pretrain, cba::run_pretrain)
CBA_COMMAND(cba_train_adapter, cba::run_train_adapter)
CBA_COMMAND(cba_eval, cba::run_eval)
CBA_COMMAND(cba_stats, cba::run_stats)

#undef CBA_COMMAND

cba_status cba_attention_dump(cba_run* run, const char* utt_id) {
  if (run == nullptr || utt_id == nullptr)
    return fail(CBA_ERR_ARGUMENT, "cba_attention_dump: null run or utterance id");
  return guarded([&] { cba::run_attention_dump(make_run(run), utt_id); });
}

cba_status cba_ablate(cba_run* run, int cell) {
  if (run == nullptr) return fail(CBA_ERR_ARGUMENT, "cba_ablate: null run");
  return guarded([&] {
    std::optional<std::size_t> which;
    if (cell >= 0) which = static_cast<std::size_t>(cell);
    cba::run_ablate(make_run(run), which);
  });
}

cba_status cba_ctc_loss(const double* posteriors, size_t frames, size_t symbols,
                        const size_t* labels, size_t n_labels, size_t blank, double* loss) {
  if (loss == nullptr || (posteriors == nullptr && frames * symbols > 0) ||
      (labels == nullptr && n_labels > 0))
    return fail(CBA_ERR_ARGUMENT, "cba_ctc_loss: null pointer");
  return guarded([&] {
    cba::Matrix p(frames, symbols);
    std::copy(posteriors, posteriors + frames * symbols, p.flat().begin());
    std::vector<std::size_t> l(labels, labels + n_labels);
    *loss = cba::ctc_loss(p, l, blank).loss;
  });
}

cba_status cba_cb_weight(uint64_t count, double alpha, double* weight) {
  if (weight == nullptr) return fail(CBA_ERR_ARGUMENT, "cba_cb_weight: null output");
  return guarded([&] { *weight = cba::cb_weight(count, alpha); });
}

cba_status cba_cer(const char* ref, const char* hyp, double* rate) {
  if (ref == nullptr || hyp == nullptr || rate == nullptr)
    return fail(CBA_ERR_ARGUMENT, "cba_cer: null pointer");
  return guarded([&] {
    std::vector<std::size_t> r(ref, ref + std::strlen(ref));
    std::vector<std::size_t> h(hyp, hyp + std::strlen(hyp));
    *rate = cba::cer(r, h);
  });
}

}  // extern "C"
