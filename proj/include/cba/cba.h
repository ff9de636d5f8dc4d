/* Copyright 2026 The cbadapter Authors. All Rights Reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

/* C interface to the context-balanced adapter toolkit.
 *
 * Every function returning cba_status leaves a message retrievable with
 * cba_last_error() (per thread) when it fails. */

#ifndef CBA_CBA_H_
#define CBA_CBA_H_

#include <stddef.h>
#include <stdint.h>

#if defined(CBA_BUILDING_LIBRARY)
#define CBA_API __attribute__((visibility("default")))
#else
#define CBA_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum cba_status {
  CBA_OK = 0,
  CBA_ERR_ARGUMENT = 1, /* bad call arguments or unknown ids */
  CBA_ERR_CONFIG = 2,   /* invalid configuration */
  CBA_ERR_RUNTIME = 3   /* training, I/O or numerical failure */
} cba_status;

typedef struct cba_run cba_run;

CBA_API const char* cba_version(void);
CBA_API const char* cba_last_error(void);

/* config_path may be NULL for the built-in defaults. */
CBA_API cba_status cba_run_create(const char* config_path, cba_run** out);
CBA_API void cba_run_destroy(cba_run* run);

CBA_API cba_status cba_run_set_out_dir(cba_run* run, const char* dir);
/* Overrides both the corpus seed and the training seed. */
CBA_API cba_status cba_run_set_seed(cba_run* run, uint64_t seed);
/* Nonzero silences progress lines on stderr. */
CBA_API cba_status cba_run_set_quiet(cba_run* run, int quiet);
/* Writes the effective configuration into buf (NUL-terminated, truncated to
 * cap). *needed receives the full length excluding the NUL. */
CBA_API cba_status cba_run_config_json(const cba_run* run, char* buf, size_t cap, size_t* needed);

CBA_API cba_status cba_gen_corpus(cba_run* run);
CBA_API cba_status cba_pretrain(cba_run* run);
CBA_API cba_status cba_train_adapter(cba_run* run);
CBA_API cba_status cba_eval(cba_run* run);
CBA_API cba_status cba_stats(cba_run* run);
CBA_API cba_status cba_attention_dump(cba_run* run, const char* utt_id);
/* cell < 0 runs the whole grid. */
CBA_API cba_status cba_ablate(cba_run* run, int cell);

/* Stateless helpers. */
CBA_API cba_status cba_ctc_loss(const double* posteriors, size_t frames, size_t symbols,
                                const size_t* labels, size_t n_labels, size_t blank,
                                double* loss);
CBA_API cba_status cba_cb_weight(uint64_t count, double alpha, double* weight);
/* Character error rate of hyp against a nonempty ref (byte strings). */
CBA_API cba_status cba_cer(const char* ref, const char* hyp, double* rate);

#ifdef __cplusplus
}
#endif

#endif /* CBA_CBA_H_ */
