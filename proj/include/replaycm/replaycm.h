// Copyright 2026 The replaycm Authors
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

#ifndef REPLAYCM_REPLAYCM_H_
#define REPLAYCM_REPLAYCM_H_

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(__GNUC__)
#define RCM_API __attribute__((visibility("default")))
#else
#define RCM_API
#endif

typedef enum rcm_status {
  RCM_OK = 0,
  RCM_ERR_FORMAT = 1,
  RCM_ERR_UNSUPPORTED = 2,
  RCM_ERR_IO = 3,
  RCM_ERR_PARAMETER = 4,
  RCM_ERR_SHAPE = 5,
  RCM_ERR_CONTRACT = 6,
  RCM_ERR_TRAINING = 7,
  RCM_ERR_DATA = 8,
  RCM_ERR_ALIGNMENT = 9,
  RCM_ERR_NUMERIC = 10,
  RCM_ERR_METRIC = 11,
  RCM_ERR_PARSE = 12,
  RCM_ERR_INTERNAL = 13
} rcm_status;

typedef struct rcm_config rcm_config;
typedef struct rcm_model rcm_model;
typedef struct rcm_scores rcm_scores;
typedef struct rcm_fusion rcm_fusion;

typedef struct rcm_metrics {
  double eer;
  double eer_threshold;
  double min_tdcf;
  double tdcf_threshold;
  size_t n_bonafide;
  size_t n_spoof;
} rcm_metrics;

/* Message of the last failure on the calling thread ("" after success). */
RCM_API const char* rcm_last_error(void);
/* Short category name of a status, e.g. "parse". */
RCM_API const char* rcm_status_name(rcm_status status);
RCM_API const char* rcm_version(void);
/* Frees strings returned through char** out-parameters. */
RCM_API void rcm_string_free(char* s);

/* Configuration. A NULL path gives the built-in defaults. */
RCM_API rcm_status rcm_config_load(const char* path, rcm_config** out);
RCM_API rcm_status rcm_config_set(rcm_config* cfg, const char* section, const char* key, const char* value);
RCM_API rcm_status rcm_config_format(const rcm_config* cfg, char** out);
RCM_API void rcm_config_free(rcm_config* cfg);

/* Synthetic corpus: <out_dir>/wav/ and <out_dir>/protocol_{train,dev,eval}.txt. */
RCM_API rcm_status rcm_simulate(const char* out_dir, int n_sources, int utts_per_source, uint64_t seed,
                                const rcm_config* cfg, int jobs);

/* Feature grams for every protocol entry; cfg selects kind and parameters. */
RCM_API rcm_status rcm_extract(const char* protocol, const char* wav_dir, const char* out_dir,
                               const rcm_config* cfg, int jobs);

/* Trains on precomputed grams; log_path may be NULL. */
RCM_API rcm_status rcm_train(const char* feature_dir, const char* protocol_train, const char* protocol_dev,
                             const rcm_config* cfg, const char* checkpoint_out, const char* log_path, int jobs);

RCM_API rcm_status rcm_model_load(const char* checkpoint, rcm_model** out);
RCM_API void rcm_model_free(rcm_model* model);
RCM_API rcm_status rcm_model_score(rcm_model* model, const char* feature_dir, const char* protocol, int jobs,
                                   rcm_scores** out);
/* Writes |d log p(class) / d gram| as a gram file; class 0 is bonafide. */
RCM_API rcm_status rcm_model_saliency(rcm_model* model, const char* gram_path, int target_class,
                                      const char* out_path);

RCM_API rcm_status rcm_scores_read(const char* path, rcm_scores** out);
RCM_API rcm_status rcm_scores_write(const rcm_scores* scores, const char* path);
RCM_API size_t rcm_scores_size(const rcm_scores* scores);
/* utt_id stays valid until the set is freed. */
RCM_API rcm_status rcm_scores_get(const rcm_scores* scores, size_t index, const char** utt_id, double* score);
RCM_API rcm_status rcm_scores_attach_protocol(rcm_scores* scores, const char* protocol);
RCM_API void rcm_scores_free(rcm_scores* scores);

RCM_API rcm_status rcm_fuse_mean(const rcm_scores* const* systems, size_t n_systems, rcm_scores** out);
/* Dev sets must carry labels (rcm_scores_attach_protocol). */
RCM_API rcm_status rcm_fusion_train_lr(const rcm_scores* const* dev_systems, size_t n_systems, rcm_fusion** out);
RCM_API rcm_status rcm_fusion_apply(const rcm_fusion* fusion, const rcm_scores* const* systems, size_t n_systems,
                                    rcm_scores** out);
RCM_API rcm_status rcm_fusion_write(const rcm_fusion* fusion, const char* path);
RCM_API rcm_status rcm_fusion_read(const char* path, rcm_fusion** out);
RCM_API void rcm_fusion_free(rcm_fusion* fusion);

/* Scores must carry labels; cfg supplies the t-DCF constants (NULL: defaults). */
RCM_API rcm_status rcm_evaluate(const rcm_scores* scores, const rcm_config* cfg, rcm_metrics* out);
RCM_API rcm_status rcm_metrics_format(const rcm_metrics* metrics, char** out);
/* Tab-separated per-attack table. */
RCM_API rcm_status rcm_breakdown(const rcm_scores* scores, const rcm_config* cfg, char** out);

#ifdef __cplusplus
}
#endif

#endif  // REPLAYCM_REPLAYCM_H_
