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

#include "replaycm/replaycm.h"

#include <cstdlib>
#include <cstring>
#include <exception>
#include <memory>
#include <new>
#include <string>
#include <vector>

#include "config.hpp"
#include "errors.hpp"
#include "metrics.hpp"
#include "pipeline.hpp"

struct rcm_config {
  replaycm::ExperimentConfig value;
};

struct rcm_model {
  explicit rcm_model(replaycm::ResNet m) : value(std::move(m)) {}
  replaycm::ResNet value;
};

struct rcm_scores {
  replaycm::ScoreSet value;
};

struct rcm_fusion {
  replaycm::FusionModel value;
};

namespace {

using replaycm::ErrorCategory;

thread_local std::string last_error;

rcm_status to_status(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::kFormat: return RCM_ERR_FORMAT;
    case ErrorCategory::kUnsupported: return RCM_ERR_UNSUPPORTED;
    case ErrorCategory::kIo: return RCM_ERR_IO;
    case ErrorCategory::kParameter: return RCM_ERR_PARAMETER;
    case ErrorCategory::kShape: return RCM_ERR_SHAPE;
    case ErrorCategory::kContract: return RCM_ERR_CONTRACT;
    case ErrorCategory::kTraining: return RCM_ERR_TRAINING;
    case ErrorCategory::kData: return RCM_ERR_DATA;
    case ErrorCategory::kAlignment: return RCM_ERR_ALIGNMENT;
    case ErrorCategory::kNumeric: return RCM_ERR_NUMERIC;
    case ErrorCategory::kMetric: return RCM_ERR_METRIC;
    case ErrorCategory::kParse: return RCM_ERR_PARSE;
    case ErrorCategory::kInternal: return RCM_ERR_INTERNAL;
  }
  return RCM_ERR_INTERNAL;
}

template <typename Fn>
rcm_status guarded(Fn&& fn) {
  try {
    fn();
    last_error.clear();
    return RCM_OK;
  } catch (const replaycm::Error& e) {
    last_error = e.what();
    return to_status(e.category());
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
    return RCM_ERR_INTERNAL;
  } catch (const std::exception& e) {
    last_error = e.what();
    return RCM_ERR_INTERNAL;
  }
}

void require_arg(const void* p, const char* name) {
  replaycm::require(p != nullptr, ErrorCategory::kParameter, std::string(name) + " must not be NULL");
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

const replaycm::ExperimentConfig& config_or_default(const rcm_config* cfg) {
  static const replaycm::ExperimentConfig defaults;
  return cfg != nullptr ? cfg->value : defaults;
}

std::vector<replaycm::ScoreSet> collect(const rcm_scores* const* systems, size_t n) {
  require_arg(systems, "systems");
  std::vector<replaycm::ScoreSet> out;
  for (size_t i = 0; i < n; ++i) {
    require_arg(systems[i], "score set");
    out.push_back(systems[i]->value);
  }
  return out;
}

}  // namespace

extern "C" {

const char* rcm_last_error(void) { return last_error.c_str(); }

const char* rcm_status_name(rcm_status status) {
  switch (status) {
    case RCM_OK: return "ok";
    case RCM_ERR_FORMAT: return "format";
    case RCM_ERR_UNSUPPORTED: return "unsupported";
    case RCM_ERR_IO: return "io";
    case RCM_ERR_PARAMETER: return "parameter";
    case RCM_ERR_SHAPE: return "shape";
    case RCM_ERR_CONTRACT: return "contract";
    case RCM_ERR_TRAINING: return "training";
    case RCM_ERR_DATA: return "data";
    case RCM_ERR_ALIGNMENT: return "alignment";
    case RCM_ERR_NUMERIC: return "numeric";
    case RCM_ERR_METRIC: return "metric";
    case RCM_ERR_PARSE: return "parse";
    case RCM_ERR_INTERNAL: return "internal";
  }
  return "internal";
}

const char* rcm_version(void) { return "1.0.0"; }

void rcm_string_free(char* s) { std::free(s); }

rcm_status rcm_config_load(const char* path, rcm_config** out) {
  return guarded([&] {
    require_arg(out, "out");
    auto cfg = std::make_unique<rcm_config>();
    if (path != nullptr) cfg->value = replaycm::load_config(path);
    *out = cfg.release();
  });
}

rcm_status rcm_config_set(rcm_config* cfg, const char* section, const char* key, const char* value) {
  return guarded([&] {
    require_arg(cfg, "cfg");
    require_arg(section, "section");
    require_arg(key, "key");
    require_arg(value, "value");
    replaycm::ExperimentConfig updated = cfg->value;
    replaycm::set_config_value(updated, section, key, value);
    updated.validate();
    cfg->value = std::move(updated);
  });
}

rcm_status rcm_config_format(const rcm_config* cfg, char** out) {
  return guarded([&] {
    require_arg(out, "out");
    *out = dup_string(replaycm::format_config(config_or_default(cfg)));
  });
}

void rcm_config_free(rcm_config* cfg) { delete cfg; }

rcm_status rcm_simulate(const char* out_dir, int n_sources, int utts_per_source, uint64_t seed,
                        const rcm_config* cfg, int jobs) {
  return guarded([&] {
    require_arg(out_dir, "out_dir");
    replaycm::require(n_sources >= 3 && utts_per_source > 0, ErrorCategory::kParameter,
                      "need at least 3 sources (one per split) and one utterance per source");
    replaycm::CorpusOptions opts = config_or_default(cfg).corpus;
    opts.n_sources = n_sources;
    opts.utts_per_source = utts_per_source;
    opts.seed = seed;
    opts.jobs = jobs;
    replaycm::generate_corpus(out_dir, opts);
  });
}

rcm_status rcm_extract(const char* protocol, const char* wav_dir, const char* out_dir, const rcm_config* cfg,
                       int jobs) {
  return guarded([&] {
    require_arg(protocol, "protocol");
    require_arg(wav_dir, "wav_dir");
    require_arg(out_dir, "out_dir");
    replaycm::extract_corpus(replaycm::read_protocol(protocol), wav_dir, out_dir, config_or_default(cfg).features,
                             jobs);
  });
}

rcm_status rcm_train(const char* feature_dir, const char* protocol_train, const char* protocol_dev,
                     const rcm_config* cfg, const char* checkpoint_out, const char* log_path, int jobs) {
  return guarded([&] {
    require_arg(feature_dir, "feature_dir");
    require_arg(protocol_train, "protocol_train");
    require_arg(protocol_dev, "protocol_dev");
    require_arg(checkpoint_out, "checkpoint_out");
    replaycm::TrainJob job;
    job.feature_dir = feature_dir;
    job.protocol_train = protocol_train;
    job.protocol_dev = protocol_dev;
    job.checkpoint = checkpoint_out;
    if (log_path != nullptr) job.log = log_path;
    job.config = config_or_default(cfg);
    job.jobs = jobs;
    replaycm::run_training(job);
  });
}

rcm_status rcm_model_load(const char* checkpoint, rcm_model** out) {
  return guarded([&] {
    require_arg(checkpoint, "checkpoint");
    require_arg(out, "out");
    *out = new rcm_model(replaycm::load_checkpoint(checkpoint));
  });
}

void rcm_model_free(rcm_model* model) { delete model; }

rcm_status rcm_model_score(rcm_model* model, const char* feature_dir, const char* protocol, int jobs,
                           rcm_scores** out) {
  return guarded([&] {
    require_arg(model, "model");
    require_arg(feature_dir, "feature_dir");
    require_arg(protocol, "protocol");
    require_arg(out, "out");
    auto s = std::make_unique<rcm_scores>();
    s->value = replaycm::score_corpus(model->value, feature_dir, replaycm::read_protocol(protocol), jobs);
    *out = s.release();
  });
}

rcm_status rcm_model_saliency(rcm_model* model, const char* gram_path, int target_class, const char* out_path) {
  return guarded([&] {
    require_arg(model, "model");
    require_arg(gram_path, "gram_path");
    require_arg(out_path, "out_path");
    replaycm::require(target_class == 0 || target_class == 1, ErrorCategory::kParameter,
                      "class must be 0 (bonafide) or 1 (spoof)");
    const replaycm::FeatureGram g = replaycm::read_gram(gram_path);
    replaycm::write_gram(replaycm::saliency_gram(model->value, g, static_cast<std::size_t>(target_class)),
                         out_path);
  });
}

rcm_status rcm_scores_read(const char* path, rcm_scores** out) {
  return guarded([&] {
    require_arg(path, "path");
    require_arg(out, "out");
    auto s = std::make_unique<rcm_scores>();
    s->value = replaycm::read_scores(path);
    *out = s.release();
  });
}

rcm_status rcm_scores_write(const rcm_scores* scores, const char* path) {
  return guarded([&] {
    require_arg(scores, "scores");
    require_arg(path, "path");
    replaycm::write_scores(scores->value, path);
  });
}

size_t rcm_scores_size(const rcm_scores* scores) { return scores != nullptr ? scores->value.size() : 0; }

rcm_status rcm_scores_get(const rcm_scores* scores, size_t index, const char** utt_id, double* score) {
  return guarded([&] {
    require_arg(scores, "scores");
    replaycm::require(index < scores->value.size(), ErrorCategory::kParameter, "score index out of range");
    if (utt_id != nullptr) *utt_id = scores->value[index].utt_id.c_str();
    if (score != nullptr) *score = scores->value[index].score;
  });
}

rcm_status rcm_scores_attach_protocol(rcm_scores* scores, const char* protocol) {
  return guarded([&] {
    require_arg(scores, "scores");
    require_arg(protocol, "protocol");
    scores->value = replaycm::attach_protocol(scores->value, replaycm::read_protocol(protocol));
  });
}

void rcm_scores_free(rcm_scores* scores) { delete scores; }

rcm_status rcm_fuse_mean(const rcm_scores* const* systems, size_t n_systems, rcm_scores** out) {
  return guarded([&] {
    require_arg(out, "out");
    const auto sets = collect(systems, n_systems);
    auto s = std::make_unique<rcm_scores>();
    s->value = replaycm::mean_fuse(sets);
    *out = s.release();
  });
}

rcm_status rcm_fusion_train_lr(const rcm_scores* const* dev_systems, size_t n_systems, rcm_fusion** out) {
  return guarded([&] {
    require_arg(out, "out");
    replaycm::require(n_systems >= 2, ErrorCategory::kParameter, "logistic fusion needs at least two systems");
    const auto sets = collect(dev_systems, n_systems);
    auto f = std::make_unique<rcm_fusion>();
    f->value = replaycm::lr_fuse_train(sets);
    *out = f.release();
  });
}

rcm_status rcm_fusion_apply(const rcm_fusion* fusion, const rcm_scores* const* systems, size_t n_systems,
                            rcm_scores** out) {
  return guarded([&] {
    require_arg(fusion, "fusion");
    require_arg(out, "out");
    const auto sets = collect(systems, n_systems);
    auto s = std::make_unique<rcm_scores>();
    s->value = replaycm::apply_fusion(fusion->value, sets);
    *out = s.release();
  });
}

rcm_status rcm_fusion_write(const rcm_fusion* fusion, const char* path) {
  return guarded([&] {
    require_arg(fusion, "fusion");
    require_arg(path, "path");
    replaycm::write_fusion_model(fusion->value, path);
  });
}

rcm_status rcm_fusion_read(const char* path, rcm_fusion** out) {
  return guarded([&] {
    require_arg(path, "path");
    require_arg(out, "out");
    auto f = std::make_unique<rcm_fusion>();
    f->value = replaycm::read_fusion_model(path);
    *out = f.release();
  });
}

void rcm_fusion_free(rcm_fusion* fusion) { delete fusion; }

rcm_status rcm_evaluate(const rcm_scores* scores, const rcm_config* cfg, rcm_metrics* out) {
  return guarded([&] {
    require_arg(scores, "scores");
    require_arg(out, "out");
    const auto m = replaycm::evaluate(scores->value, config_or_default(cfg).tdcf);
    *out = {m.eer, m.eer_threshold, m.min_tdcf, m.tdcf_threshold, m.n_bonafide, m.n_spoof};
  });
}

rcm_status rcm_metrics_format(const rcm_metrics* metrics, char** out) {
  return guarded([&] {
    require_arg(metrics, "metrics");
    require_arg(out, "out");
    replaycm::MetricResult m;
    m.eer = metrics->eer;
    m.eer_threshold = metrics->eer_threshold;
    m.min_tdcf = metrics->min_tdcf;
    m.tdcf_threshold = metrics->tdcf_threshold;
    m.n_bonafide = metrics->n_bonafide;
    m.n_spoof = metrics->n_spoof;
    *out = dup_string(replaycm::format_metric_line(m));
  });
}

rcm_status rcm_breakdown(const rcm_scores* scores, const rcm_config* cfg, char** out) {
  return guarded([&] {
    require_arg(scores, "scores");
    require_arg(out, "out");
    *out = dup_string(replaycm::format_breakdown(replaycm::breakdown(scores->value, config_or_default(cfg).tdcf)));
  });
}

}  // extern "C"
