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

#include <CLI11.hpp>
#include <malloc.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "replaycm/replaycm.h"

namespace {

// Thrown to leave main with the failing status of a C API call.
struct ApiFailure {
  rcm_status status;
  std::string message;
};

void check(rcm_status status) {
  if (status != RCM_OK) throw ApiFailure{status, rcm_last_error()};
}

[[noreturn]] void usage_error(const std::string& message) { throw ApiFailure{RCM_ERR_PARAMETER, message}; }

struct ConfigDeleter {
  void operator()(rcm_config* c) const { rcm_config_free(c); }
};
struct ScoresDeleter {
  void operator()(rcm_scores* s) const { rcm_scores_free(s); }
};
struct ModelDeleter {
  void operator()(rcm_model* m) const { rcm_model_free(m); }
};
struct FusionDeleter {
  void operator()(rcm_fusion* f) const { rcm_fusion_free(f); }
};
struct StringDeleter {
  void operator()(char* s) const { rcm_string_free(s); }
};

using ConfigPtr = std::unique_ptr<rcm_config, ConfigDeleter>;
using ScoresPtr = std::unique_ptr<rcm_scores, ScoresDeleter>;
using ModelPtr = std::unique_ptr<rcm_model, ModelDeleter>;
using FusionPtr = std::unique_ptr<rcm_fusion, FusionDeleter>;
using StringPtr = std::unique_ptr<char, StringDeleter>;

ConfigPtr load_config(const std::string& path) {
  rcm_config* cfg = nullptr;
  check(rcm_config_load(path.empty() ? nullptr : path.c_str(), &cfg));
  return ConfigPtr(cfg);
}

void set(rcm_config* cfg, const char* section, const char* key, const std::string& value) {
  check(rcm_config_set(cfg, section, key, value.c_str()));
}

std::string shortest(double v) {
  char buf[64];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

ScoresPtr read_scores(const std::string& path) {
  rcm_scores* s = nullptr;
  check(rcm_scores_read(path.c_str(), &s));
  return ScoresPtr(s);
}

std::vector<ScoresPtr> read_all(const std::vector<std::string>& paths) {
  std::vector<ScoresPtr> out;
  for (const auto& p : paths) out.push_back(read_scores(p));
  return out;
}

std::vector<const rcm_scores*> raw(const std::vector<ScoresPtr>& sets) {
  std::vector<const rcm_scores*> out;
  for (const auto& s : sets) out.push_back(s.get());
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out.good()) throw ApiFailure{RCM_ERR_IO, "cannot write " + path};
  out << text;
  if (!out.good()) throw ApiFailure{RCM_ERR_IO, "write failed for " + path};
}

std::string one_line(std::string s) {
  for (auto& c : s) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

// Training allocates and frees many large activation buffers per step. Keeping them on the
// heap instead of fresh mmap regions avoids repeated page faults.
void tune_allocator() {
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  mallopt(M_TOP_PAD, 256 << 20);
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"Replay-attack countermeasure toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", rcm_version());

  // simulate
  std::string sim_out;
  int sim_sources = 10;
  int sim_utts = 6;
  std::uint64_t sim_seed = 0;
  std::string sim_config;
  int sim_jobs = 1;
  auto* simulate = app.add_subcommand("simulate", "Generate a synthetic replay corpus");
  simulate->add_option("--out", sim_out, "Output directory (must not exist or be empty)")->required();
  simulate->add_option("--sources", sim_sources, "Number of source speakers")->check(CLI::PositiveNumber);
  simulate->add_option("--utts", sim_utts, "Utterances per source")->check(CLI::PositiveNumber);
  simulate->add_option("--seed", sim_seed, "Random seed");
  simulate->add_option("--config", sim_config, "Experiment config ([sim] and [corpus])")->check(CLI::ExistingFile);
  simulate->add_option("--jobs", sim_jobs, "Worker threads")->check(CLI::PositiveNumber);

  // extract
  std::string ex_feature;
  std::string ex_protocol;
  std::string ex_wav_dir;
  std::string ex_out;
  std::optional<double> ex_rho;
  std::optional<double> ex_lambda;
  std::string ex_config;
  int ex_jobs = 1;
  auto* extract = app.add_subcommand("extract", "Compute feature grams for a protocol");
  extract->add_option("--feature", ex_feature, "Feature kind")
      ->required()
      ->check(CLI::IsMember({"stft", "mgd", "cqt", "gd"}));
  extract->add_option("--protocol", ex_protocol, "Protocol file")->required();
  extract->add_option("--wav-dir", ex_wav_dir, "Directory of <utt_id>.wav files")->required();
  extract->add_option("--out", ex_out, "Output directory for gram files")->required();
  extract->add_option("--rho", ex_rho, "MGD rho");
  extract->add_option("--lambda", ex_lambda, "MGD lambda");
  extract->add_option("--config", ex_config, "Experiment config ([features])")->check(CLI::ExistingFile);
  extract->add_option("--jobs", ex_jobs, "Worker threads")->check(CLI::PositiveNumber);

  // train
  std::string tr_feature_dir;
  std::string tr_protocol_train;
  std::string tr_protocol_dev;
  std::string tr_objective;
  std::optional<double> tr_gamma;
  std::string tr_config;
  std::string tr_out;
  std::string tr_log;
  std::optional<std::uint64_t> tr_seed;
  int tr_jobs = 1;
  auto* train = app.add_subcommand("train", "Train the countermeasure network");
  train->add_option("--feature-dir", tr_feature_dir, "Directory of gram files")->required();
  train->add_option("--protocol-train", tr_protocol_train, "Training protocol")->required();
  train->add_option("--protocol-dev", tr_protocol_dev, "Development protocol")->required();
  train->add_option("--objective", tr_objective, "Training objective")->check(CLI::IsMember({"bce", "bfl"}));
  train->add_option("--gamma", tr_gamma, "Focusing parameter");
  train->add_option("--config", tr_config, "Experiment config")->check(CLI::ExistingFile);
  train->add_option("--out", tr_out, "Checkpoint path")->required();
  train->add_option("--log", tr_log, "Training log (default <out>.log)");
  train->add_option("--seed", tr_seed, "Random seed (overrides [train] seed)");
  train->add_option("--jobs", tr_jobs, "Feature loading threads")->check(CLI::PositiveNumber);

  // score
  std::string sc_ckpt;
  std::string sc_feature_dir;
  std::string sc_protocol;
  std::string sc_out;
  int sc_jobs = 1;
  auto* score = app.add_subcommand("score", "Score a protocol with a trained checkpoint");
  score->add_option("--ckpt", sc_ckpt, "Checkpoint")->required();
  score->add_option("--feature-dir", sc_feature_dir, "Directory of gram files")->required();
  score->add_option("--protocol", sc_protocol, "Protocol file")->required();
  score->add_option("--out", sc_out, "Score file")->required();
  score->add_option("--jobs", sc_jobs, "Feature loading threads")->check(CLI::PositiveNumber);

  // fuse
  std::string fu_method;
  std::vector<std::string> fu_scores;
  std::vector<std::string> fu_dev_scores;
  std::string fu_dev_protocol;
  std::string fu_out;
  std::string fu_model_out;
  auto* fuse = app.add_subcommand("fuse", "Fuse score files");
  fuse->add_option("--method", fu_method, "Fusion method")->required()->check(CLI::IsMember({"mean", "lr"}));
  fuse->add_option("--scores", fu_scores, "Score files to fuse")->required();
  fuse->add_option("--dev-scores", fu_dev_scores, "Dev score files, same system order (lr)");
  fuse->add_option("--dev-protocol", fu_dev_protocol, "Dev protocol (lr)");
  fuse->add_option("--out", fu_out, "Fused score file")->required();
  fuse->add_option("--model-out", fu_model_out, "Write the fusion model here");

  // evaluate
  std::string ev_scores;
  std::string ev_protocol;
  std::string ev_tdcf;
  auto* evaluate = app.add_subcommand("evaluate", "Print EER and normalized min t-DCF");
  evaluate->add_option("--scores", ev_scores, "Score file")->required();
  evaluate->add_option("--protocol", ev_protocol, "Protocol file")->required();
  evaluate->add_option("--tdcf-config", ev_tdcf, "Config with a [tdcf] section")->check(CLI::ExistingFile);

  // breakdown
  std::string bd_scores;
  std::string bd_protocol;
  std::string bd_tdcf;
  std::string bd_out;
  auto* breakdown = app.add_subcommand("breakdown", "Per-attack-code EER and min t-DCF table");
  breakdown->add_option("--scores", bd_scores, "Score file")->required();
  breakdown->add_option("--protocol", bd_protocol, "Protocol file")->required();
  breakdown->add_option("--tdcf-config", bd_tdcf, "Config with a [tdcf] section")->check(CLI::ExistingFile);
  breakdown->add_option("--out", bd_out, "Also write the table here");

  // saliency
  std::string sa_ckpt;
  std::string sa_feature;
  std::string sa_out;
  std::string sa_class = "bonafide";
  auto* saliency = app.add_subcommand("saliency", "Input-gradient saliency of one gram");
  saliency->add_option("--ckpt", sa_ckpt, "Checkpoint")->required();
  saliency->add_option("--feature", sa_feature, "Gram file")->required();
  saliency->add_option("--out", sa_out, "Output gram file")->required();
  saliency->add_option("--class", sa_class, "Class whose log-probability is differentiated")
      ->check(CLI::IsMember({"bonafide", "spoof"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error parameter: " << one_line(e.what()) << '\n';
    return 1;
  }

  try {
    if (*simulate) {
      auto cfg = load_config(sim_config);
      check(rcm_simulate(sim_out.c_str(), sim_sources, sim_utts, sim_seed, cfg.get(), sim_jobs));
    } else if (*extract) {
      auto cfg = load_config(ex_config);
      set(cfg.get(), "features", "kind", ex_feature);
      if (ex_rho) set(cfg.get(), "features", "mgd_rho", shortest(*ex_rho));
      if (ex_lambda) set(cfg.get(), "features", "mgd_lambda", shortest(*ex_lambda));
      check(rcm_extract(ex_protocol.c_str(), ex_wav_dir.c_str(), ex_out.c_str(), cfg.get(), ex_jobs));
    } else if (*train) {
      auto cfg = load_config(tr_config);
      if (!tr_objective.empty()) set(cfg.get(), "train", "objective", tr_objective);
      if (tr_gamma) set(cfg.get(), "train", "gamma", shortest(*tr_gamma));
      if (tr_seed) set(cfg.get(), "train", "seed", std::to_string(*tr_seed));
      const std::string log = tr_log.empty() ? tr_out + ".log" : tr_log;
      check(rcm_train(tr_feature_dir.c_str(), tr_protocol_train.c_str(), tr_protocol_dev.c_str(), cfg.get(),
                      tr_out.c_str(), log.c_str(), tr_jobs));
    } else if (*score) {
      rcm_model* m = nullptr;
      check(rcm_model_load(sc_ckpt.c_str(), &m));
      ModelPtr model(m);
      rcm_scores* s = nullptr;
      check(rcm_model_score(model.get(), sc_feature_dir.c_str(), sc_protocol.c_str(), sc_jobs, &s));
      ScoresPtr scores(s);
      check(rcm_scores_write(scores.get(), sc_out.c_str()));
    } else if (*fuse) {
      auto systems = read_all(fu_scores);
      const auto sys = raw(systems);
      rcm_scores* fused = nullptr;
      if (fu_method == "mean") {
        check(rcm_fuse_mean(sys.data(), sys.size(), &fused));
      } else {
        if (fu_dev_scores.size() != fu_scores.size()) {
          usage_error("lr fusion needs one --dev-scores file per --scores file");
        }
        if (fu_dev_protocol.empty()) usage_error("lr fusion needs --dev-protocol");
        auto dev = read_all(fu_dev_scores);
        for (auto& d : dev) check(rcm_scores_attach_protocol(d.get(), fu_dev_protocol.c_str()));
        const auto dev_raw = raw(dev);
        rcm_fusion* f = nullptr;
        check(rcm_fusion_train_lr(dev_raw.data(), dev_raw.size(), &f));
        FusionPtr fusion(f);
        if (!fu_model_out.empty()) check(rcm_fusion_write(fusion.get(), fu_model_out.c_str()));
        check(rcm_fusion_apply(fusion.get(), sys.data(), sys.size(), &fused));
      }
      ScoresPtr out(fused);
      check(rcm_scores_write(out.get(), fu_out.c_str()));
    } else if (*evaluate) {
      auto cfg = load_config(ev_tdcf);
      auto scores = read_scores(ev_scores);
      check(rcm_scores_attach_protocol(scores.get(), ev_protocol.c_str()));
      rcm_metrics metrics{};
      check(rcm_evaluate(scores.get(), cfg.get(), &metrics));
      char* line = nullptr;
      check(rcm_metrics_format(&metrics, &line));
      StringPtr owned(line);
      std::cout << line << '\n';
    } else if (*breakdown) {
      auto cfg = load_config(bd_tdcf);
      auto scores = read_scores(bd_scores);
      check(rcm_scores_attach_protocol(scores.get(), bd_protocol.c_str()));
      char* table = nullptr;
      check(rcm_breakdown(scores.get(), cfg.get(), &table));
      StringPtr owned(table);
      std::cout << table;
      if (!bd_out.empty()) write_text(bd_out, table);
    } else if (*saliency) {
      rcm_model* m = nullptr;
      check(rcm_model_load(sa_ckpt.c_str(), &m));
      ModelPtr model(m);
      check(rcm_model_saliency(model.get(), sa_feature.c_str(), sa_class == "bonafide" ? 0 : 1, sa_out.c_str()));
    }
  } catch (const ApiFailure& f) {
    std::cerr << "error " << rcm_status_name(f.status) << ": " << one_line(f.message) << '\n';
    return 1;
  }
  return 0;
}
