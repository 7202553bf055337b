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

#include <doctest.h>

#include <filesystem>
#include <vector>

#include "config.hpp"
#include "errors.hpp"
#include "pipeline.hpp"
#include "replay_sim.hpp"
#include "test_util.hpp"
#include "tiny_config.hpp"

using namespace replaycm;
using replaycm::testing::slurp;
using replaycm::testing::spit;
using replaycm::testing::TempDir;

namespace {

ErrorCategory category_of(const auto& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.category();
  }
  return ErrorCategory::kInternal;
}

}  // namespace

TEST_CASE("default config round trips through its text form") {
  const ExperimentConfig defaults;
  const std::string text = format_config(defaults);
  CHECK(format_config(parse_config(text)) == text);
  CHECK(defaults.model.scale == 4);
  CHECK(defaults.train.weight_decay == 5e-5);
  CHECK(defaults.train.plateau_patience == 3);
  CHECK(defaults.train.gamma == 2.0);
}

TEST_CASE("shipped default config equals the built-in defaults") {
  const auto path = std::filesystem::path(REPLAYCM_SOURCE_DIR) / "configs" / "default.ini";
  CHECK(format_config(load_config(path)) == format_config(ExperimentConfig{}));
}

TEST_CASE("config values are applied") {
  const ExperimentConfig cfg = parse_config(
      "[features]\nkind = mgd\nmgd_rho = 0.4\n[model]\nblock_counts = 1, 2\n[train]\nalpha = 2, 0.5\n"
      "objective = bce\n[tdcf]\np_spoof = 0.1\np_tar = 0.891\np_non = 0.009\n[sim]\ndistance_b = 0.5, 0.3, 8\n[corpus]\nsplit_ratios = 0.5, "
      "0.25, 0.25\n");
  CHECK(cfg.features.kind == FeatureKind::kMgd);
  CHECK(cfg.features.mgd.rho == 0.4);
  CHECK(cfg.model.block_counts == std::vector<std::size_t>{1, 2});
  REQUIRE(cfg.train.alpha.has_value());
  CHECK(cfg.train.alpha->alpha_bonafide == 2.0);
  CHECK(cfg.train.alpha->alpha_spoof == 0.5);
  CHECK(cfg.train.objective == Objective::kBce);
  CHECK(cfg.tdcf.p_spoof == 0.1);
  CHECK(cfg.corpus.sim.distance[1].rt60 == 0.3);
  CHECK(cfg.corpus.split_ratios[0] == 0.5);
}

TEST_CASE("config errors") {
  CHECK(category_of([] { parse_config("[nope]\nx = 1\n"); }) == ErrorCategory::kParse);
  CHECK(category_of([] { parse_config("[train]\nlearning_rate = 1\n"); }) == ErrorCategory::kParse);
  CHECK(category_of([] { parse_config("[train]\nlr = fast\n"); }) == ErrorCategory::kParse);
  CHECK(category_of([] { parse_config("[train]\nlr = -1\n"); }) == ErrorCategory::kParameter);
  CHECK(category_of([] { parse_config("[features]\nn_fft = 64\nframe_len = 128\n"); }) ==
        ErrorCategory::kParameter);
  CHECK(category_of([] { load_config("/nonexistent/config.ini"); }) == ErrorCategory::kIo);
  ExperimentConfig cfg;
  set_config_value(cfg, "train", "seed", "17");
  CHECK(cfg.train.seed == 17);
  CHECK(category_of([&] { set_config_value(cfg, "train", "seed", "x"); }) == ErrorCategory::kParse);
}

TEST_CASE("tiny pipeline: extract, train, score") {
  TempDir dir("pipe");
  const ExperimentConfig cfg = parse_config(replaycm::testing::kTinyConfig);
  CorpusOptions opts = cfg.corpus;
  opts.n_sources = 5;
  opts.utts_per_source = 2;
  opts.seed = 3;
  generate_corpus(dir / "corpus", opts);
  const auto train = read_protocol(protocol_path(dir / "corpus", Split::kTrain));
  const auto dev = read_protocol(protocol_path(dir / "corpus", Split::kDev));
  extract_corpus(train, dir / "corpus" / "wav", dir / "feat", cfg.features, 1);
  extract_corpus(dev, dir / "corpus" / "wav", dir / "feat", cfg.features, 2);
  const FeatureManifest manifest = read_feature_manifest(dir / "feat");
  CHECK(manifest.size() == train.size() + dev.size());

  const auto examples = load_examples(dir / "feat", dev, 2);
  REQUIRE(examples.size() == dev.size());
  CHECK(examples[0].gram.n_bins == 65);
  CHECK(examples[0].gram.n_frames == 32);

  TrainJob job{dir / "feat", protocol_path(dir / "corpus", Split::kTrain),
               protocol_path(dir / "corpus", Split::kDev), dir / "m.ckpt", dir / "m.log", cfg, 1};
  const TrainResult r = run_training(job);
  CHECK(r.log.size() == 2);
  const std::string log = slurp(dir / "m.log");
  CHECK(std::count(log.begin(), log.end(), '\n') == 2);
  CHECK(log.rfind("1 ", 0) == 0);

  ResNet model = load_checkpoint(dir / "m.ckpt");
  const ScoreSet scores = score_corpus(model, dir / "feat", dev, 1);
  REQUIRE(scores.size() == dev.size());
  for (std::size_t i = 0; i < dev.size(); ++i) {
    CHECK(scores[i].utt_id == dev[i].utt_id);
    CHECK(scores[i].label == dev[i].label());
  }

  const FeatureGram sal = saliency_gram(model, examples[0].gram, kBonafideClass);
  CHECK(sal.n_bins == examples[0].gram.n_bins);
  CHECK(sal.n_frames == examples[0].gram.n_frames);
  for (double v : sal.data) CHECK(v >= 0.0);

  // Same job again reproduces the log byte for byte.
  job.checkpoint = dir / "m2.ckpt";
  job.log = dir / "m2.log";
  run_training(job);
  CHECK(slurp(dir / "m2.log") == log);
  CHECK(slurp(dir / "m2.ckpt") == slurp(dir / "m.ckpt"));
}

TEST_CASE("a missing feature file is a data error naming the utterance") {
  TempDir dir("pipe_missing");
  const ExperimentConfig cfg = parse_config(replaycm::testing::kTinyConfig);
  CorpusOptions opts = cfg.corpus;
  opts.n_sources = 5;
  opts.utts_per_source = 1;
  generate_corpus(dir / "corpus", opts);
  auto dev = read_protocol(protocol_path(dir / "corpus", Split::kDev));
  extract_corpus(dev, dir / "corpus" / "wav", dir / "feat", cfg.features, 1);
  const std::string victim = dev.back().utt_id;
  std::filesystem::remove(dir / "feat" / (victim + ".fgrm"));
  try {
    load_examples(dir / "feat", dev, 1);
    FAIL("expected a data error");
  } catch (const Error& e) {
    CHECK(e.category() == ErrorCategory::kData);
    CHECK(std::string(e.what()).find(victim) != std::string::npos);
  }
}

TEST_CASE("extraction with a missing wav is an io error") {
  TempDir dir("pipe_nowav");
  const std::vector<ProtocolEntry> proto{{"ghost", std::nullopt}};
  CHECK(category_of([&] { extract_corpus(proto, dir.path(), dir / "feat", FeatureSettings{}, 1); }) ==
        ErrorCategory::kIo);
}
