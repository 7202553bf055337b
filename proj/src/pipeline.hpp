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

#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "config.hpp"
#include "protocol.hpp"
#include "scoring.hpp"

namespace replaycm {

// utt_id -> gram file, stored as "<utt_id> <relative path>" lines in
// <feature_dir>/manifest.txt.
using FeatureManifest = std::map<std::string, std::filesystem::path>;

inline constexpr const char* kFeatureManifestName = "manifest.txt";

void write_feature_manifest(const std::filesystem::path& feature_dir, const std::vector<ProtocolEntry>& entries,
                            const std::filesystem::path& relative_dir = {});
FeatureManifest read_feature_manifest(const std::filesystem::path& feature_dir);

// Reads <wav_dir>/<utt_id>.wav for every protocol entry and writes
// <out_dir>/<utt_id>.fgrm plus the manifest.
void extract_corpus(const std::vector<ProtocolEntry>& protocol, const std::filesystem::path& wav_dir,
                    const std::filesystem::path& out_dir, const FeatureSettings& settings, int jobs);

// Loads the gram of every protocol entry; a missing file raises kData naming
// the utterance.
std::vector<Example> load_examples(const std::filesystem::path& feature_dir,
                                   const std::vector<ProtocolEntry>& protocol, int jobs);

struct TrainJob {
  std::filesystem::path feature_dir;
  std::filesystem::path protocol_train;
  std::filesystem::path protocol_dev;
  std::filesystem::path checkpoint;
  std::filesystem::path log;
  ExperimentConfig config;
  int jobs = 1;
};

// Trains, writes the best-dev checkpoint and one `epoch train_loss dev_eer lr`
// line per epoch.
TrainResult run_training(const TrainJob& job);

// Scores every protocol entry in protocol order.
ScoreSet score_corpus(ResNet& model, const std::filesystem::path& feature_dir,
                      const std::vector<ProtocolEntry>& protocol, int jobs);

// |d log p(class) / d input| of one gram, in the gram's own layout.
FeatureGram saliency_gram(ResNet& model, const FeatureGram& gram, std::size_t target_class);

}  // namespace replaycm
