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
#include <string>

#include "features.hpp"
#include "metrics.hpp"
#include "model.hpp"
#include "replay_sim.hpp"

namespace replaycm {

// Everything an experiment reads from its INI file. Sections: [features],
// [model], [train], [tdcf], [sim], [corpus].
struct ExperimentConfig {
  FeatureSettings features;
  ResNetConfig model;
  TrainConfig train;
  TdcfParams tdcf;
  CorpusOptions corpus;

  ExperimentConfig();
  void validate() const;
};

// Starts from the built-in defaults and applies every key of the file.
// Unknown sections or keys and malformed values raise kParse.
ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig parse_config(const std::string& text);

// Applies one "section.key = value" override.
void set_config_value(ExperimentConfig& cfg, const std::string& section, const std::string& key,
                      const std::string& value);

std::string format_config(const ExperimentConfig& cfg);

}  // namespace replaycm
