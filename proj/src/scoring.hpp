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
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "protocol.hpp"

namespace replaycm {

struct ScoreRecord {
  std::string utt_id;
  double score = 0.0;
  std::optional<Label> label;
  std::optional<AttackSpec> attack;
};

using ScoreSet = std::vector<ScoreRecord>;

// Fixed six decimals, rounded half away from zero on the shortest decimal
// representation of the value. "-0.000000" is printed as "0.000000".
std::string format_score(double score);

// "<utt_id> <score>" per line.
void write_scores(const ScoreSet& scores, const std::filesystem::path& path);
ScoreSet read_scores(const std::filesystem::path& path);
ScoreSet parse_scores(std::string_view text);

// Copies label and attack code from the protocol onto each score. Both sides
// must cover the same utterances.
ScoreSet attach_protocol(const ScoreSet& scores, const std::vector<ProtocolEntry>& protocol);

// Per-utterance arithmetic mean; output follows the first set's order.
ScoreSet mean_fuse(std::span<const ScoreSet> systems);

struct FusionModel {
  enum class Kind { kMean, kLogistic };

  Kind kind = Kind::kMean;
  std::vector<double> weights;
  double bias = 0.0;

  static FusionModel mean(std::size_t n_systems);
  double fuse(std::span<const double> scores) const;
};

struct LogisticFusionOptions {
  double l2 = 1e-4;
  double gradient_tolerance = 1e-8;
  std::size_t max_iterations = 200;
};

// Fits w, b maximizing the mean log-likelihood of the labels under
// sigmoid(w.s + b), with (l2 / 2) |w|^2 on the weights only, by damped Newton
// iterations. Every dev score record must carry a label.
FusionModel lr_fuse_train(std::span<const ScoreSet> dev_systems, const LogisticFusionOptions& options = {});

ScoreSet apply_fusion(const FusionModel& model, std::span<const ScoreSet> systems);

void write_fusion_model(const FusionModel& model, const std::filesystem::path& path);
FusionModel read_fusion_model(const std::filesystem::path& path);

}  // namespace replaycm
