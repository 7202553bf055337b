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

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "tensor.hpp"

namespace replaycm {

// Class indices used throughout: the network's first output is bonafide.
inline constexpr std::size_t kBonafideClass = 0;
inline constexpr std::size_t kSpoofClass = 1;

enum class Objective { kBce, kBfl };
std::string_view objective_name(Objective objective);
Objective parse_objective(std::string_view name);

struct ClassWeights {
  enum class Mode { kExplicit, kAutoInverseFrequency };

  double alpha_bonafide = 1.0;
  double alpha_spoof = 1.0;
  Mode mode = Mode::kExplicit;

  double alpha(std::size_t target) const { return target == kBonafideClass ? alpha_bonafide : alpha_spoof; }

  static ClassWeights explicit_weights(double bonafide, double spoof);
  // alpha_c proportional to 1 / count_c, scaled so the per-sample weights
  // average to 1 over the training set.
  static ClassWeights inverse_frequency(std::size_t n_bonafide, std::size_t n_spoof);
};

// Single-sample losses over normalized log-probabilities.
// Throws kContract when sum(exp(log_probs)) is not 1 within 1e-6.
double bce(std::span<const double> log_probs, std::size_t target, const ClassWeights& w);
double bfl(std::span<const double> log_probs, std::size_t target, const ClassWeights& w, double gamma);

// BFL / BCE = (1 - p_t)^gamma for p_t in (0, 1).
double loss_ratio(double p_t, double gamma);

// Batch objective on the tape: mean over samples of
// -alpha_t (1 - p_t)^gamma log p_t, with gamma = 0 giving BCE.
Tensor focal_loss(const Tensor& log_probs, std::span<const std::size_t> targets, const ClassWeights& w, double gamma);

Tensor objective_loss(Objective objective, const Tensor& log_probs, std::span<const std::size_t> targets,
                      const ClassWeights& w, double gamma);

}  // namespace replaycm
