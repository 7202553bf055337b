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

#include "objectives.hpp"

#include <cmath>
#include <string>

#include "errors.hpp"

namespace replaycm {

namespace {

double target_log_prob(std::span<const double> log_probs, std::size_t target) {
  require(target < log_probs.size(), ErrorCategory::kParameter, "target class out of range");
  double total = 0.0;
  for (double lp : log_probs) {
    require(!std::isnan(lp) && lp <= 0.0, ErrorCategory::kContract, "log-probabilities must be <= 0");
    total += std::exp(lp);
  }
  require(std::abs(total - 1.0) <= 1e-6, ErrorCategory::kContract,
          "log-probabilities are not normalized (sum of probabilities " + std::to_string(total) + ")");
  return log_probs[target];
}

}  // namespace

std::string_view objective_name(Objective objective) { return objective == Objective::kBce ? "bce" : "bfl"; }

Objective parse_objective(std::string_view name) {
  if (name == "bce") return Objective::kBce;
  if (name == "bfl") return Objective::kBfl;
  fail(ErrorCategory::kParameter, "unknown objective '" + std::string(name) + "'");
}

ClassWeights ClassWeights::explicit_weights(double bonafide, double spoof) {
  require(bonafide > 0.0 && spoof > 0.0, ErrorCategory::kParameter, "class weights must be positive");
  return {bonafide, spoof, Mode::kExplicit};
}

ClassWeights ClassWeights::inverse_frequency(std::size_t n_bonafide, std::size_t n_spoof) {
  require(n_bonafide > 0 && n_spoof > 0, ErrorCategory::kParameter,
          "inverse-frequency weights need samples of both classes");
  const auto total = static_cast<double>(n_bonafide + n_spoof);
  return {total / (2.0 * static_cast<double>(n_bonafide)), total / (2.0 * static_cast<double>(n_spoof)),
          Mode::kAutoInverseFrequency};
}

double bce(std::span<const double> log_probs, std::size_t target, const ClassWeights& w) {
  return -w.alpha(target) * target_log_prob(log_probs, target);
}

double bfl(std::span<const double> log_probs, std::size_t target, const ClassWeights& w, double gamma) {
  require(gamma >= 0.0, ErrorCategory::kParameter, "focusing parameter gamma must be non-negative");
  const double lp = target_log_prob(log_probs, target);
  // (1 - p)^gamma from log p without cancellation near p = 1.
  const double modulation = std::pow(-std::expm1(lp), gamma);
  return -w.alpha(target) * modulation * lp;
}

double loss_ratio(double p_t, double gamma) {
  require(p_t > 0.0 && p_t < 1.0, ErrorCategory::kParameter, "p_t must lie in (0, 1)");
  require(gamma >= 0.0, ErrorCategory::kParameter, "focusing parameter gamma must be non-negative");
  return std::pow(1.0 - p_t, gamma);
}

Tensor focal_loss(const Tensor& log_probs, std::span<const std::size_t> targets, const ClassWeights& w,
                  double gamma) {
  Tensor lp = ops::gather_rows(log_probs, targets);
  std::vector<double> alphas(targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i) alphas[i] = -w.alpha(targets[i]);
  Tensor weighted = ops::mul(lp, Tensor::from({targets.size()}, std::move(alphas)));
  if (gamma != 0.0) weighted = ops::mul(ops::focal_modulation(lp, gamma), weighted);
  return ops::mean(weighted);
}

Tensor objective_loss(Objective objective, const Tensor& log_probs, std::span<const std::size_t> targets,
                      const ClassWeights& w, double gamma) {
  return focal_loss(log_probs, targets, w, objective == Objective::kBce ? 0.0 : gamma);
}

}  // namespace replaycm
