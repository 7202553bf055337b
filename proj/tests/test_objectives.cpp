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

#include <cmath>
#include <numbers>
#include <vector>

#include "errors.hpp"
#include "gradcheck.hpp"
#include "objectives.hpp"
#include "rng.hpp"

using namespace replaycm;

namespace {

std::vector<double> two_class(double p_bonafide) { return {std::log(p_bonafide), std::log1p(-p_bonafide)}; }

ErrorCategory category_of(const auto& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.category();
  }
  return ErrorCategory::kInternal;
}

// Independent oracle straight from the definition on probabilities.
double bfl_oracle(double p_t, double alpha, double gamma) { return -alpha * std::pow(1.0 - p_t, gamma) * std::log(p_t); }

}  // namespace

TEST_CASE("bce values") {
  const ClassWeights unit = ClassWeights::explicit_weights(1.0, 1.0);
  CHECK(bce(std::vector<double>{0.0, -INFINITY}, kBonafideClass, unit) == 0.0);
  CHECK(bce(two_class(0.5), kBonafideClass, unit) == doctest::Approx(std::numbers::ln2).epsilon(1e-15));
  const ClassWeights twice = ClassWeights::explicit_weights(2.0, 1.0);
  CHECK(bce(two_class(0.3), kBonafideClass, twice) == 2.0 * bce(two_class(0.3), kBonafideClass, unit));
}

TEST_CASE("alpha scales the batch gradient exactly") {
  const std::vector<std::size_t> targets{0};
  auto grad_for = [&](double alpha) {
    Tensor logits = Tensor::from({1, 2}, {0.3, -0.4}, true);
    GradTape tape;
    TapeScope scope(tape);
    tape.backward(focal_loss(ops::log_softmax(logits), targets, ClassWeights::explicit_weights(alpha, 1.0), 0.0));
    return std::vector<double>(logits.grad().begin(), logits.grad().end());
  };
  const auto g1 = grad_for(1.0);
  const auto g2 = grad_for(2.0);
  for (std::size_t i = 0; i < 2; ++i) CHECK(g2[i] == 2.0 * g1[i]);
}

TEST_CASE("bfl values") {
  const ClassWeights unit = ClassWeights::explicit_weights(1.0, 1.0);
  CHECK(bfl(two_class(0.5), kBonafideClass, unit, 2.0) == doctest::Approx(0.25 * std::numbers::ln2).epsilon(1e-14));
  CHECK(bfl(two_class(0.5), kBonafideClass, unit, 2.0) == doctest::Approx(0.17329).epsilon(1e-4));
  CHECK(bfl(std::vector<double>{0.0, -INFINITY}, kBonafideClass, unit, 2.0) == 0.0);
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    const double p = rng.uniform(0.001, 0.999);
    const auto lp = two_class(p);
    CHECK(std::abs(bfl(lp, kBonafideClass, unit, 0.0) - bce(lp, kBonafideClass, unit)) <= 1e-12);
    CHECK(bfl(lp, kSpoofClass, unit, 1.5) == doctest::Approx(bfl_oracle(1.0 - p, 1.0, 1.5)).epsilon(1e-10));
  }
}

TEST_CASE("unnormalized log-probabilities are rejected") {
  const ClassWeights unit = ClassWeights::explicit_weights(1.0, 1.0);
  const std::vector<double> bad{std::log(0.5), std::log(0.6)};
  CHECK(category_of([&] { bce(bad, 0, unit); }) == ErrorCategory::kContract);
  CHECK(category_of([&] { bfl(bad, 0, unit, 2.0); }) == ErrorCategory::kContract);
  CHECK(category_of([&] { bfl(two_class(0.5), 0, unit, -1.0); }) == ErrorCategory::kParameter);
}

TEST_CASE("confident samples contribute neither loss nor gradient under bfl") {
  Tensor logits = Tensor::from({1, 2}, {0.0, -800.0}, true);
  const std::vector<std::size_t> targets{kBonafideClass};
  GradTape tape;
  TapeScope scope(tape);
  const Tensor loss = focal_loss(ops::log_softmax(logits), targets, ClassWeights::explicit_weights(1.0, 1.0), 2.0);
  CHECK(loss.item() == 0.0);
  tape.backward(loss);
  for (double g : logits.grad()) CHECK(g == 0.0);
}

TEST_CASE("loss ratio") {
  CHECK(loss_ratio(0.9, 2.0) == doctest::Approx(0.01).epsilon(1e-12));
  CHECK(loss_ratio(1e-9, 2.0) == doctest::Approx(1.0).epsilon(1e-8));
  for (double p : {0.1, 0.5, 0.99}) CHECK(loss_ratio(p, 0.0) == 1.0);
  CHECK(category_of([] { loss_ratio(0.0, 2.0); }) == ErrorCategory::kParameter);
  CHECK(category_of([] { loss_ratio(1.0, 2.0); }) == ErrorCategory::kParameter);
  CHECK(category_of([] { loss_ratio(1.5, 2.0); }) == ErrorCategory::kParameter);
}

TEST_CASE("bfl decreases in p_t and stays below bce") {
  const ClassWeights unit = ClassWeights::explicit_weights(1.0, 1.0);
  for (double gamma : {0.5, 1.0, 2.0, 5.0}) {
    double previous = INFINITY;
    for (int i = 1; i < 1000; ++i) {
      const double p = i / 1000.0;
      const auto lp = two_class(p);
      const double focal = bfl(lp, kBonafideClass, unit, gamma);
      CHECK(focal < previous);
      CHECK(focal < bce(lp, kBonafideClass, unit));
      previous = focal;
    }
  }
}

TEST_CASE("bfl focuses on hard samples") {
  const ClassWeights unit = ClassWeights::explicit_weights(1.0, 1.0);
  const double bce_ratio = bce(two_class(0.6), 0, unit) / bce(two_class(0.99), 0, unit);
  const double bfl_ratio = bfl(two_class(0.6), 0, unit, 2.0) / bfl(two_class(0.99), 0, unit, 2.0);
  CHECK(bfl_ratio / bce_ratio > 100.0);
  CHECK(bfl_ratio / bce_ratio == doctest::Approx(0.16 / 1e-4).epsilon(1e-9));
}

TEST_CASE("batch focal loss gradient matches finite differences of the logits") {
  Rng rng(17);
  for (double gamma : {0.0, 0.5, 1.0, 2.0, 5.0}) {
    for (int trial = 0; trial < 10; ++trial) {
      const std::size_t n = 1 + rng.below(4);
      std::vector<std::size_t> targets(n);
      for (auto& t : targets) t = rng.below(2);
      const ClassWeights w = ClassWeights::explicit_weights(rng.uniform(0.2, 3.0), rng.uniform(0.2, 3.0));
      const auto r = replaycm::testing::grad_check(
          [&](const auto& in) { return focal_loss(ops::log_softmax(in[0]), targets, w, gamma); },
          {replaycm::testing::random_tensor({n, 2}, rng, -3.0, 3.0)}, 1e-4);
      CAPTURE(gamma);
      CHECK(r.max_rel_error < 1e-4);
    }
  }
}

TEST_CASE("batch focal loss is the mean of single-sample losses") {
  Rng rng(5);
  const Tensor logits = replaycm::testing::random_tensor({5, 2}, rng, -2.0, 2.0);
  const std::vector<std::size_t> targets{0, 1, 1, 0, 1};
  const ClassWeights w = ClassWeights::explicit_weights(1.7, 0.6);
  const Tensor lp = ops::log_softmax(logits);
  const double batch = focal_loss(lp, targets, w, 2.0).item();
  double expected = 0.0;
  for (std::size_t i = 0; i < 5; ++i) expected += bfl(lp.values().subspan(2 * i, 2), targets[i], w, 2.0);
  CHECK(batch == doctest::Approx(expected / 5.0).epsilon(1e-12));
}

TEST_CASE("inverse-frequency weights average to one") {
  const ClassWeights w = ClassWeights::inverse_frequency(60, 540);
  CHECK(w.mode == ClassWeights::Mode::kAutoInverseFrequency);
  CHECK(w.alpha_bonafide / w.alpha_spoof == doctest::Approx(9.0));
  CHECK((60 * w.alpha_bonafide + 540 * w.alpha_spoof) / 600.0 == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(category_of([] { ClassWeights::inverse_frequency(0, 3); }) == ErrorCategory::kParameter);
}

TEST_CASE("objective names") {
  CHECK(parse_objective("bce") == Objective::kBce);
  CHECK(parse_objective("bfl") == Objective::kBfl);
  CHECK(objective_name(Objective::kBfl) == "bfl");
  CHECK(category_of([] { parse_objective("mse"); }) == ErrorCategory::kParameter);
}
