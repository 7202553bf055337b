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
#include "model.hpp"
#include "rng.hpp"
#include "test_util.hpp"

using namespace replaycm;

namespace {

ErrorCategory category_of(const auto& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.category();
  }
  return ErrorCategory::kInternal;
}

ResNetConfig toy_config(std::size_t bins = 12, std::size_t frames = 10) {
  ResNetConfig cfg;
  cfg.block_counts = {1, 1, 1, 1};
  cfg.scale = 4;
  cfg.fc_width = 8;
  cfg.input_bins = bins;
  cfg.input_frames = frames;
  return cfg;
}

FeatureGram noise_gram(Rng& rng, std::size_t bins, std::size_t frames, double offset, const std::string& id) {
  FeatureGram g;
  g.n_bins = bins;
  g.n_frames = frames;
  g.utt_id = id;
  for (std::size_t i = 0; i < bins * frames; ++i) g.data.push_back(offset + rng.normal(0.0, 1.0));
  return g;
}

std::vector<Example> toy_examples(std::uint64_t seed, std::size_t n_bona, std::size_t n_spoof, double separation,
                                  std::size_t bins = 12, std::size_t frames = 10) {
  Rng rng(seed);
  std::vector<Example> out;
  for (std::size_t i = 0; i < n_bona + n_spoof; ++i) {
    const bool bona = i < n_bona;
    out.push_back({noise_gram(rng, bins, frames, bona ? separation : -separation, "u" + std::to_string(i)),
                   bona ? kBonafideClass : kSpoofClass});
  }
  return out;
}

std::size_t sum_weights(const std::vector<NamedTensor>& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.tensor.numel();
  return n;
}

}  // namespace

TEST_CASE("Table I output shapes at scale 1") {
  const auto layers = summarize(ResNetConfig{});
  auto find = [&](const std::string& name) -> const LayerSummary& {
    for (const auto& l : layers)
      if (l.name == name) return l;
    FAIL("missing layer " << name);
    return layers.front();
  };
  CHECK(find("conv1").output_shape == Shape{16, 513, 500});
  CHECK(find("maxpool").output_shape == Shape{16, 513, 500});
  CHECK(find("resblock1.3").output_shape == Shape{16, 513, 500});
  CHECK(find("resblock2.4").output_shape == Shape{32, 257, 250});
  CHECK(find("resblock3.6").output_shape == Shape{64, 129, 125});
  CHECK(find("resblock4.3").output_shape == Shape{128, 65, 63});
  CHECK(find("gap").output_shape == Shape{128});
  CHECK(find("fc").output_shape == Shape{32});
  CHECK(find("output").output_shape == Shape{2});
}

TEST_CASE("Table I parameter counts at scale 1") {
  const auto layers = summarize(ResNetConfig{});
  auto find = [&](const std::string& name) {
    for (const auto& l : layers)
      if (l.name == name) return l;
    return LayerSummary{};
  };
  CHECK(find("conv1").weight_params == 144);
  CHECK(find("output").weight_params == 66);
  CHECK(find("fc").weight_params == 4128);
  // Blocks that keep their width; Table I prints 4.6k, 18.4k, 73.7k, 295.0k.
  CHECK(find("resblock1.2").weight_params == 4608);
  CHECK(find("resblock2.2").weight_params == 18432);
  CHECK(find("resblock3.2").weight_params == 73728);
  CHECK(find("resblock4.2").weight_params == 294912);
  CHECK(find("resblock1.1").shortcut_params == 0);
  CHECK(find("resblock2.1").shortcut_params == 16 * 32);
  CHECK(find("resblock2.1").weight_params == 9 * 16 * 32 + 9 * 32 * 32);
}

TEST_CASE("summary totals match the constructed network") {
  for (std::size_t scale : {1u, 4u}) {
    ResNetConfig cfg;
    cfg.scale = scale;
    cfg.input_bins = 33;
    cfg.input_frames = 20;
    std::size_t total = 0;
    for (const auto& l : summarize(cfg)) total += l.weight_params + l.shortcut_params + l.norm_params;
    const ResNet net(cfg, 1);
    CHECK(net.parameter_count() == total);
    CHECK(sum_weights(net.parameters()) == total);
  }
}

TEST_CASE("forward trace follows the summary shapes") {
  ResNetConfig cfg;
  cfg.scale = 4;
  cfg.input_bins = 33;
  cfg.input_frames = 21;
  ResNet net(cfg, 3);
  std::vector<Shape> trace;
  const Tensor lp = net.forward(Tensor::zeros({2, 1, 33, 21}), false, &trace);
  const auto layers = summarize(cfg);
  REQUIRE(trace.size() == layers.size());
  for (std::size_t i = 0; i < layers.size(); ++i) {
    CAPTURE(layers[i].name);
    CHECK(trace[i] == layers[i].output_shape);
  }
  CHECK(lp.shape() == Shape{2, 2});
}

TEST_CASE("zero input gives normalized finite log-probabilities") {
  ResNetConfig cfg;
  cfg.scale = 4;
  cfg.input_bins = 17;
  cfg.input_frames = 16;
  ResNet net(cfg, 9);
  const Tensor lp = net.forward(Tensor::zeros({1, 1, 17, 16}), false);
  CHECK(std::isfinite(lp.values()[0]));
  CHECK(std::isfinite(lp.values()[1]));
  CHECK(std::abs(std::exp(lp.values()[0]) + std::exp(lp.values()[1]) - 1.0) < 1e-6);
}

TEST_CASE("invalid configurations and input shapes") {
  ResNetConfig bad;
  bad.scale = 3;
  CHECK(category_of([&] { bad.validate(); }) == ErrorCategory::kParameter);
  bad = ResNetConfig{};
  bad.block_counts = {};
  CHECK(category_of([&] { ResNet(bad, 0); }) == ErrorCategory::kParameter);
  ResNet net(toy_config(), 0);
  CHECK(category_of([&] { net.forward(Tensor::zeros({1, 1, 11, 10}), false); }) == ErrorCategory::kShape);
}

TEST_CASE("same seed gives bit-identical networks and forwards") {
  ResNet a(toy_config(), 42), b(toy_config(), 42), c(toy_config(), 43);
  const auto pa = a.parameters(), pb = b.parameters(), pc = c.parameters();
  bool any_diff = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i].name == pb[i].name);
    for (std::size_t k = 0; k < pa[i].tensor.numel(); ++k) {
      CHECK(pa[i].tensor.values()[k] == pb[i].tensor.values()[k]);
      any_diff |= pa[i].tensor.values()[k] != pc[i].tensor.values()[k];
    }
  }
  CHECK(any_diff);
  Rng rng(1);
  const FeatureGram g = noise_gram(rng, 12, 10, 0.0, "x");
  CHECK(score_utterance(a, g) == score_utterance(b, g));
}

TEST_CASE("scores from log-probabilities") {
  CHECK(score_from_log_probs(std::vector<double>{std::log(0.5), std::log(0.5)}) == 0.0);
  CHECK(score_from_log_probs(std::vector<double>{std::log(0.9), std::log(0.1)}) ==
        doctest::Approx(std::log(9.0)).epsilon(1e-14));
  CHECK(score_from_log_probs(std::vector<double>{std::log(0.9), std::log(0.1)}) ==
        doctest::Approx(2.1972).epsilon(1e-4));
  Rng rng(2);
  for (int i = 0; i < 50; ++i) {
    const double a = rng.uniform(-5, 0), b = rng.uniform(-5, 0);
    CHECK(score_from_log_probs(std::vector<double>{a, b}) == -score_from_log_probs(std::vector<double>{b, a}));
  }
}

TEST_CASE("scores are monotone in the bonafide probability") {
  double previous = -INFINITY;
  for (int i = 1; i < 100; ++i) {
    const double p = i / 100.0;
    const double s = score_from_log_probs(std::vector<double>{std::log(p), std::log1p(-p)});
    CHECK(s > previous);
    previous = s;
  }
}

TEST_CASE("adamw single steps") {
  auto one_param = [](double value, double grad) {
    std::vector<NamedTensor> p{{"p", Tensor::from({1}, {value}, true)}};
    p[0].tensor.mutable_grad()[0] = grad;
    return p;
  };
  {
    auto p = one_param(0.7, 0.0);
    AdamWState st = AdamWState::zeros_like(p);
    adamw_step(p, st, {0.1, 0.9, 0.999, 1e-8, 0.0});
    CHECK(p[0].tensor.values()[0] == 0.7);
  }
  {
    auto p = one_param(1.0, 1.0);
    AdamWState st = AdamWState::zeros_like(p);
    adamw_step(p, st, {0.1, 0.9, 0.999, 1e-8, 0.0});
    CHECK(p[0].tensor.values()[0] == doctest::Approx(1.0 - 0.1 / (1.0 + 1e-8)).epsilon(1e-15));
    CHECK(p[0].tensor.values()[0] == doctest::Approx(0.9).epsilon(1e-7));
    CHECK(st.step == 1);
  }
  {
    auto p = one_param(3.0, 0.0);
    AdamWState st = AdamWState::zeros_like(p);
    adamw_step(p, st, {0.1, 0.9, 0.999, 1e-8, 0.1});
    CHECK(p[0].tensor.values()[0] == 3.0 * (1.0 - 0.01));
  }
  {
    auto p = one_param(1.0, NAN);
    p[0].name = "stage2.block1.conv1.weight";
    AdamWState st = AdamWState::zeros_like(p);
    try {
      adamw_step(p, st, {0.1, 0.9, 0.999, 1e-8, 0.0});
      FAIL("expected a training error");
    } catch (const Error& e) {
      CHECK(e.category() == ErrorCategory::kTraining);
      CHECK(std::string(e.what()).find("stage2.block1.conv1.weight") != std::string::npos);
    }
  }
}

TEST_CASE("adamw bias correction over two steps") {
  std::vector<NamedTensor> p{{"p", Tensor::from({1}, {0.0}, true)}};
  AdamWState st = AdamWState::zeros_like(p);
  const AdamWSettings s{0.01, 0.9, 0.999, 1e-8, 0.0};
  p[0].tensor.mutable_grad()[0] = 2.0;
  adamw_step(p, st, s);
  p[0].tensor.mutable_grad()[0] = -1.0;
  adamw_step(p, st, s);
  // Oracle: moments by hand.
  double m = 0.0, v = 0.0, x = 0.0;
  int t = 0;
  for (double g : {2.0, -1.0}) {
    ++t;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    x -= 0.01 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
  }
  CHECK(p[0].tensor.values()[0] == doctest::Approx(x).epsilon(1e-14));
}

TEST_CASE("plateau scheduler") {
  {
    PlateauScheduler s(1.0, 3, 0.1);
    for (double m : {1.0, 0.9, 0.8, 0.7, 0.6}) CHECK_FALSE(s.step(m));
    CHECK(s.lr() == 1.0);
  }
  {
    PlateauScheduler s(1.0, 3, 0.1);
    CHECK_FALSE(s.step(1.0));
    CHECK_FALSE(s.step(1.0));
    CHECK_FALSE(s.step(1.0));
    CHECK(s.step(1.0));
    CHECK(s.reductions() == 1);
    CHECK(s.lr() == doctest::Approx(0.1));
  }
  {
    PlateauScheduler s(1.0, 3, 0.1);
    for (int i = 0; i < 7; ++i) s.step(1.0);
    CHECK(s.reductions() == 2);
    CHECK(s.lr() == doctest::Approx(0.01));
  }
  {
    PlateauScheduler s(1.0, 3, 0.1);
    for (double m : {1.0, 1.0, 1.0, 0.5, 0.5, 0.5}) CHECK_FALSE(s.step(m));
  }
  CHECK(category_of([] { PlateauScheduler(1.0, 3, 1.0); }) == ErrorCategory::kParameter);
}

TEST_CASE("one small optimizer step lowers the loss on a frozen batch") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    CAPTURE(seed);
    ResNet net(toy_config(), seed);
    const auto examples = toy_examples(seed + 100, 3, 5, 0.3);
    std::vector<const FeatureGram*> grams;
    std::vector<std::size_t> targets;
    for (const auto& e : examples) {
      grams.push_back(&e.gram);
      targets.push_back(e.target);
    }
    const Tensor x = stack_grams(grams);
    const ClassWeights w = ClassWeights::inverse_frequency(3, 5);
    auto params = net.parameters();
    AdamWState st = AdamWState::zeros_like(params);
    double before = 0.0;
    {
      GradTape tape;
      TapeScope scope(tape);
      const Tensor loss = focal_loss(net.forward(x, true), targets, w, 2.0);
      before = loss.item();
      tape.backward(loss);
    }
    adamw_step(params, st, {1e-4, 0.9, 0.999, 1e-8, 5e-5});
    const double after = focal_loss(net.forward(x, true), targets, w, 2.0).item();
    CHECK(after < before);
  }
}

TEST_CASE("training config validation") {
  TrainConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.plateau_factor = 1.5;
  CHECK(category_of([&] { cfg.validate(); }) == ErrorCategory::kParameter);
  cfg = TrainConfig{};
  cfg.lr = 0.0;
  CHECK(category_of([&] { cfg.validate(); }) == ErrorCategory::kParameter);
  cfg = TrainConfig{};
  cfg.gamma = -1.0;
  CHECK(category_of([&] { cfg.validate(); }) == ErrorCategory::kParameter);
}

TEST_CASE("class-constant grams are separated within 30 epochs") {
  std::vector<Example> train, dev;
  for (int i = 0; i < 24; ++i) {
    const bool bona = i % 4 == 0;
    FeatureGram g;
    g.n_bins = 12;
    g.n_frames = 10;
    g.data.assign(120, bona ? 1.0 : -1.0);
    g.utt_id = "c" + std::to_string(i);
    (i < 16 ? train : dev).push_back({g, bona ? kBonafideClass : kSpoofClass});
  }
  ResNet net(toy_config(), 5);
  TrainConfig cfg;
  cfg.lr = 1e-3;
  cfg.batch_size = 8;
  cfg.max_epochs = 30;
  const TrainResult r = train_model(net, train, dev, cfg);
  CHECK(r.best_dev_eer == 0.0);
  CHECK(r.log.size() == 30);
}

TEST_CASE("training is deterministic and every loss is finite") {
  const auto train = toy_examples(7, 5, 15, 0.4);
  const auto dev = toy_examples(8, 4, 6, 0.4);
  TrainConfig cfg;
  cfg.lr = 1e-3;
  cfg.batch_size = 8;
  cfg.max_epochs = 2;
  cfg.seed = 11;
  std::vector<std::string> logs[2];
  std::vector<double> scores[2];
  for (int run = 0; run < 2; ++run) {
    ResNet net(toy_config(), 3);
    const TrainResult r =
        train_model(net, train, dev, cfg, [&](const EpochRecord& e) { logs[run].push_back(format_epoch_record(e)); });
    for (const auto& e : r.log) CHECK(std::isfinite(e.train_loss));
    for (const auto& e : dev) scores[run].push_back(score_utterance(net, e.gram));
  }
  CHECK(logs[0] == logs[1]);
  CHECK(scores[0] == scores[1]);
  CHECK(logs[0].size() == 2);
}

TEST_CASE("checkpoint round trip is bit-exact") {
  replaycm::testing::TempDir dir("ckpt");
  const auto train = toy_examples(1, 5, 15, 0.4);
  const auto dev = toy_examples(2, 4, 6, 0.4);
  ResNet net(toy_config(), 4);
  TrainConfig cfg;
  cfg.lr = 1e-3;
  cfg.batch_size = 8;
  cfg.max_epochs = 2;
  const TrainResult r = train_model(net, train, dev, cfg);
  save_checkpoint(dir / "m.ckpt", net, FeatureKind::kMgd, r.optimizer, r.lr);
  Checkpoint meta;
  ResNet loaded = load_checkpoint(dir / "m.ckpt", &meta);
  CHECK(meta.feature == FeatureKind::kMgd);
  CHECK(meta.lr == r.lr);
  CHECK(meta.optimizer.step == r.optimizer.step);
  CHECK(meta.optimizer.m == r.optimizer.m);
  CHECK(meta.optimizer.v == r.optimizer.v);
  CHECK(meta.model.block_counts == net.config().block_counts);
  auto compare = [](const std::vector<NamedTensor>& a, const std::vector<NamedTensor>& b) {
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].name == b[i].name);
      CHECK(std::equal(a[i].tensor.values().begin(), a[i].tensor.values().end(), b[i].tensor.values().begin()));
    }
  };
  compare(net.parameters(), loaded.parameters());
  compare(net.buffers(), loaded.buffers());
  for (const auto& e : dev) CHECK(score_utterance(net, e.gram) == score_utterance(loaded, e.gram));
}

TEST_CASE("damaged checkpoints are format errors") {
  replaycm::testing::TempDir dir("ckpt_bad");
  ResNet net(toy_config(), 4);
  save_checkpoint(dir / "m.ckpt", net, FeatureKind::kStft, AdamWState::zeros_like(net.parameters()), 1e-3);
  const std::string bytes = replaycm::testing::slurp(dir / "m.ckpt");
  replaycm::testing::spit(dir / "short.ckpt", bytes.substr(0, bytes.size() / 2));
  CHECK(category_of([&] { load_checkpoint(dir / "short.ckpt"); }) == ErrorCategory::kFormat);
  replaycm::testing::spit(dir / "magic.ckpt", "XXXX" + bytes.substr(4));
  CHECK(category_of([&] { load_checkpoint(dir / "magic.ckpt"); }) == ErrorCategory::kFormat);
  CHECK(category_of([&] { load_checkpoint(dir / "none.ckpt"); }) == ErrorCategory::kIo);
}
