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

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "features.hpp"
#include "objectives.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace replaycm {

struct ResNetConfig {
  std::vector<std::size_t> block_counts{3, 4, 6, 3};
  std::size_t base_channels = 16;
  std::size_t fc_width = 32;
  std::size_t n_classes = 2;
  std::size_t input_bins = 513;
  std::size_t input_frames = kDefaultFrames;
  // Divides every convolution width; 4 gives 4/8/16/32 channels.
  std::size_t scale = 1;

  std::size_t stage_channels(std::size_t stage) const { return (base_channels << stage) / scale; }
  void validate() const;
};

struct LayerSummary {
  std::string name;
  Shape output_shape;  // without the batch axis
  // Convolution weights, plus weights and biases of fully connected layers.
  // Batch-norm affine terms and projection shortcuts are listed separately.
  std::size_t weight_params = 0;
  std::size_t shortcut_params = 0;
  std::size_t norm_params = 0;
};

// Layer-by-layer output shapes and parameter counts from the configuration
// alone (no forward pass).
std::vector<LayerSummary> summarize(const ResNetConfig& cfg);

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// Stem conv + BN + ReLU + 3x3/1 max-pool, four stages of basic residual
// blocks (stride-2 with 1x1 projection at each stage transition), global
// average pooling, a ReLU fully connected layer and the output layer.
class ResNet {
 public:
  ResNet(const ResNetConfig& cfg, std::uint64_t seed);

  const ResNetConfig& config() const { return cfg_; }

  // x [N, 1, bins, frames] -> log-probabilities [N, n_classes].
  Tensor forward(const Tensor& x, bool training, std::vector<Shape>* trace = nullptr);

  std::vector<NamedTensor> parameters() const;
  // Batch-norm running statistics.
  std::vector<NamedTensor> buffers() const;
  std::size_t parameter_count() const;

  void zero_grad();

 private:
  struct ConvBn {
    Tensor weight;
    Tensor gamma;
    Tensor beta;
    BatchNormState bn;
    std::size_t stride = 1;
    std::size_t pad = 1;
  };
  struct Block {
    ConvBn conv1;
    ConvBn conv2;
    std::optional<ConvBn> shortcut;
  };

  static ConvBn make_conv_bn(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride,
                             std::size_t pad, Rng& rng);
  static Tensor apply(ConvBn& layer, const Tensor& x, bool training);

  ResNetConfig cfg_;
  ConvBn stem_;
  std::vector<std::vector<Block>> stages_;
  Tensor fc_weight_;
  Tensor fc_bias_;
  Tensor out_weight_;
  Tensor out_bias_;
};

// Eval-mode countermeasure score log p(bonafide) - log p(spoof).
double score_from_log_probs(std::span<const double> log_probs);
double score_utterance(ResNet& model, const FeatureGram& g);
std::vector<double> score_batch(ResNet& model, std::span<const FeatureGram> grams, std::size_t batch_size = 32);

// Stacks grams into [N, 1, bins, frames]; all grams must share dimensions.
Tensor stack_grams(std::span<const FeatureGram* const> grams);

struct TrainConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 5e-5;
  std::size_t plateau_patience = 3;
  double plateau_factor = 0.1;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 20;
  std::uint64_t seed = 0;
  Objective objective = Objective::kBfl;
  double gamma = 2.0;
  // Unset selects inverse-frequency weights from the training set.
  std::optional<ClassWeights> alpha;

  void validate() const;
};

struct AdamWState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::uint64_t step = 0;

  static AdamWState zeros_like(const std::vector<NamedTensor>& params);
};

struct AdamWSettings {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

// Decoupled weight decay: p <- p (1 - lr wd) - lr m_hat / (sqrt(v_hat) + eps).
// Parameters without a gradient are treated as having a zero gradient.
// Throws kTraining, naming the parameter, on a non-finite gradient.
void adamw_step(std::vector<NamedTensor>& params, AdamWState& state, const AdamWSettings& settings);

// Multiplies the learning rate by `factor` once `patience` consecutive epochs
// fail to improve on the best metric (lower is better).
class PlateauScheduler {
 public:
  PlateauScheduler(double lr, std::size_t patience, double factor);

  // Returns true when this epoch triggered a reduction.
  bool step(double metric);
  double lr() const { return lr_; }
  std::size_t reductions() const { return reductions_; }

 private:
  double lr_;
  std::size_t patience_;
  double factor_;
  double best_;
  std::size_t bad_epochs_ = 0;
  std::size_t reductions_ = 0;
};

struct Example {
  FeatureGram gram;
  std::size_t target = kBonafideClass;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double dev_eer = 0.0;
  double lr = 0.0;
};

std::string format_epoch_record(const EpochRecord& r);

struct TrainResult {
  std::vector<EpochRecord> log;
  std::size_t best_epoch = 0;
  double best_dev_eer = 1.0;
  AdamWState optimizer;
  double lr = 0.0;
};

// Trains in place; on return the model holds the best-dev-EER weights.
TrainResult train_model(ResNet& model, const std::vector<Example>& train, const std::vector<Example>& dev,
                        const TrainConfig& cfg, const std::function<void(const EpochRecord&)>& on_epoch = {});

struct Checkpoint {
  ResNetConfig model;
  FeatureKind feature = FeatureKind::kStft;
  double lr = 0.0;
  AdamWState optimizer;
};

void save_checkpoint(const std::filesystem::path& path, const ResNet& model, FeatureKind feature,
                     const AdamWState& optimizer, double lr);
// Rebuilds the network and restores every parameter and buffer bit-exactly.
ResNet load_checkpoint(const std::filesystem::path& path, Checkpoint* meta = nullptr);

}  // namespace replaycm
