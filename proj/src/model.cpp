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

#include "model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>

#include "errors.hpp"
#include "metrics.hpp"

namespace replaycm {

namespace {

std::size_t conv_out(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad) {
  return (in + 2 * pad - kernel) / stride + 1;
}

Tensor kaiming(Shape shape, std::size_t fan_in, double gain, Rng& rng) {
  std::vector<double> v(shape_numel(shape));
  const double sd = std::sqrt(gain / static_cast<double>(fan_in));
  for (auto& x : v) x = rng.normal(0.0, sd);
  return Tensor::from(std::move(shape), std::move(v), true);
}

}  // namespace

void ResNetConfig::validate() const {
  require(!block_counts.empty(), ErrorCategory::kParameter, "ResNet needs at least one stage");
  for (auto b : block_counts) require(b > 0, ErrorCategory::kParameter, "every stage needs at least one block");
  require(scale > 0 && base_channels > 0, ErrorCategory::kParameter, "channel width and scale must be positive");
  require(base_channels % scale == 0, ErrorCategory::kParameter,
          "scale " + std::to_string(scale) + " does not divide base width " + std::to_string(base_channels));
  require(fc_width > 0, ErrorCategory::kParameter, "fc_width must be positive");
  require(n_classes == 2, ErrorCategory::kParameter, "the countermeasure is a two-class network");
  require(input_bins > 0 && input_frames > 0, ErrorCategory::kParameter, "input dimensions must be positive");
}

std::vector<LayerSummary> summarize(const ResNetConfig& cfg) {
  cfg.validate();
  std::vector<LayerSummary> out;
  std::size_t h = cfg.input_bins;
  std::size_t w = cfg.input_frames;
  std::size_t c = cfg.stage_channels(0);
  out.push_back({"conv1", {c, h, w}, 9 * c, 0, 2 * c});
  out.push_back({"maxpool", {c, h, w}, 0, 0, 0});
  for (std::size_t s = 0; s < cfg.block_counts.size(); ++s) {
    const std::size_t co = cfg.stage_channels(s);
    for (std::size_t b = 0; b < cfg.block_counts[s]; ++b) {
      const std::size_t stride = (s > 0 && b == 0) ? 2 : 1;
      h = conv_out(h, 3, stride, 1);
      w = conv_out(w, 3, stride, 1);
      LayerSummary l;
      l.name = "resblock" + std::to_string(s + 1) + "." + std::to_string(b + 1);
      l.output_shape = {co, h, w};
      l.weight_params = 9 * c * co + 9 * co * co;
      l.norm_params = 4 * co;
      if (stride != 1 || c != co) {
        l.shortcut_params = c * co;
        l.norm_params += 2 * co;
      }
      out.push_back(l);
      c = co;
    }
  }
  out.push_back({"gap", {c}, 0, 0, 0});
  out.push_back({"fc", {cfg.fc_width}, c * cfg.fc_width + cfg.fc_width, 0, 0});
  out.push_back({"output", {cfg.n_classes}, cfg.fc_width * cfg.n_classes + cfg.n_classes, 0, 0});
  return out;
}

ResNet::ConvBn ResNet::make_conv_bn(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride,
                                    std::size_t pad, Rng& rng) {
  ConvBn l;
  l.weight = kaiming({out, in, kernel, kernel}, in * kernel * kernel, 2.0, rng);
  l.gamma = Tensor::full({out}, 1.0, true);
  l.beta = Tensor::zeros({out}, true);
  l.bn = BatchNormState::create(out);
  l.stride = stride;
  l.pad = pad;
  return l;
}

Tensor ResNet::apply(ConvBn& layer, const Tensor& x, bool training) {
  Tensor y = ops::conv2d(x, layer.weight, Tensor(), layer.stride, layer.pad);
  return ops::batchnorm2d(y, layer.gamma, layer.beta, layer.bn, training);
}

ResNet::ResNet(const ResNetConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  std::size_t c = cfg_.stage_channels(0);
  stem_ = make_conv_bn(1, c, 3, 1, 1, rng);
  for (std::size_t s = 0; s < cfg_.block_counts.size(); ++s) {
    const std::size_t co = cfg_.stage_channels(s);
    std::vector<Block> blocks;
    for (std::size_t b = 0; b < cfg_.block_counts[s]; ++b) {
      const std::size_t stride = (s > 0 && b == 0) ? 2 : 1;
      Block blk{make_conv_bn(c, co, 3, stride, 1, rng), make_conv_bn(co, co, 3, 1, 1, rng), std::nullopt};
      if (stride != 1 || c != co) blk.shortcut = make_conv_bn(c, co, 1, stride, 0, rng);
      blocks.push_back(std::move(blk));
      c = co;
    }
    stages_.push_back(std::move(blocks));
  }
  fc_weight_ = kaiming({cfg_.fc_width, c}, c, 2.0, rng);
  fc_bias_ = Tensor::zeros({cfg_.fc_width}, true);
  out_weight_ = kaiming({cfg_.n_classes, cfg_.fc_width}, cfg_.fc_width, 1.0, rng);
  out_bias_ = Tensor::zeros({cfg_.n_classes}, true);
}

Tensor ResNet::forward(const Tensor& x, bool training, std::vector<Shape>* trace) {
  require(x.defined() && x.rank() == 4 && x.dim(1) == 1 && x.dim(2) == cfg_.input_bins, ErrorCategory::kShape,
          "model expects input [N, 1, " + std::to_string(cfg_.input_bins) + ", frames], got " +
              (x.defined() ? shape_string(x.shape()) : "undefined"));
  auto note = [trace](const Tensor& t) {
    if (trace != nullptr) trace->emplace_back(t.shape().begin() + 1, t.shape().end());
  };
  Tensor h = ops::relu(apply(stem_, x, training));
  note(h);
  h = ops::maxpool2d(h, 3, 1, 1);
  note(h);
  for (auto& stage : stages_) {
    for (auto& blk : stage) {
      Tensor y = ops::relu(apply(blk.conv1, h, training));
      y = apply(blk.conv2, y, training);
      Tensor shortcut = blk.shortcut ? apply(*blk.shortcut, h, training) : h;
      h = ops::relu(ops::add(y, shortcut));
      note(h);
    }
  }
  h = ops::global_avg_pool(h);
  note(h);
  h = ops::relu(ops::linear(h, fc_weight_, fc_bias_));
  note(h);
  h = ops::linear(h, out_weight_, out_bias_);
  note(h);
  return ops::log_softmax(h);
}

std::vector<NamedTensor> ResNet::parameters() const {
  std::vector<NamedTensor> out;
  auto add_conv = [&out](const std::string& name, const ConvBn& l) {
    out.push_back({name + ".weight", l.weight});
    out.push_back({name + ".gamma", l.gamma});
    out.push_back({name + ".beta", l.beta});
  };
  add_conv("stem", stem_);
  for (std::size_t s = 0; s < stages_.size(); ++s) {
    for (std::size_t b = 0; b < stages_[s].size(); ++b) {
      const std::string p = "stage" + std::to_string(s + 1) + ".block" + std::to_string(b + 1);
      add_conv(p + ".conv1", stages_[s][b].conv1);
      add_conv(p + ".conv2", stages_[s][b].conv2);
      if (stages_[s][b].shortcut) add_conv(p + ".shortcut", *stages_[s][b].shortcut);
    }
  }
  out.push_back({"fc.weight", fc_weight_});
  out.push_back({"fc.bias", fc_bias_});
  out.push_back({"output.weight", out_weight_});
  out.push_back({"output.bias", out_bias_});
  return out;
}

std::vector<NamedTensor> ResNet::buffers() const {
  std::vector<NamedTensor> out;
  auto add_bn = [&out](const std::string& name, const ConvBn& l) {
    out.push_back({name + ".running_mean", l.bn.running_mean});
    out.push_back({name + ".running_var", l.bn.running_var});
  };
  add_bn("stem", stem_);
  for (std::size_t s = 0; s < stages_.size(); ++s) {
    for (std::size_t b = 0; b < stages_[s].size(); ++b) {
      const std::string p = "stage" + std::to_string(s + 1) + ".block" + std::to_string(b + 1);
      add_bn(p + ".conv1", stages_[s][b].conv1);
      add_bn(p + ".conv2", stages_[s][b].conv2);
      if (stages_[s][b].shortcut) add_bn(p + ".shortcut", *stages_[s][b].shortcut);
    }
  }
  return out;
}

std::size_t ResNet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.tensor.numel();
  return n;
}

void ResNet::zero_grad() {
  for (auto& p : parameters()) p.tensor.zero_grad();
}

double score_from_log_probs(std::span<const double> log_probs) {
  require(log_probs.size() == 2, ErrorCategory::kShape,
          "score needs two log-probabilities, got " + std::to_string(log_probs.size()));
  return log_probs[kBonafideClass] - log_probs[kSpoofClass];
}

Tensor stack_grams(std::span<const FeatureGram* const> grams) {
  require(!grams.empty(), ErrorCategory::kParameter, "no feature grams to stack");
  const std::size_t bins = grams.front()->n_bins;
  const std::size_t frames = grams.front()->n_frames;
  std::vector<double> values;
  values.reserve(grams.size() * bins * frames);
  for (const FeatureGram* g : grams) {
    if (g->n_bins != bins || g->n_frames != frames) {
      fail(ErrorCategory::kShape, "gram '" + g->utt_id + "' is " + std::to_string(g->n_bins) + "x" +
                                      std::to_string(g->n_frames) + ", expected " + std::to_string(bins) + "x" +
                                      std::to_string(frames));
    }
    values.insert(values.end(), g->data.begin(), g->data.end());
  }
  return Tensor::from({grams.size(), 1, bins, frames}, std::move(values));
}

double score_utterance(ResNet& model, const FeatureGram& g) {
  const FeatureGram* one = &g;
  const Tensor lp = model.forward(stack_grams({&one, 1}), false);
  return score_from_log_probs(lp.values());
}

std::vector<double> score_batch(ResNet& model, std::span<const FeatureGram> grams, std::size_t batch_size) {
  require(batch_size > 0, ErrorCategory::kParameter, "batch size must be positive");
  std::vector<double> scores;
  scores.reserve(grams.size());
  for (std::size_t start = 0; start < grams.size(); start += batch_size) {
    const std::size_t end = std::min(grams.size(), start + batch_size);
    std::vector<const FeatureGram*> ptrs;
    for (std::size_t i = start; i < end; ++i) ptrs.push_back(&grams[i]);
    const Tensor lp = model.forward(stack_grams(ptrs), false);
    const auto v = lp.values();
    for (std::size_t i = 0; i < ptrs.size(); ++i) scores.push_back(score_from_log_probs(v.subspan(2 * i, 2)));
  }
  return scores;
}

void TrainConfig::validate() const {
  require(lr > 0.0, ErrorCategory::kParameter, "lr must be positive");
  require(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0, ErrorCategory::kParameter,
          "AdamW betas must lie in (0, 1)");
  require(eps > 0.0 && weight_decay >= 0.0, ErrorCategory::kParameter, "eps must be positive, weight decay >= 0");
  require(plateau_patience > 0, ErrorCategory::kParameter, "plateau patience must be positive");
  require(plateau_factor > 0.0 && plateau_factor < 1.0, ErrorCategory::kParameter,
          "plateau factor must lie in (0, 1)");
  require(batch_size > 0 && max_epochs > 0, ErrorCategory::kParameter, "batch size and epochs must be positive");
  require(gamma >= 0.0, ErrorCategory::kParameter, "gamma must be non-negative");
  if (alpha) {
    require(alpha->alpha_bonafide > 0.0 && alpha->alpha_spoof > 0.0, ErrorCategory::kParameter,
            "class weights must be positive");
  }
}

AdamWState AdamWState::zeros_like(const std::vector<NamedTensor>& params) {
  AdamWState s;
  for (const auto& p : params) {
    s.m.emplace_back(p.tensor.numel(), 0.0);
    s.v.emplace_back(p.tensor.numel(), 0.0);
  }
  return s;
}

void adamw_step(std::vector<NamedTensor>& params, AdamWState& state, const AdamWSettings& settings) {
  if (state.m.empty() && state.step == 0) state = AdamWState::zeros_like(params);
  require(state.m.size() == params.size() && state.v.size() == params.size(), ErrorCategory::kShape,
          "optimizer state does not match the parameter list");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].tensor.has_grad()) continue;
    for (double g : params[i].tensor.grad()) {
      require(std::isfinite(g), ErrorCategory::kTraining, "non-finite gradient in parameter " + params[i].name);
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(settings.beta1, t);
  const double bc2 = 1.0 - std::pow(settings.beta2, t);
  const double decay = 1.0 - settings.lr * settings.weight_decay;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params[i].tensor;
    require(state.m[i].size() == p.numel(), ErrorCategory::kShape,
            "optimizer state does not match parameter " + params[i].name);
    auto values = p.mutable_values();
    const bool has_grad = p.has_grad();
    const auto grad = has_grad ? p.grad() : std::span<const double>();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t k = 0; k < values.size(); ++k) {
      const double g = has_grad ? grad[k] : 0.0;
      m[k] = settings.beta1 * m[k] + (1.0 - settings.beta1) * g;
      v[k] = settings.beta2 * v[k] + (1.0 - settings.beta2) * g * g;
      const double m_hat = m[k] / bc1;
      const double v_hat = v[k] / bc2;
      values[k] = values[k] * decay - settings.lr * m_hat / (std::sqrt(v_hat) + settings.eps);
    }
  }
}

PlateauScheduler::PlateauScheduler(double lr, std::size_t patience, double factor)
    : lr_(lr), patience_(patience), factor_(factor), best_(std::numeric_limits<double>::infinity()) {
  require(lr > 0.0 && patience > 0 && factor > 0.0 && factor < 1.0, ErrorCategory::kParameter,
          "invalid plateau scheduler settings");
}

bool PlateauScheduler::step(double metric) {
  if (metric < best_) {
    best_ = metric;
    bad_epochs_ = 0;
    return false;
  }
  if (++bad_epochs_ < patience_) return false;
  lr_ *= factor_;
  bad_epochs_ = 0;
  ++reductions_;
  return true;
}

std::string format_epoch_record(const EpochRecord& r) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%zu %.9f %.6f %.6g", r.epoch, r.train_loss, r.dev_eer, r.lr);
  return buf;
}

TrainResult train_model(ResNet& model, const std::vector<Example>& train, const std::vector<Example>& dev,
                        const TrainConfig& cfg, const std::function<void(const EpochRecord&)>& on_epoch) {
  cfg.validate();
  require(!train.empty(), ErrorCategory::kData, "empty training set");
  std::size_t n_bona = 0;
  for (const auto& e : train) n_bona += e.target == kBonafideClass;
  const ClassWeights weights = cfg.alpha ? *cfg.alpha : ClassWeights::inverse_frequency(n_bona, train.size() - n_bona);

  std::vector<FeatureGram> dev_grams;
  for (const auto& e : dev) dev_grams.push_back(e.gram);
  std::size_t dev_bona = 0;
  for (const auto& e : dev) dev_bona += e.target == kBonafideClass;
  require(dev_bona > 0 && dev_bona < dev.size(), ErrorCategory::kData, "dev set needs both classes");

  std::vector<NamedTensor> params = model.parameters();
  const std::vector<NamedTensor> buffers = model.buffers();
  TrainResult result;
  result.optimizer = AdamWState::zeros_like(params);
  PlateauScheduler scheduler(cfg.lr, cfg.plateau_patience, cfg.plateau_factor);
  Rng shuffle_rng(mix_seed(cfg.seed, 0x5eed));
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  std::vector<std::vector<double>> best_state;
  auto snapshot = [&] {
    best_state.clear();
    for (const auto& p : params) best_state.emplace_back(p.tensor.values().begin(), p.tensor.values().end());
    for (const auto& b : buffers) best_state.emplace_back(b.tensor.values().begin(), b.tensor.values().end());
  };

  const double gamma = cfg.objective == Objective::kBce ? 0.0 : cfg.gamma;
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    const double lr = scheduler.lr();
    AdamWSettings settings{lr, cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay};
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<const FeatureGram*> grams;
      std::vector<std::size_t> targets;
      for (std::size_t i = start; i < end; ++i) {
        grams.push_back(&train[order[i]].gram);
        targets.push_back(train[order[i]].target);
      }
      model.zero_grad();
      GradTape tape;
      double batch_loss = 0.0;
      {
        TapeScope scope(tape);
        const Tensor lp = model.forward(stack_grams(grams), true);
        const Tensor loss = focal_loss(lp, targets, weights, gamma);
        batch_loss = loss.item();
        require(std::isfinite(batch_loss), ErrorCategory::kTraining,
                "non-finite training loss in epoch " + std::to_string(epoch));
        tape.backward(loss);
      }
      adamw_step(params, result.optimizer, settings);
      loss_sum += batch_loss * static_cast<double>(targets.size());
    }

    std::vector<double> bona_scores;
    std::vector<double> spoof_scores;
    const std::vector<double> scores = score_batch(model, dev_grams, cfg.batch_size);
    for (std::size_t i = 0; i < dev.size(); ++i) {
      (dev[i].target == kBonafideClass ? bona_scores : spoof_scores).push_back(scores[i]);
    }
    EpochRecord rec{epoch, loss_sum / static_cast<double>(train.size()), compute_eer(bona_scores, spoof_scores).eer,
                    lr};
    result.log.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (epoch == 1 || rec.dev_eer < result.best_dev_eer) {
      result.best_dev_eer = rec.dev_eer;
      result.best_epoch = epoch;
      snapshot();
    }
    scheduler.step(rec.dev_eer);
  }

  for (std::size_t i = 0; i < params.size(); ++i) {
    std::copy(best_state[i].begin(), best_state[i].end(), params[i].tensor.mutable_values().begin());
  }
  for (std::size_t i = 0; i < buffers.size(); ++i) {
    Tensor b = buffers[i].tensor;
    std::copy(best_state[params.size() + i].begin(), best_state[params.size() + i].end(),
              b.mutable_values().begin());
  }
  model.zero_grad();
  result.lr = scheduler.lr();
  return result;
}

namespace {

constexpr char kCheckpointMagic[4] = {'R', 'C', 'M', 'C'};
constexpr std::uint32_t kCheckpointVersion = 1;

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}
  template <typename T>
  void put(T v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  void put_doubles(std::span<const double> v) {
    out_.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
  }
  void put_string(const std::string& s) {
    put(static_cast<std::uint32_t>(s.size()));
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  Reader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}
  template <typename T>
  T get() {
    T v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof v);
    check();
    return v;
  }
  void get_doubles(std::span<double> v) {
    in_.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
    check();
  }
  std::string get_string() {
    const auto n = get<std::uint32_t>();
    require(n < (1u << 16), ErrorCategory::kFormat, source_ + ": implausible name length");
    std::string s(n, '\0');
    in_.read(s.data(), n);
    check();
    return s;
  }

 private:
  void check() { require(in_.good(), ErrorCategory::kFormat, source_ + ": truncated checkpoint"); }
  std::istream& in_;
  std::string source_;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ResNet& model, FeatureKind feature,
                     const AdamWState& optimizer, double lr) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorCategory::kIo, "cannot write checkpoint " + path.string());
  Writer w(out);
  out.write(kCheckpointMagic, 4);
  w.put(kCheckpointVersion);
  const ResNetConfig& cfg = model.config();
  w.put(static_cast<std::uint32_t>(cfg.block_counts.size()));
  for (auto b : cfg.block_counts) w.put(static_cast<std::uint64_t>(b));
  for (auto v : {cfg.base_channels, cfg.fc_width, cfg.n_classes, cfg.input_bins, cfg.input_frames, cfg.scale}) {
    w.put(static_cast<std::uint64_t>(v));
  }
  w.put(static_cast<std::uint8_t>(feature));
  w.put(lr);
  w.put(static_cast<std::uint64_t>(optimizer.step));

  const auto params = model.parameters();
  const auto buffers = model.buffers();
  const bool has_moments = optimizer.m.size() == params.size();
  w.put(static_cast<std::uint32_t>(params.size() + buffers.size()));
  std::size_t index = 0;
  for (const auto* list : {&params, &buffers}) {
    for (const auto& nt : *list) {
      w.put_string(nt.name);
      w.put(static_cast<std::uint32_t>(nt.tensor.rank()));
      for (auto d : nt.tensor.shape()) w.put(static_cast<std::uint64_t>(d));
      w.put_doubles(nt.tensor.values());
      const bool moments = has_moments && list == &params;
      w.put(static_cast<std::uint8_t>(moments));
      if (moments) {
        w.put_doubles(optimizer.m[index]);
        w.put_doubles(optimizer.v[index]);
      }
      if (list == &params) ++index;
    }
  }
  require(out.good(), ErrorCategory::kIo, "write failed for " + path.string());
}

ResNet load_checkpoint(const std::filesystem::path& path, Checkpoint* meta) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCategory::kIo, "cannot open checkpoint " + path.string());
  const std::string src = path.string();
  Reader r(in, src);
  char magic[4] = {};
  in.read(magic, 4);
  require(in.good() && std::memcmp(magic, kCheckpointMagic, 4) == 0, ErrorCategory::kFormat,
          src + ": not a checkpoint file");
  const auto version = r.get<std::uint32_t>();
  require(version == kCheckpointVersion, ErrorCategory::kUnsupported,
          src + ": unsupported checkpoint version " + std::to_string(version));

  ResNetConfig cfg;
  const auto n_stages = r.get<std::uint32_t>();
  require(n_stages > 0 && n_stages < 64, ErrorCategory::kFormat, src + ": implausible stage count");
  cfg.block_counts.clear();
  for (std::uint32_t i = 0; i < n_stages; ++i) cfg.block_counts.push_back(r.get<std::uint64_t>());
  cfg.base_channels = r.get<std::uint64_t>();
  cfg.fc_width = r.get<std::uint64_t>();
  cfg.n_classes = r.get<std::uint64_t>();
  cfg.input_bins = r.get<std::uint64_t>();
  cfg.input_frames = r.get<std::uint64_t>();
  cfg.scale = r.get<std::uint64_t>();
  const auto feature = r.get<std::uint8_t>();
  require(feature <= static_cast<std::uint8_t>(FeatureKind::kCqt), ErrorCategory::kFormat,
          src + ": unknown feature kind");
  const auto lr = r.get<double>();
  const auto step = r.get<std::uint64_t>();

  ResNet model(cfg, 0);
  auto params = model.parameters();
  auto buffers = model.buffers();
  std::map<std::string, std::pair<Tensor, std::size_t>> by_name;
  for (std::size_t i = 0; i < params.size(); ++i) by_name[params[i].name] = {params[i].tensor, i};
  for (const auto& b : buffers) by_name[b.name] = {b.tensor, params.size()};

  AdamWState opt = AdamWState::zeros_like(params);
  opt.step = step;
  const auto n_tensors = r.get<std::uint32_t>();
  require(n_tensors == params.size() + buffers.size(), ErrorCategory::kFormat,
          src + ": tensor count does not match the stored configuration");
  std::size_t with_moments = 0;
  for (std::uint32_t t = 0; t < n_tensors; ++t) {
    const std::string name = r.get_string();
    auto it = by_name.find(name);
    require(it != by_name.end(), ErrorCategory::kFormat, src + ": unexpected tensor '" + name + "'");
    Tensor target = it->second.first;
    const auto rank = r.get<std::uint32_t>();
    Shape shape;
    for (std::uint32_t d = 0; d < rank && d < 8; ++d) shape.push_back(r.get<std::uint64_t>());
    require(shape == target.shape(), ErrorCategory::kFormat,
            src + ": tensor '" + name + "' has shape " + shape_string(shape) + ", expected " +
                shape_string(target.shape()));
    r.get_doubles(target.mutable_values());
    if (r.get<std::uint8_t>() != 0) {
      const std::size_t idx = it->second.second;
      require(idx < params.size(), ErrorCategory::kFormat, src + ": moments stored for a buffer");
      r.get_doubles(opt.m[idx]);
      r.get_doubles(opt.v[idx]);
      ++with_moments;
    }
    by_name.erase(it);
  }
  if (meta != nullptr) {
    meta->model = cfg;
    meta->feature = static_cast<FeatureKind>(feature);
    meta->lr = lr;
    meta->optimizer = with_moments == params.size() ? std::move(opt) : AdamWState{};
  }
  return model;
}

}  // namespace replaycm
