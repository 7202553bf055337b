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
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace replaycm {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

class GradTape;

namespace detail {

struct TensorData {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;
  bool requires_grad = false;
  // Set when the tensor is the output of an op recorded on `tape`.
  const GradTape* tape = nullptr;

  std::vector<double>& ensure_grad() {
    if (grad.empty()) grad.assign(values.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

// Dense row-major tensor with shared storage. Copies alias the same buffer;
// use clone() for a deep copy.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value);

  bool defined() const { return data_ != nullptr; }
  const Shape& shape() const { return data_->shape; }
  std::size_t dim(std::size_t i) const { return data_->shape.at(i); }
  std::size_t rank() const { return data_->shape.size(); }
  std::size_t numel() const { return data_->values.size(); }

  std::span<const double> values() const { return data_->values; }
  std::span<double> mutable_values() { return data_->values; }
  double item() const;

  bool requires_grad() const { return data_ && data_->requires_grad; }
  void set_requires_grad(bool flag) { data_->requires_grad = flag; }
  bool has_grad() const { return data_ && !data_->grad.empty(); }
  std::span<const double> grad() const { return data_->grad; }
  std::span<double> mutable_grad() { return data_->ensure_grad(); }
  void zero_grad() { data_->grad.clear(); }

  // Deep copy of the values, detached from any tape.
  Tensor clone() const;

  const std::shared_ptr<detail::TensorData>& impl() const { return data_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorData> data) : data_(std::move(data)) {}
  friend Tensor make_tensor(Shape, std::vector<double>);

  std::shared_ptr<detail::TensorData> data_;
};

Tensor make_tensor(Shape shape, std::vector<double> values);

// Ordered record of differentiable op applications. Ops record onto the tape
// activated by TapeScope on the calling thread, and only when one of their
// inputs requires grad.
class GradTape {
 public:
  struct Node {
    std::shared_ptr<detail::TensorData> output;
    std::function<void(const std::vector<double>& grad_out)> backward;
  };

  GradTape() = default;
  GradTape(const GradTape&) = delete;
  GradTape& operator=(const GradTape&) = delete;

  void record(Node node) { nodes_.push_back(std::move(node)); }
  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  // Seeds d(loss)/d(loss) = 1 and runs every recorded node once in reverse
  // order, accumulating into .grad of the inputs. Clears the tape.
  void backward(const Tensor& loss);

 private:
  std::vector<Node> nodes_;
};

class TapeScope {
 public:
  explicit TapeScope(GradTape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  GradTape* previous_;
};

GradTape* active_tape();

// Runs the active tape's backward pass; throws kContract without one.
void backward(const Tensor& loss);

struct BatchNormState {
  Tensor running_mean;
  Tensor running_var;
  double momentum = 0.1;
  double eps = 1e-5;

  static BatchNormState create(std::size_t channels);
};

namespace ops {

Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor matmul(const Tensor& a, const Tensor& b);
// x [N, C, H, W], weight [O, C, KH, KW], optional bias [O].
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride, std::size_t pad);
// Batch statistics when training (and running-stat update), running stats otherwise.
Tensor batchnorm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormState& state, bool training);
Tensor relu(const Tensor& x);
Tensor maxpool2d(const Tensor& x, std::size_t kernel, std::size_t stride, std::size_t pad);
// [N, C, H, W] -> [N, C]
Tensor global_avg_pool(const Tensor& x);
// x [N, in], weight [out, in], bias [out]
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);
// Row-wise over the last axis of a [N, K] tensor.
Tensor log_softmax(const Tensor& x);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// Picks x[n, index[n]] from a [N, K] tensor.
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> index);
// (1 - exp(lp))^gamma element-wise for log-probabilities lp <= 0.
Tensor focal_modulation(const Tensor& log_prob, double gamma);

}  // namespace ops

// Gradient of selector(input) with respect to every cell of input.
Tensor input_gradient(const std::function<Tensor(const Tensor&)>& selector, const Tensor& input);

// Element-wise |input_gradient|.
Tensor saliency_map(const std::function<Tensor(const Tensor&)>& selector, const Tensor& input);

}  // namespace replaycm
