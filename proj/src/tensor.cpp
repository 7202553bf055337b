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

#include "tensor.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>
#include <sstream>

#include "errors.hpp"

namespace replaycm {

namespace {

using detail::TensorData;
using DataPtr = std::shared_ptr<TensorData>;

thread_local GradTape* current_tape = nullptr;

// Returns the tape to record on, or nullptr when no input needs gradients.
GradTape* tape_for(std::initializer_list<const Tensor*> inputs) {
  if (current_tape == nullptr) return nullptr;
  for (const Tensor* t : inputs) {
    if (t->defined() && t->requires_grad()) return current_tape;
  }
  return nullptr;
}

Tensor output_tensor(Shape shape, std::vector<double> values, GradTape* tape) {
  Tensor out = make_tensor(std::move(shape), std::move(values));
  if (tape != nullptr) {
    out.impl()->requires_grad = true;
    out.impl()->tape = tape;
  }
  return out;
}

void record(GradTape* tape, const Tensor& out, std::function<void(const std::vector<double>&)> fn) {
  tape->record({out.impl(), std::move(fn)});
}

// Accumulation target for an input, or nullptr when it needs no gradient.
double* grad_target(const DataPtr& d) { return d->requires_grad ? d->ensure_grad().data() : nullptr; }

[[noreturn]] void shape_error(const std::string& op, const Shape& a, const Shape& b) {
  fail(ErrorCategory::kShape, op + ": incompatible shapes " + shape_string(a) + " and " + shape_string(b));
}

void require_rank(const std::string& op, const Tensor& t, std::size_t rank) {
  require(t.defined(), ErrorCategory::kShape, op + ": undefined tensor");
  if (t.rank() != rank) {
    fail(ErrorCategory::kShape,
         op + ": expected rank " + std::to_string(rank) + ", got shape " + shape_string(t.shape()));
  }
}

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const double* a,
          const double* b, double beta, double* c) {
  if (m == 0 || n == 0) return;
  const auto lda = static_cast<int>(trans_a ? m : k);
  const auto ldb = static_cast<int>(trans_b ? k : n);
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans, trans_b ? CblasTrans : CblasNoTrans,
              static_cast<int>(m), static_cast<int>(n), static_cast<int>(k), 1.0, a, lda, b, ldb, beta, c,
              static_cast<int>(n));
}

struct ConvGeometry {
  std::size_t n, c, h, w, o, kh, kw, oh, ow, stride, pad;
  std::size_t patch() const { return c * kh * kw; }
  std::size_t positions() const { return oh * ow; }
};

// Sums with four interleaved accumulators; the fixed order keeps results
// deterministic while letting the compiler vectorize.
double sum_of(const double* p, std::size_t n) {
  double a[4] = {0.0, 0.0, 0.0, 0.0};
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    for (std::size_t k = 0; k < 4; ++k) a[k] += p[i + k];
  }
  for (; i < n; ++i) a[0] += p[i];
  return (a[0] + a[1]) + (a[2] + a[3]);
}

double dot_of(const double* p, const double* q, std::size_t n) {
  double a[4] = {0.0, 0.0, 0.0, 0.0};
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    for (std::size_t k = 0; k < 4; ++k) a[k] += p[i + k] * q[i + k];
  }
  for (; i < n; ++i) a[0] += p[i] * q[i];
  return (a[0] + a[1]) + (a[2] + a[3]);
}

double centered_square_sum(const double* p, std::size_t n, double mu) {
  double a[4] = {0.0, 0.0, 0.0, 0.0};
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    for (std::size_t k = 0; k < 4; ++k) a[k] += (p[i + k] - mu) * (p[i + k] - mu);
  }
  for (; i < n; ++i) a[0] += (p[i] - mu) * (p[i] - mu);
  return (a[0] + a[1]) + (a[2] + a[3]);
}

// Output columns [lo, hi) whose input column ox * stride + j - pad is in range.
void valid_columns(const ConvGeometry& g, std::size_t j, std::size_t& lo, std::size_t& hi) {
  const auto pad = static_cast<std::ptrdiff_t>(g.pad);
  const auto stride = static_cast<std::ptrdiff_t>(g.stride);
  const auto jj = static_cast<std::ptrdiff_t>(j);
  const std::ptrdiff_t first = pad > jj ? (pad - jj + stride - 1) / stride : 0;
  const std::ptrdiff_t last = (static_cast<std::ptrdiff_t>(g.w) - 1 + pad - jj);  // ox * stride <= last
  lo = static_cast<std::size_t>(std::min<std::ptrdiff_t>(first, static_cast<std::ptrdiff_t>(g.ow)));
  hi = last < 0 ? lo : static_cast<std::size_t>(std::min<std::ptrdiff_t>(last / stride + 1, static_cast<std::ptrdiff_t>(g.ow)));
  hi = std::max(hi, lo);
}

// Stride 1 with output size equal to input size: each kernel tap reads the
// input plane shifted by (di, dj), so a patch row is one contiguous copy plus
// a zeroed border column.
bool same_size(const ConvGeometry& g) { return g.stride == 1 && g.oh == g.h && g.ow == g.w; }

struct Shift {
  std::ptrdiff_t offset;  // flat source offset
  std::size_t row_lo, row_hi;  // output rows with an in-range source row
  std::size_t col_lo, col_hi;  // output columns with an in-range source column
};

Shift tap_shift(const ConvGeometry& g, std::size_t i, std::size_t j) {
  const auto h = static_cast<std::ptrdiff_t>(g.h), w = static_cast<std::ptrdiff_t>(g.w);
  const auto di = static_cast<std::ptrdiff_t>(i) - static_cast<std::ptrdiff_t>(g.pad);
  const auto dj = static_cast<std::ptrdiff_t>(j) - static_cast<std::ptrdiff_t>(g.pad);
  auto clamp = [](std::ptrdiff_t v, std::ptrdiff_t hi) { return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(v, 0, hi)); };
  Shift s{di * w + dj, clamp(-di, h), clamp(h - di, h), clamp(-dj, w), clamp(w - dj, w)};
  s.row_hi = std::max(s.row_hi, s.row_lo);
  s.col_hi = std::max(s.col_hi, s.col_lo);
  return s;
}

void im2col_same(const double* x, const ConvGeometry& g, double* cols) {
  const std::size_t plane = g.h * g.w;
  for (std::size_t c = 0; c < g.c; ++c) {
    const double* src = x + c * plane;
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        double* dst = cols + ((c * g.kh + i) * g.kw + j) * plane;
        const Shift s = tap_shift(g, i, j);
        const std::size_t begin = s.row_lo * g.w, end = s.row_hi * g.w;
        std::fill(dst, dst + begin, 0.0);
        std::fill(dst + end, dst + plane, 0.0);
        if (begin == end) continue;
        // Trim the ends so the source stays inside this channel's plane.
        const std::size_t first = begin + s.col_lo, last = end - (g.w - s.col_hi);
        if (first < last) std::memcpy(dst + first, src + static_cast<std::ptrdiff_t>(first) + s.offset, (last - first) * sizeof(double));
        for (std::size_t oy = s.row_lo; oy < s.row_hi; ++oy) {
          double* row = dst + oy * g.w;
          for (std::size_t ox = 0; ox < s.col_lo; ++ox) row[ox] = 0.0;
          for (std::size_t ox = s.col_hi; ox < g.w; ++ox) row[ox] = 0.0;
        }
      }
    }
  }
}

// Overwrites the out-of-range border entries of `cols` with zero.
void col2im_same(double* cols, const ConvGeometry& g, double* dx) {
  const std::size_t plane = g.h * g.w;
  for (std::size_t c = 0; c < g.c; ++c) {
    double* dst = dx + c * plane;
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        double* src = cols + ((c * g.kh + i) * g.kw + j) * plane;
        const Shift s = tap_shift(g, i, j);
        if (s.row_lo == s.row_hi) continue;
        for (std::size_t oy = s.row_lo; oy < s.row_hi; ++oy) {
          double* row = src + oy * g.w;
          for (std::size_t ox = 0; ox < s.col_lo; ++ox) row[ox] = 0.0;
          for (std::size_t ox = s.col_hi; ox < g.w; ++ox) row[ox] = 0.0;
        }
        const std::size_t first = s.row_lo * g.w + s.col_lo, last = s.row_hi * g.w - (g.w - s.col_hi);
        for (std::size_t k = first; k < last; ++k) dst[static_cast<std::ptrdiff_t>(k) + s.offset] += src[k];
      }
    }
  }
}

void im2col(const double* x, const ConvGeometry& g, double* cols) {
  if (same_size(g)) return im2col_same(x, g, cols);
  const std::size_t p = g.positions();
  for (std::size_t c = 0; c < g.c; ++c) {
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        double* row = cols + ((c * g.kh + i) * g.kw + j) * p;
        std::size_t lo = 0, hi = 0;
        valid_columns(g, j, lo, hi);
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const auto y = static_cast<std::ptrdiff_t>(oy * g.stride + i) - static_cast<std::ptrdiff_t>(g.pad);
          double* dst = row + oy * g.ow;
          if (y < 0 || y >= static_cast<std::ptrdiff_t>(g.h)) {
            for (std::size_t ox = 0; ox < g.ow; ++ox) dst[ox] = 0.0;
            continue;
          }
          const double* src = x + static_cast<std::ptrdiff_t>((c * g.h + static_cast<std::size_t>(y)) * g.w) +
                              (static_cast<std::ptrdiff_t>(j) - static_cast<std::ptrdiff_t>(g.pad));
          // Rows are short, so plain loops beat library calls here.
          for (std::size_t ox = 0; ox < lo; ++ox) dst[ox] = 0.0;
          for (std::size_t ox = lo; ox < hi; ++ox) dst[ox] = src[ox * g.stride];
          for (std::size_t ox = hi; ox < g.ow; ++ox) dst[ox] = 0.0;
        }
      }
    }
  }
}

void col2im(double* cols, const ConvGeometry& g, double* dx) {
  if (same_size(g)) return col2im_same(cols, g, dx);
  const std::size_t p = g.positions();
  for (std::size_t c = 0; c < g.c; ++c) {
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        const double* row = cols + ((c * g.kh + i) * g.kw + j) * p;
        std::size_t lo = 0, hi = 0;
        valid_columns(g, j, lo, hi);
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const auto y = static_cast<std::ptrdiff_t>(oy * g.stride + i) - static_cast<std::ptrdiff_t>(g.pad);
          if (y < 0 || y >= static_cast<std::ptrdiff_t>(g.h)) continue;
          double* dst = dx + static_cast<std::ptrdiff_t>((c * g.h + static_cast<std::size_t>(y)) * g.w) +
                        (static_cast<std::ptrdiff_t>(j) - static_cast<std::ptrdiff_t>(g.pad));
          const double* src = row + oy * g.ow;
          for (std::size_t ox = lo; ox < hi; ++ox) dst[ox * g.stride] += src[ox];
        }
      }
    }
  }
}

}  // namespace

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? ", " : "") << shape[i];
  out << ']';
  return out.str();
}

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Tensor make_tensor(Shape shape, std::vector<double> values) {
  require(values.size() == shape_numel(shape), ErrorCategory::kShape,
          "buffer of " + std::to_string(values.size()) + " values does not fit shape " + shape_string(shape));
  auto data = std::make_shared<TensorData>();
  data->shape = std::move(shape);
  data->values = std::move(values);
  return Tensor(std::move(data));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  Tensor t = make_tensor(std::move(shape), std::vector<double>(n, value));
  t.set_requires_grad(requires_grad);
  return t;
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  Tensor t = make_tensor(std::move(shape), std::move(values));
  t.set_requires_grad(requires_grad);
  return t;
}

Tensor Tensor::scalar(double value) { return make_tensor({}, {value}); }

double Tensor::item() const {
  require(defined() && numel() == 1, ErrorCategory::kContract,
          "item() needs a single-element tensor, got " + (defined() ? shape_string(shape()) : "undefined"));
  return data_->values[0];
}

Tensor Tensor::clone() const { return make_tensor(shape(), data_->values); }

void GradTape::backward(const Tensor& loss) {
  require(loss.defined() && loss.numel() == 1, ErrorCategory::kContract,
          "backward needs a scalar loss, got shape " + (loss.defined() ? shape_string(loss.shape()) : "undefined"));
  require(loss.requires_grad(), ErrorCategory::kContract, "loss does not depend on any tensor that requires grad");
  require(loss.impl()->tape == nullptr || loss.impl()->tape == this, ErrorCategory::kContract,
          "loss was recorded on a different tape");
  auto& seed = loss.impl()->ensure_grad();
  seed[0] = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (!it->output->grad.empty()) it->backward(it->output->grad);
  }
  nodes_.clear();
}

TapeScope::TapeScope(GradTape& tape) : previous_(current_tape) { current_tape = &tape; }

TapeScope::~TapeScope() { current_tape = previous_; }

GradTape* active_tape() { return current_tape; }

void backward(const Tensor& loss) {
  require(current_tape != nullptr, ErrorCategory::kContract, "backward called without an active tape");
  current_tape->backward(loss);
}

BatchNormState BatchNormState::create(std::size_t channels) {
  BatchNormState s;
  s.running_mean = Tensor::zeros({channels});
  s.running_var = Tensor::full({channels}, 1.0);
  return s;
}

namespace ops {

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error("add", a.shape(), b.shape());
  std::vector<double> v(a.numel());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.values()[i] + b.values()[i];
  GradTape* tape = tape_for({&a, &b});
  Tensor out = output_tensor(a.shape(), std::move(v), tape);
  if (tape) {
    record(tape, out, [da = a.impl(), db = b.impl()](const std::vector<double>& g) {
      if (double* ga = grad_target(da)) {
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (double* gb = grad_target(db)) {
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      }
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error("mul", a.shape(), b.shape());
  std::vector<double> v(a.numel());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.values()[i] * b.values()[i];
  GradTape* tape = tape_for({&a, &b});
  Tensor out = output_tensor(a.shape(), std::move(v), tape);
  if (tape) {
    record(tape, out, [da = a.impl(), db = b.impl()](const std::vector<double>& g) {
      if (double* ga = grad_target(da)) {
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * db->values[i];
      }
      if (double* gb = grad_target(db)) {
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * da->values[i];
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> v(a.values().begin(), a.values().end());
  for (auto& x : v) x *= factor;
  GradTape* tape = tape_for({&a});
  Tensor out = output_tensor(a.shape(), std::move(v), tape);
  if (tape) {
    record(tape, out, [da = a.impl(), factor](const std::vector<double>& g) {
      if (double* ga = grad_target(da)) {
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
      }
    });
  }
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  if (a.dim(1) != b.dim(0)) shape_error("matmul", a.shape(), b.shape());
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> v(m * n, 0.0);
  gemm(false, false, m, n, k, a.values().data(), b.values().data(), 0.0, v.data());
  GradTape* tape = tape_for({&a, &b});
  Tensor out = output_tensor({m, n}, std::move(v), tape);
  if (tape) {
    record(tape, out, [da = a.impl(), db = b.impl(), m, n, k](const std::vector<double>& g) {
      if (double* ga = grad_target(da)) gemm(false, true, m, k, n, g.data(), db->values.data(), 1.0, ga);
      if (double* gb = grad_target(db)) gemm(true, false, k, n, m, da->values.data(), g.data(), 1.0, gb);
    });
  }
  return out;
}

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride, std::size_t pad) {
  require_rank("conv2d", x, 4);
  require_rank("conv2d", weight, 4);
  require(stride > 0, ErrorCategory::kParameter, "conv2d: stride must be positive");
  if (x.dim(1) != weight.dim(1)) shape_error("conv2d", x.shape(), weight.shape());
  ConvGeometry g{};
  g.n = x.dim(0);
  g.c = x.dim(1);
  g.h = x.dim(2);
  g.w = x.dim(3);
  g.o = weight.dim(0);
  g.kh = weight.dim(2);
  g.kw = weight.dim(3);
  g.stride = stride;
  g.pad = pad;
  if (g.h + 2 * pad < g.kh || g.w + 2 * pad < g.kw) shape_error("conv2d", x.shape(), weight.shape());
  g.oh = (g.h + 2 * pad - g.kh) / stride + 1;
  g.ow = (g.w + 2 * pad - g.kw) / stride + 1;
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != g.o)) shape_error("conv2d bias", bias.shape(), weight.shape());

  const std::size_t patch = g.patch();
  const std::size_t pos = g.positions();
  std::vector<double> v(g.n * g.o * pos);
  // Scratch space, fully overwritten before use.
  std::unique_ptr<double[]> cols(new double[patch * pos]);
  for (std::size_t n = 0; n < g.n; ++n) {
    im2col(x.values().data() + n * g.c * g.h * g.w, g, cols.get());
    double* dst = v.data() + n * g.o * pos;
    gemm(false, false, g.o, pos, patch, weight.values().data(), cols.get(), 0.0, dst);
    if (bias.defined()) {
      for (std::size_t o = 0; o < g.o; ++o) {
        const double b = bias.values()[o];
        for (std::size_t p = 0; p < pos; ++p) dst[o * pos + p] += b;
      }
    }
  }

  GradTape* tape = tape_for({&x, &weight, &bias});
  Tensor out = output_tensor({g.n, g.o, g.oh, g.ow}, std::move(v), tape);
  if (tape) {
    DataPtr db = bias.defined() ? bias.impl() : nullptr;
    record(tape, out, [dx = x.impl(), dw = weight.impl(), db, g](const std::vector<double>& grad) {
      const std::size_t patch = g.patch();
      const std::size_t pos = g.positions();
      double* gx = grad_target(dx);
      double* gw = grad_target(dw);
      double* gb = db ? grad_target(db) : nullptr;
      std::unique_ptr<double[]> cols(new double[patch * pos]);
      for (std::size_t n = 0; n < g.n; ++n) {
        const double* gout = grad.data() + n * g.o * pos;
        if (gw) {
          im2col(dx->values.data() + n * g.c * g.h * g.w, g, cols.get());
          gemm(false, true, g.o, patch, pos, gout, cols.get(), 1.0, gw);
        }
        if (gx) {
          gemm(true, false, patch, pos, g.o, dw->values.data(), gout, 0.0, cols.get());
          col2im(cols.get(), g, gx + n * g.c * g.h * g.w);
        }
        if (gb) {
          for (std::size_t o = 0; o < g.o; ++o) gb[o] += sum_of(gout + o * pos, pos);
        }
      }
    });
  }
  return out;
}

Tensor batchnorm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormState& state, bool training) {
  require_rank("batchnorm2d", x, 4);
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (gamma.shape() != Shape{c} || beta.shape() != Shape{c}) shape_error("batchnorm2d", x.shape(), gamma.shape());
  const std::size_t count = n * hw;
  require(!training || count > 1, ErrorCategory::kParameter, "batchnorm2d: training mode needs more than one value per channel");

  std::vector<double> mean(c), inv_std(c);
  const auto xv = x.values();
  if (training) {
    auto rm = state.running_mean.mutable_values();
    auto rv = state.running_var.mutable_values();
    for (std::size_t ch = 0; ch < c; ++ch) {
      double s = 0.0;
      for (std::size_t b = 0; b < n; ++b) s += sum_of(xv.data() + (b * c + ch) * hw, hw);
      const double mu = s / static_cast<double>(count);
      double ss = 0.0;
      for (std::size_t b = 0; b < n; ++b) ss += centered_square_sum(xv.data() + (b * c + ch) * hw, hw, mu);
      const double var = ss / static_cast<double>(count);
      mean[ch] = mu;
      inv_std[ch] = 1.0 / std::sqrt(var + state.eps);
      const double unbiased = ss / static_cast<double>(count - 1);
      rm[ch] = (1.0 - state.momentum) * rm[ch] + state.momentum * mu;
      rv[ch] = (1.0 - state.momentum) * rv[ch] + state.momentum * unbiased;
    }
  } else {
    for (std::size_t ch = 0; ch < c; ++ch) {
      mean[ch] = state.running_mean.values()[ch];
      inv_std[ch] = 1.0 / std::sqrt(state.running_var.values()[ch] + state.eps);
    }
  }

  std::vector<double> xhat(x.numel());
  std::vector<double> v(x.numel());
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t off = (b * c + ch) * hw;
      const double gm = gamma.values()[ch], bt = beta.values()[ch], mu = mean[ch], is = inv_std[ch];
      const double* src = xv.data() + off;
      double* xh = xhat.data() + off;
      double* dst = v.data() + off;
      for (std::size_t i = 0; i < hw; ++i) {
        xh[i] = (src[i] - mu) * is;
        dst[i] = gm * xh[i] + bt;
      }
    }
  }

  GradTape* tape = tape_for({&x, &gamma, &beta});
  Tensor out = output_tensor(x.shape(), std::move(v), tape);
  if (tape) {
    record(tape, out,
           [dx = x.impl(), dg = gamma.impl(), dbt = beta.impl(), xhat = std::move(xhat), inv_std, n, c, hw,
            training](const std::vector<double>& grad) {
             const auto m = static_cast<double>(n * hw);
             double* gx = grad_target(dx);
             double* gg = grad_target(dg);
             double* gb = grad_target(dbt);
             for (std::size_t ch = 0; ch < c; ++ch) {
               double sum_dy = 0.0, sum_dy_xhat = 0.0;
               for (std::size_t b = 0; b < n; ++b) {
                 const std::size_t off = (b * c + ch) * hw;
                 sum_dy += sum_of(grad.data() + off, hw);
                 sum_dy_xhat += dot_of(grad.data() + off, xhat.data() + off, hw);
               }
               if (gg) gg[ch] += sum_dy_xhat;
               if (gb) gb[ch] += sum_dy;
               if (!gx) continue;
               const double k = dg->values[ch] * inv_std[ch];
               const double mean_dy = training ? sum_dy / m : 0.0;
               const double mean_dy_xhat = training ? sum_dy_xhat / m : 0.0;
               for (std::size_t b = 0; b < n; ++b) {
                 const std::size_t off = (b * c + ch) * hw;
                 const double* dy = grad.data() + off;
                 const double* xh = xhat.data() + off;
                 double* out = gx + off;
                 for (std::size_t i = 0; i < hw; ++i) out[i] += k * (dy[i] - mean_dy - xh[i] * mean_dy_xhat);
               }
             }
           });
  }
  return out;
}

Tensor relu(const Tensor& x) {
  std::vector<double> v(x.values().begin(), x.values().end());
  for (auto& e : v) e = e > 0.0 ? e : 0.0;
  GradTape* tape = tape_for({&x});
  Tensor out = output_tensor(x.shape(), std::move(v), tape);
  if (tape) {
    record(tape, out, [dx = x.impl()](const std::vector<double>& g) {
      if (double* gx = grad_target(dx)) {
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += dx->values[i] > 0.0 ? g[i] : 0.0;
      }
    });
  }
  return out;
}

Tensor maxpool2d(const Tensor& x, std::size_t kernel, std::size_t stride, std::size_t pad) {
  require_rank("maxpool2d", x, 4);
  require(kernel > 0 && stride > 0 && pad < kernel, ErrorCategory::kParameter, "maxpool2d: bad kernel/stride/pad");
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  require(h + 2 * pad >= kernel && w + 2 * pad >= kernel, ErrorCategory::kShape,
          "maxpool2d: input " + shape_string(x.shape()) + " smaller than kernel");
  const std::size_t oh = (h + 2 * pad - kernel) / stride + 1;
  const std::size_t ow = (w + 2 * pad - kernel) / stride + 1;
  std::vector<double> v(n * c * oh * ow);
  std::vector<std::size_t> argmax(v.size());
  const auto xv = x.values();
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const double* src = xv.data() + plane * h * w;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_idx = 0;
        for (std::size_t i = 0; i < kernel; ++i) {
          const auto y = static_cast<std::ptrdiff_t>(oy * stride + i) - static_cast<std::ptrdiff_t>(pad);
          if (y < 0 || y >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t j = 0; j < kernel; ++j) {
            const auto xx = static_cast<std::ptrdiff_t>(ox * stride + j) - static_cast<std::ptrdiff_t>(pad);
            if (xx < 0 || xx >= static_cast<std::ptrdiff_t>(w)) continue;
            const std::size_t idx = static_cast<std::size_t>(y) * w + static_cast<std::size_t>(xx);
            if (src[idx] > best) {
              best = src[idx];
              best_idx = idx;
            }
          }
        }
        const std::size_t o = (plane * oh + oy) * ow + ox;
        v[o] = best;
        argmax[o] = plane * h * w + best_idx;
      }
    }
  }
  GradTape* tape = tape_for({&x});
  Tensor out = output_tensor({n, c, oh, ow}, std::move(v), tape);
  if (tape) {
    record(tape, out, [dx = x.impl(), argmax = std::move(argmax)](const std::vector<double>& g) {
      if (double* gx = grad_target(dx)) {
        for (std::size_t i = 0; i < g.size(); ++i) gx[argmax[i]] += g[i];
      }
    });
  }
  return out;
}

Tensor global_avg_pool(const Tensor& x) {
  require_rank("global_avg_pool", x, 4);
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  require(hw > 0, ErrorCategory::kShape, "global_avg_pool: empty spatial extent");
  std::vector<double> v(n * c);
  for (std::size_t p = 0; p < n * c; ++p) {
    double s = 0.0;
    for (std::size_t i = 0; i < hw; ++i) s += x.values()[p * hw + i];
    v[p] = s / static_cast<double>(hw);
  }
  GradTape* tape = tape_for({&x});
  Tensor out = output_tensor({n, c}, std::move(v), tape);
  if (tape) {
    record(tape, out, [dx = x.impl(), hw](const std::vector<double>& g) {
      if (double* gx = grad_target(dx)) {
        const double inv = 1.0 / static_cast<double>(hw);
        for (std::size_t p = 0; p < g.size(); ++p) {
          for (std::size_t i = 0; i < hw; ++i) gx[p * hw + i] += g[p] * inv;
        }
      }
    });
  }
  return out;
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_rank("linear", x, 2);
  require_rank("linear", weight, 2);
  if (x.dim(1) != weight.dim(1)) shape_error("linear", x.shape(), weight.shape());
  const std::size_t n = x.dim(0), in = x.dim(1), outf = weight.dim(0);
  if (bias.defined() && bias.shape() != Shape{outf}) shape_error("linear bias", bias.shape(), weight.shape());
  std::vector<double> v(n * outf, 0.0);
  gemm(false, true, n, outf, in, x.values().data(), weight.values().data(), 0.0, v.data());
  if (bias.defined()) {
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t o = 0; o < outf; ++o) v[r * outf + o] += bias.values()[o];
    }
  }
  GradTape* tape = tape_for({&x, &weight, &bias});
  Tensor out = output_tensor({n, outf}, std::move(v), tape);
  if (tape) {
    DataPtr db = bias.defined() ? bias.impl() : nullptr;
    record(tape, out, [dx = x.impl(), dw = weight.impl(), db, n, in, outf](const std::vector<double>& g) {
      if (double* gx = grad_target(dx)) gemm(false, false, n, in, outf, g.data(), dw->values.data(), 1.0, gx);
      if (double* gw = grad_target(dw)) gemm(true, false, outf, in, n, g.data(), dx->values.data(), 1.0, gw);
      if (double* gb = db ? grad_target(db) : nullptr) {
        for (std::size_t r = 0; r < n; ++r) {
          for (std::size_t o = 0; o < outf; ++o) gb[o] += g[r * outf + o];
        }
      }
    });
  }
  return out;
}

Tensor log_softmax(const Tensor& x) {
  require_rank("log_softmax", x, 2);
  const std::size_t n = x.dim(0), k = x.dim(1);
  require(k > 0, ErrorCategory::kShape, "log_softmax: empty class axis");
  std::vector<double> v(n * k);
  for (std::size_t r = 0; r < n; ++r) {
    const double* row = x.values().data() + r * k;
    const double mx = *std::max_element(row, row + k);
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) s += std::exp(row[j] - mx);
    const double lse = mx + std::log(s);
    for (std::size_t j = 0; j < k; ++j) v[r * k + j] = row[j] - lse;
  }
  GradTape* tape = tape_for({&x});
  Tensor out = output_tensor({n, k}, std::move(v), tape);
  if (tape) {
    record(tape, out, [dx = x.impl(), dout = std::weak_ptr<TensorData>(out.impl()), n, k](const std::vector<double>& g) {
      double* gx = grad_target(dx);
      if (!gx) return;
      auto y = dout.lock();
      for (std::size_t r = 0; r < n; ++r) {
        double s = 0.0;
        for (std::size_t j = 0; j < k; ++j) s += g[r * k + j];
        for (std::size_t j = 0; j < k; ++j) gx[r * k + j] += g[r * k + j] - std::exp(y->values[r * k + j]) * s;
      }
    });
  }
  return out;
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  GradTape* tape = tape_for({&x});
  Tensor out = output_tensor({}, {s}, tape);
  if (tape) {
    record(tape, out, [dx = x.impl()](const std::vector<double>& g) {
      if (double* gx = grad_target(dx)) {
        for (std::size_t i = 0; i < dx->values.size(); ++i) gx[i] += g[0];
      }
    });
  }
  return out;
}

Tensor mean(const Tensor& x) {
  require(x.numel() > 0, ErrorCategory::kShape, "mean of an empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> index) {
  require_rank("gather_rows", x, 2);
  const std::size_t n = x.dim(0), k = x.dim(1);
  require(index.size() == n, ErrorCategory::kShape,
          "gather_rows: " + std::to_string(index.size()) + " indices for shape " + shape_string(x.shape()));
  std::vector<double> v(n);
  std::vector<std::size_t> idx(index.begin(), index.end());
  for (std::size_t r = 0; r < n; ++r) {
    require(idx[r] < k, ErrorCategory::kShape, "gather_rows: index out of range");
    v[r] = x.values()[r * k + idx[r]];
  }
  GradTape* tape = tape_for({&x});
  Tensor out = output_tensor({n}, std::move(v), tape);
  if (tape) {
    record(tape, out, [dx = x.impl(), idx = std::move(idx), k](const std::vector<double>& g) {
      if (double* gx = grad_target(dx)) {
        for (std::size_t r = 0; r < g.size(); ++r) gx[r * k + idx[r]] += g[r];
      }
    });
  }
  return out;
}

Tensor focal_modulation(const Tensor& log_prob, double gamma) {
  require(gamma >= 0.0, ErrorCategory::kParameter, "focusing parameter gamma must be non-negative");
  std::vector<double> v(log_prob.numel());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double lp = std::min(log_prob.values()[i], 0.0);
    v[i] = std::pow(-std::expm1(lp), gamma);
  }
  GradTape* tape = tape_for({&log_prob});
  Tensor out = output_tensor(log_prob.shape(), std::move(v), tape);
  if (tape) {
    record(tape, out, [dx = log_prob.impl(), gamma](const std::vector<double>& g) {
      double* gx = grad_target(dx);
      if (!gx || gamma == 0.0) return;
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double lp = std::min(dx->values[i], 0.0);
        const double q = -std::expm1(lp);  // 1 - p
        // d/dlp (1 - e^lp)^gamma = -gamma (1 - p)^(gamma - 1) p. At p == 1 the
        // factor is only ever multiplied by log p == 0, so it is taken as 0.
        const double d = q > 0.0 ? -gamma * std::pow(q, gamma - 1.0) * std::exp(lp) : 0.0;
        gx[i] += g[i] * d;
      }
    });
  }
  return out;
}

}  // namespace ops

Tensor input_gradient(const std::function<Tensor(const Tensor&)>& selector, const Tensor& input) {
  Tensor leaf = input.clone();
  leaf.set_requires_grad(true);
  GradTape tape;
  {
    TapeScope scope(tape);
    Tensor selected = selector(leaf);
    tape.backward(selected);
  }
  if (!leaf.has_grad()) return Tensor::zeros(input.shape());
  return make_tensor(input.shape(), std::vector<double>(leaf.grad().begin(), leaf.grad().end()));
}

Tensor saliency_map(const std::function<Tensor(const Tensor&)>& selector, const Tensor& input) {
  Tensor g = input_gradient(selector, input);
  for (auto& v : g.mutable_values()) v = std::abs(v);
  return g;
}

}  // namespace replaycm
