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

#include "fft.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>
#include <utility>

#include "errors.hpp"

namespace replaycm {

namespace {

// FFTW planning is not thread-safe, execution with the new-array interface is.
// Plans are created once per (kind, size) and kept for the process lifetime.
enum class PlanKind { kForward, kInverse, kR2C, kC2R };

std::mutex plan_mutex;
std::map<std::pair<PlanKind, std::size_t>, fftw_plan> plan_cache;

fftw_plan get_plan(PlanKind kind, std::size_t n) {
  std::lock_guard lock(plan_mutex);
  auto key = std::make_pair(kind, n);
  if (auto it = plan_cache.find(key); it != plan_cache.end()) return it->second;

  const int size = static_cast<int>(n);
  const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
  fftw_plan plan = nullptr;
  std::vector<fftw_complex> a(n + 1);
  std::vector<fftw_complex> b(n + 1);
  std::vector<double> r(n + 2);
  switch (kind) {
    case PlanKind::kForward: plan = fftw_plan_dft_1d(size, a.data(), b.data(), FFTW_FORWARD, flags); break;
    case PlanKind::kInverse: plan = fftw_plan_dft_1d(size, a.data(), b.data(), FFTW_BACKWARD, flags); break;
    case PlanKind::kR2C: plan = fftw_plan_dft_r2c_1d(size, r.data(), a.data(), flags); break;
    case PlanKind::kC2R: plan = fftw_plan_dft_c2r_1d(size, a.data(), r.data(), flags); break;
  }
  require(plan != nullptr, ErrorCategory::kInternal, "FFTW planning failed for size " + std::to_string(n));
  plan_cache.emplace(key, plan);
  return plan;
}

fftw_complex* as_fftw(Complex* p) { return reinterpret_cast<fftw_complex*>(p); }

}  // namespace

void fft(std::span<const Complex> in, std::span<Complex> out) {
  require(in.size() == out.size() && !in.empty(), ErrorCategory::kParameter, "fft: size mismatch");
  std::vector<Complex> buffer(in.begin(), in.end());
  fftw_execute_dft(get_plan(PlanKind::kForward, in.size()), as_fftw(buffer.data()), as_fftw(out.data()));
}

void ifft(std::span<const Complex> in, std::span<Complex> out) {
  require(in.size() == out.size() && !in.empty(), ErrorCategory::kParameter, "ifft: size mismatch");
  std::vector<Complex> buffer(in.begin(), in.end());
  fftw_execute_dft(get_plan(PlanKind::kInverse, in.size()), as_fftw(buffer.data()), as_fftw(out.data()));
}

std::vector<Complex> rfft(std::span<const double> in) {
  require(!in.empty(), ErrorCategory::kParameter, "rfft: empty input");
  std::vector<double> buffer(in.begin(), in.end());
  std::vector<Complex> out(in.size() / 2 + 1);
  fftw_execute_dft_r2c(get_plan(PlanKind::kR2C, in.size()), buffer.data(), as_fftw(out.data()));
  return out;
}

std::vector<double> irfft(std::span<const Complex> spectrum, std::size_t n) {
  require(n > 0 && spectrum.size() == n / 2 + 1, ErrorCategory::kParameter, "irfft: size mismatch");
  // c2r destroys its input.
  std::vector<Complex> buffer(spectrum.begin(), spectrum.end());
  std::vector<double> out(n);
  fftw_execute_dft_c2r(get_plan(PlanKind::kC2R, n), as_fftw(buffer.data()), out.data());
  const double scale = 1.0 / static_cast<double>(n);
  for (auto& v : out) v *= scale;
  return out;
}

}  // namespace replaycm
