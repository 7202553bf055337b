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

#include <complex>
#include <span>
#include <vector>

namespace replaycm {

using Complex = std::complex<double>;

// Unnormalized DFT: X[k] = sum_n x[n] exp(-2 pi i k n / N). Any size.
void fft(std::span<const Complex> in, std::span<Complex> out);

// Unnormalized inverse DFT (no 1/N factor).
void ifft(std::span<const Complex> in, std::span<Complex> out);

// One-sided spectrum of a real signal: N/2 + 1 bins.
std::vector<Complex> rfft(std::span<const double> in);

// Real signal of length n from its one-sided spectrum (n/2 + 1 bins),
// normalized so that irfft(rfft(x), x.size()) == x.
std::vector<double> irfft(std::span<const Complex> spectrum, std::size_t n);

}  // namespace replaycm
