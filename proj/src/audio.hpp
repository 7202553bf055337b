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
#include <string>
#include <vector>

namespace replaycm {

inline constexpr int kDefaultSampleRate = 16000;

// Mono waveform. Samples live in [-1, 1].
struct Waveform {
  std::vector<double> samples;
  int sample_rate = kDefaultSampleRate;
  std::string utt_id;

  std::size_t size() const { return samples.size(); }
  double duration() const { return static_cast<double>(samples.size()) / sample_rate; }
};

// Throws kParameter if the waveform breaks its invariants.
void validate(const Waveform& w);

// 16-bit quantization: positive values scale by 32767, negative by 32768,
// rounding half away from zero, clamped to the int16 range.
std::int16_t quantize_sample(double x);
double dequantize_sample(std::int16_t q);

// 16-bit PCM mono RIFF/WAVE.
Waveform read_wav(const std::filesystem::path& path);
void write_wav(const Waveform& w, const std::filesystem::path& path);

// Harmonic tone complex with seeded random phases and a seeded noise floor
// 45 dB below the harmonic part, peak-normalized to 0.9. Harmonic k has
// amplitude 1/k.
Waveform synth_tone_complex(double f0, int n_harmonics, double duration, int sample_rate,
                            std::uint64_t seed);

double peak_abs(const std::vector<double>& x);
double rms(const std::vector<double>& x);

}  // namespace replaycm
