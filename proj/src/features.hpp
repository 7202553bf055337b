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
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "audio.hpp"
#include "fft.hpp"

namespace replaycm {

enum class FeatureKind : std::uint8_t { kStft = 0, kGd = 1, kMgd = 2, kCqt = 3 };

std::string_view feature_kind_name(FeatureKind kind);
FeatureKind parse_feature_kind(std::string_view name);

enum class WindowKind { kHamming, kHann, kRectangular };

std::vector<double> make_window(WindowKind kind, std::size_t length);

struct FrameSpec {
  int frame_len = 400;
  int hop = 160;
  WindowKind window = WindowKind::kHamming;
  int n_fft = 1024;

  int n_bins() const { return n_fft / 2 + 1; }
  void validate() const;
};

// 25 ms frames, 10 ms shift, 1024-point FFT.
FrameSpec default_frame_spec(int sample_rate);

struct MgdParams {
  double rho = 0.2;
  double lambda = 0.7;
  int lifter_len = 30;
  // When false the smoothed spectrum S is replaced by |X| itself.
  bool smoothing = true;

  void validate() const;
};

struct CqtParams {
  int hop = 128;
  int n_octaves = 9;
  int bins_per_octave = 96;
  // Lowest center frequency; <= 0 selects it from the sample rate.
  double f_min = 0.0;
};

inline constexpr std::size_t kDefaultFrames = 500;
// Passed as n_frames to skip fixed-length shaping.
inline constexpr std::size_t kNoShaping = 0;
inline constexpr double kLogFloor = 1e-10;

// Time-frequency matrix, row-major [n_bins x n_frames].
struct FeatureGram {
  FeatureKind kind = FeatureKind::kStft;
  std::size_t n_bins = 0;
  std::size_t n_frames = 0;
  std::vector<double> data;
  std::string utt_id;

  double at(std::size_t bin, std::size_t frame) const { return data[bin * n_frames + frame]; }
  double& at(std::size_t bin, std::size_t frame) { return data[bin * n_frames + frame]; }
};

// Row-major [rows x cols] complex matrix; rows are frequency bins.
struct ComplexMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<Complex> data;

  const Complex& at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  Complex& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
};

std::size_t frame_count(std::size_t n_samples, const FrameSpec& spec);

// One-sided spectra of windowed frames; frame t covers [t*hop, t*hop + frame_len).
ComplexMatrix stft(const Waveform& w, const FrameSpec& spec);

// log(|X|^2 + 1e-10).
FeatureGram stft_gram(const Waveform& w, const FrameSpec& spec, std::size_t n_frames = kDefaultFrames);

// Plain group delay (X_R Y_R + X_I Y_I) / |X|^2, with Y the spectrum of n * x(n).
FeatureGram gd_gram(const Waveform& w, const FrameSpec& spec, std::size_t n_frames = kDefaultFrames);

// Modified group delay: sign(tau') |tau'|^rho with tau' = (X_R Y_R + X_I Y_I) / S^(2 lambda).
FeatureGram mgd_gram(const Waveform& w, const FrameSpec& spec, const MgdParams& params,
                     std::size_t n_frames = kDefaultFrames);

// Spectral envelope from the first lifter_len real-cepstrum coefficients of
// log(max(mag, 1e-10)). mag is one-sided with at least two bins.
std::vector<double> cepstral_smooth(std::span<const double> mag, int lifter_len);

// Constant-Q analysis with Hann-windowed complex kernels, computed octave by
// octave on progressively decimated copies of the signal.
class CqtTransform {
 public:
  CqtTransform(int sample_rate, const CqtParams& params);

  int sample_rate() const { return sample_rate_; }
  std::size_t n_bins() const { return freqs_.size(); }
  double f_min() const { return freqs_.front(); }
  double q_factor() const { return q_; }
  const std::vector<double>& center_frequencies() const { return freqs_; }
  std::vector<double> bandwidths() const;
  std::size_t frame_count(std::size_t n_samples) const;

  // Kernel magnitudes [n_bins x n_frames]; frame t is centered on sample t*hop.
  std::vector<double> magnitude(std::span<const double> samples, std::size_t* n_frames_out) const;

 private:
  struct Kernel {
    int level = 0;
    std::vector<Complex> taps;
  };

  int sample_rate_;
  CqtParams params_;
  double q_ = 0.0;
  int max_level_ = 0;
  std::vector<double> freqs_;
  std::vector<Kernel> kernels_;
  std::vector<double> decimation_filter_;
};

double resolve_cqt_fmin(int sample_rate, const CqtParams& params);

// log(|CQT| + 1e-10).
FeatureGram cqt_gram(const Waveform& w, const CqtParams& params, std::size_t n_frames = kDefaultFrames);
FeatureGram cqt_gram(const Waveform& w, const CqtTransform& transform, std::size_t n_frames = kDefaultFrames);

// Truncates to the first n_frames columns, or repeats columns cyclically.
FeatureGram shape_fixed(const FeatureGram& g, std::size_t n_frames = kDefaultFrames);

// Everything needed to turn a waveform into one kind of gram.
struct FeatureSettings {
  FeatureKind kind = FeatureKind::kStft;
  FrameSpec frame;
  MgdParams mgd;
  CqtParams cqt;
  std::size_t n_frames = kDefaultFrames;
};

FeatureGram extract_features(const Waveform& w, const FeatureSettings& settings);

// Binary gram file: "FGRM", u16 version, u8 kind, u32 n_bins, u32 n_frames,
// then row-major float32, all little-endian.
void write_gram(const FeatureGram& g, const std::filesystem::path& path);
FeatureGram read_gram(const std::filesystem::path& path);

}  // namespace replaycm
