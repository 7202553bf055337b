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

#include "features.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>

#include "errors.hpp"

namespace replaycm {

namespace {

constexpr char kGramMagic[4] = {'F', 'G', 'R', 'M'};
constexpr std::uint16_t kGramVersion = 1;

// Both spectra needed for group delay: X of x(n) w(n) and Y of n x(n) w(n).
struct FramePair {
  std::vector<Complex> x;
  std::vector<Complex> y;
};

FramePair frame_pair(std::span<const double> samples, std::size_t start, const FrameSpec& spec,
                     const std::vector<double>& window) {
  std::vector<double> xw(static_cast<std::size_t>(spec.n_fft), 0.0);
  std::vector<double> yw(static_cast<std::size_t>(spec.n_fft), 0.0);
  for (int n = 0; n < spec.frame_len; ++n) {
    const double v = samples[start + static_cast<std::size_t>(n)] * window[static_cast<std::size_t>(n)];
    xw[static_cast<std::size_t>(n)] = v;
    yw[static_cast<std::size_t>(n)] = n * v;
  }
  return {rfft(xw), rfft(yw)};
}

FeatureGram finish(FeatureGram g, std::size_t n_frames) {
  for (double v : g.data) {
    require(std::isfinite(v), ErrorCategory::kInternal,
            std::string(feature_kind_name(g.kind)) + " gram for '" + g.utt_id + "' has a non-finite cell");
  }
  return n_frames == kNoShaping ? g : shape_fixed(g, n_frames);
}

FeatureGram empty_gram(FeatureKind kind, const Waveform& w, std::size_t bins, std::size_t frames) {
  FeatureGram g;
  g.kind = kind;
  g.utt_id = w.utt_id;
  g.n_bins = bins;
  g.n_frames = frames;
  g.data.assign(bins * frames, 0.0);
  return g;
}

std::vector<double> lowpass_half_band(std::size_t taps) {
  // Blackman-windowed sinc, cutoff at a quarter of the sampling rate, unit DC gain.
  std::vector<double> h(taps);
  const double center = static_cast<double>(taps - 1) / 2.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < taps; ++i) {
    const double t = static_cast<double>(i) - center;
    const double sinc = t == 0.0 ? 0.5 : std::sin(std::numbers::pi * 0.5 * t) / (std::numbers::pi * t);
    const double phase = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(taps - 1);
    const double win = 0.42 - 0.5 * std::cos(phase) + 0.08 * std::cos(2.0 * phase);
    h[i] = sinc * win;
    sum += h[i];
  }
  for (auto& v : h) v /= sum;
  return h;
}

std::vector<double> decimate2(const std::vector<double>& x, const std::vector<double>& h) {
  const auto half = static_cast<std::ptrdiff_t>(h.size() / 2);
  const auto n = static_cast<std::ptrdiff_t>(x.size());
  std::vector<double> out(static_cast<std::size_t>((n + 1) / 2));
  for (std::ptrdiff_t m = 0; m < static_cast<std::ptrdiff_t>(out.size()); ++m) {
    const std::ptrdiff_t center = 2 * m;
    double acc = 0.0;
    for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(h.size()); ++j) {
      const std::ptrdiff_t idx = center + half - j;
      if (idx >= 0 && idx < n) acc += h[static_cast<std::size_t>(j)] * x[static_cast<std::size_t>(idx)];
    }
    out[static_cast<std::size_t>(m)] = acc;
  }
  return out;
}

void put_bytes(std::string& out, const void* p, std::size_t n) {
  const auto* bytes = static_cast<const char*>(p);
  if constexpr (std::endian::native == std::endian::little) {
    out.append(bytes, n);
  } else {
    for (std::size_t i = n; i > 0; --i) out.push_back(bytes[i - 1]);
  }
}

template <typename T>
T get_le(const char* p) {
  T v;
  if constexpr (std::endian::native == std::endian::little) {
    std::memcpy(&v, p, sizeof(T));
  } else {
    char tmp[sizeof(T)];
    for (std::size_t i = 0; i < sizeof(T); ++i) tmp[i] = p[sizeof(T) - 1 - i];
    std::memcpy(&v, tmp, sizeof(T));
  }
  return v;
}

}  // namespace

std::string_view feature_kind_name(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::kStft: return "stft";
    case FeatureKind::kGd: return "gd";
    case FeatureKind::kMgd: return "mgd";
    case FeatureKind::kCqt: return "cqt";
  }
  return "unknown";
}

FeatureKind parse_feature_kind(std::string_view name) {
  if (name == "stft") return FeatureKind::kStft;
  if (name == "gd") return FeatureKind::kGd;
  if (name == "mgd") return FeatureKind::kMgd;
  if (name == "cqt") return FeatureKind::kCqt;
  fail(ErrorCategory::kParameter, "unknown feature kind '" + std::string(name) + "'");
}

std::vector<double> make_window(WindowKind kind, std::size_t length) {
  std::vector<double> w(length, 1.0);
  if (length < 2 || kind == WindowKind::kRectangular) return w;
  const double denom = static_cast<double>(length - 1);
  for (std::size_t n = 0; n < length; ++n) {
    const double c = std::cos(2.0 * std::numbers::pi * static_cast<double>(n) / denom);
    w[n] = kind == WindowKind::kHamming ? 0.54 - 0.46 * c : 0.5 - 0.5 * c;
  }
  return w;
}

void FrameSpec::validate() const {
  require(hop > 0 && hop <= frame_len && frame_len <= n_fft, ErrorCategory::kParameter,
          "frame spec needs 0 < hop <= frame_len <= n_fft");
  require(n_fft >= 2 && n_fft % 2 == 0, ErrorCategory::kParameter, "n_fft must be even");
}

FrameSpec default_frame_spec(int sample_rate) {
  FrameSpec spec;
  spec.frame_len = static_cast<int>(std::lround(0.025 * sample_rate));
  spec.hop = static_cast<int>(std::lround(0.010 * sample_rate));
  spec.n_fft = 1024;
  return spec;
}

void MgdParams::validate() const {
  require(rho > 0.0 && rho <= 1.0, ErrorCategory::kParameter, "MGD rho must lie in (0, 1]");
  require(lambda > 0.0 && lambda <= 1.0, ErrorCategory::kParameter, "MGD lambda must lie in (0, 1]");
  require(lifter_len >= 1, ErrorCategory::kParameter, "lifter length must be at least 1");
}

std::size_t frame_count(std::size_t n_samples, const FrameSpec& spec) {
  const auto len = static_cast<std::size_t>(spec.frame_len);
  if (n_samples < len) return 0;
  return 1 + (n_samples - len) / static_cast<std::size_t>(spec.hop);
}

ComplexMatrix stft(const Waveform& w, const FrameSpec& spec) {
  spec.validate();
  const std::size_t frames = frame_count(w.size(), spec);
  require(frames > 0, ErrorCategory::kParameter,
          "waveform '" + w.utt_id + "' is shorter than one frame (" + std::to_string(spec.frame_len) + " samples)");
  const auto window = make_window(spec.window, static_cast<std::size_t>(spec.frame_len));
  ComplexMatrix out;
  out.rows = static_cast<std::size_t>(spec.n_bins());
  out.cols = frames;
  out.data.resize(out.rows * out.cols);
  std::vector<double> buf(static_cast<std::size_t>(spec.n_fft));
  for (std::size_t t = 0; t < frames; ++t) {
    std::fill(buf.begin(), buf.end(), 0.0);
    const std::size_t start = t * static_cast<std::size_t>(spec.hop);
    for (int n = 0; n < spec.frame_len; ++n) {
      buf[static_cast<std::size_t>(n)] = w.samples[start + static_cast<std::size_t>(n)] * window[static_cast<std::size_t>(n)];
    }
    const auto spectrum = rfft(buf);
    for (std::size_t k = 0; k < out.rows; ++k) out.at(k, t) = spectrum[k];
  }
  return out;
}

FeatureGram stft_gram(const Waveform& w, const FrameSpec& spec, std::size_t n_frames) {
  const ComplexMatrix x = stft(w, spec);
  FeatureGram g = empty_gram(FeatureKind::kStft, w, x.rows, x.cols);
  for (std::size_t i = 0; i < x.data.size(); ++i) g.data[i] = std::log(std::norm(x.data[i]) + kLogFloor);
  return finish(std::move(g), n_frames);
}

FeatureGram gd_gram(const Waveform& w, const FrameSpec& spec, std::size_t n_frames) {
  spec.validate();
  const std::size_t frames = frame_count(w.size(), spec);
  require(frames > 0, ErrorCategory::kParameter, "waveform '" + w.utt_id + "' is shorter than one frame");
  const auto window = make_window(spec.window, static_cast<std::size_t>(spec.frame_len));
  const auto bins = static_cast<std::size_t>(spec.n_bins());
  FeatureGram g = empty_gram(FeatureKind::kGd, w, bins, frames);
  for (std::size_t t = 0; t < frames; ++t) {
    const FramePair f = frame_pair(w.samples, t * static_cast<std::size_t>(spec.hop), spec, window);
    for (std::size_t k = 0; k < bins; ++k) {
      const double num = f.x[k].real() * f.y[k].real() + f.x[k].imag() * f.y[k].imag();
      const double power = f.x[k].real() * f.x[k].real() + f.x[k].imag() * f.x[k].imag();
      g.at(k, t) = num / std::max(power, kLogFloor * kLogFloor);
    }
  }
  return finish(std::move(g), n_frames);
}

FeatureGram mgd_gram(const Waveform& w, const FrameSpec& spec, const MgdParams& params, std::size_t n_frames) {
  spec.validate();
  params.validate();
  const std::size_t frames = frame_count(w.size(), spec);
  require(frames > 0, ErrorCategory::kParameter, "waveform '" + w.utt_id + "' is shorter than one frame");
  const auto window = make_window(spec.window, static_cast<std::size_t>(spec.frame_len));
  const auto bins = static_cast<std::size_t>(spec.n_bins());
  FeatureGram g = empty_gram(FeatureKind::kMgd, w, bins, frames);
  std::vector<double> mag(bins);
  for (std::size_t t = 0; t < frames; ++t) {
    const FramePair f = frame_pair(w.samples, t * static_cast<std::size_t>(spec.hop), spec, window);
    for (std::size_t k = 0; k < bins; ++k) mag[k] = std::max(std::abs(f.x[k]), kLogFloor);
    const std::vector<double> smooth = params.smoothing ? cepstral_smooth(mag, params.lifter_len) : mag;
    for (std::size_t k = 0; k < bins; ++k) {
      const double num = f.x[k].real() * f.y[k].real() + f.x[k].imag() * f.y[k].imag();
      const double tau = num / std::pow(smooth[k], 2.0 * params.lambda);
      require(std::isfinite(tau), ErrorCategory::kInternal,
              "non-finite group delay in '" + w.utt_id + "' at bin " + std::to_string(k) + ", frame " +
                  std::to_string(t));
      g.at(k, t) = tau == 0.0 ? 0.0 : std::copysign(std::pow(std::abs(tau), params.rho), tau);
    }
  }
  return finish(std::move(g), n_frames);
}

std::vector<double> cepstral_smooth(std::span<const double> mag, int lifter_len) {
  require(mag.size() >= 2, ErrorCategory::kParameter, "cepstral smoothing needs at least two bins");
  require(lifter_len >= 1, ErrorCategory::kParameter, "lifter length must be at least 1");
  const std::size_t bins = mag.size();
  const std::size_t n = 2 * (bins - 1);

  // The log spectrum is real and even, so its cepstrum is too.
  std::vector<Complex> log_spec(bins);
  for (std::size_t k = 0; k < bins; ++k) log_spec[k] = std::log(std::max(mag[k], kLogFloor));
  std::vector<double> cep = irfft(log_spec, n);

  const auto keep = std::min(static_cast<std::size_t>(lifter_len), bins);
  for (std::size_t q = keep; q + keep <= n; ++q) cep[q] = 0.0;

  const auto envelope = rfft(cep);
  std::vector<double> out(bins);
  for (std::size_t k = 0; k < bins; ++k) out[k] = std::exp(envelope[k].real());
  return out;
}

double resolve_cqt_fmin(int sample_rate, const CqtParams& params) {
  const double nyquist = sample_rate / 2.0;
  const double span = std::ldexp(1.0, params.n_octaves);
  if (params.f_min > 0.0) {
    require(params.f_min * span <= nyquist, ErrorCategory::kParameter,
            "CQT range f_min * 2^n_octaves exceeds Nyquist");
    return params.f_min;
  }
  constexpr double kAnchor = 32.7;
  return kAnchor * span <= nyquist ? kAnchor : nyquist / span;
}

CqtTransform::CqtTransform(int sample_rate, const CqtParams& params) : sample_rate_(sample_rate), params_(params) {
  require(sample_rate > 0, ErrorCategory::kParameter, "sample rate must be positive");
  require(params.hop > 0 && params.n_octaves > 0 && params.bins_per_octave > 0, ErrorCategory::kParameter,
          "CQT hop, octave count and bins per octave must be positive");
  const double f_min = resolve_cqt_fmin(sample_rate, params);
  const int b = params.bins_per_octave;
  const int total = params.n_octaves * b;
  q_ = 1.0 / (std::exp2(1.0 / b) - 1.0);
  freqs_.resize(static_cast<std::size_t>(total));
  for (int k = 0; k < total; ++k) freqs_[static_cast<std::size_t>(k)] = f_min * std::exp2(static_cast<double>(k) / b);

  while ((params.hop % (1 << (max_level_ + 1))) == 0 && max_level_ + 1 < params.n_octaves) ++max_level_;
  decimation_filter_ = lowpass_half_band(41);

  kernels_.resize(freqs_.size());
  for (int k = 0; k < total; ++k) {
    // Octave 0 is the top octave; each lower octave runs one decimation level
    // further down, except the top two which both run at the input rate.
    const int octave_from_top = params.n_octaves - 1 - k / b;
    const int level = std::min(std::max(octave_from_top - 1, 0), max_level_);
    const double rate = std::ldexp(static_cast<double>(sample_rate), -level);
    const double f = freqs_[static_cast<std::size_t>(k)];
    const auto len = static_cast<std::size_t>(std::max(1.0, std::ceil(q_ * rate / f)));
    const auto window = make_window(WindowKind::kHann, len);
    double wsum = 0.0;
    for (double v : window) wsum += v;
    Kernel& kernel = kernels_[static_cast<std::size_t>(k)];
    kernel.level = level;
    kernel.taps.resize(len);
    const double center = static_cast<double>(len / 2);
    for (std::size_t n = 0; n < len; ++n) {
      const double phase = -2.0 * std::numbers::pi * f * (static_cast<double>(n) - center) / rate;
      kernel.taps[n] = std::polar(window[n] / wsum, phase);
    }
  }
}

std::vector<double> CqtTransform::bandwidths() const {
  std::vector<double> out(freqs_.size());
  for (std::size_t k = 0; k < freqs_.size(); ++k) out[k] = freqs_[k] / q_;
  return out;
}

std::size_t CqtTransform::frame_count(std::size_t n_samples) const {
  return 1 + n_samples / static_cast<std::size_t>(params_.hop);
}

std::vector<double> CqtTransform::magnitude(std::span<const double> samples, std::size_t* n_frames_out) const {
  require(!samples.empty(), ErrorCategory::kParameter, "CQT of an empty signal");
  std::vector<std::vector<double>> levels;
  levels.emplace_back(samples.begin(), samples.end());
  for (int d = 1; d <= max_level_; ++d) levels.push_back(decimate2(levels.back(), decimation_filter_));

  const std::size_t frames = frame_count(samples.size());
  std::vector<double> out(freqs_.size() * frames, 0.0);
  for (std::size_t k = 0; k < freqs_.size(); ++k) {
    const Kernel& kernel = kernels_[k];
    const std::vector<double>& x = levels[static_cast<std::size_t>(kernel.level)];
    const auto n = static_cast<std::ptrdiff_t>(x.size());
    const auto len = static_cast<std::ptrdiff_t>(kernel.taps.size());
    const std::ptrdiff_t hop = params_.hop >> kernel.level;
    for (std::size_t t = 0; t < frames; ++t) {
      const std::ptrdiff_t start = static_cast<std::ptrdiff_t>(t) * hop - len / 2;
      const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -start);
      const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(len, n - start);
      double re = 0.0;
      double im = 0.0;
      for (std::ptrdiff_t j = lo; j < hi; ++j) {
        const double v = x[static_cast<std::size_t>(start + j)];
        re += v * kernel.taps[static_cast<std::size_t>(j)].real();
        im += v * kernel.taps[static_cast<std::size_t>(j)].imag();
      }
      out[k * frames + t] = std::hypot(re, im);
    }
  }
  if (n_frames_out != nullptr) *n_frames_out = frames;
  return out;
}

FeatureGram cqt_gram(const Waveform& w, const CqtParams& params, std::size_t n_frames) {
  return cqt_gram(w, CqtTransform(w.sample_rate, params), n_frames);
}

FeatureGram cqt_gram(const Waveform& w, const CqtTransform& transform, std::size_t n_frames) {
  require(transform.sample_rate() == w.sample_rate, ErrorCategory::kParameter,
          "CQT built for " + std::to_string(transform.sample_rate()) + " Hz applied to " +
              std::to_string(w.sample_rate) + " Hz audio");
  std::size_t frames = 0;
  std::vector<double> mag = transform.magnitude(w.samples, &frames);
  FeatureGram g = empty_gram(FeatureKind::kCqt, w, transform.n_bins(), frames);
  for (std::size_t i = 0; i < mag.size(); ++i) g.data[i] = std::log(mag[i] + kLogFloor);
  return finish(std::move(g), n_frames);
}

FeatureGram shape_fixed(const FeatureGram& g, std::size_t n_frames) {
  require(g.n_frames > 0 && g.n_bins > 0, ErrorCategory::kParameter, "cannot shape an empty gram");
  require(n_frames > 0, ErrorCategory::kParameter, "target frame count must be positive");
  FeatureGram out;
  out.kind = g.kind;
  out.utt_id = g.utt_id;
  out.n_bins = g.n_bins;
  out.n_frames = n_frames;
  out.data.resize(g.n_bins * n_frames);
  for (std::size_t b = 0; b < g.n_bins; ++b) {
    for (std::size_t t = 0; t < n_frames; ++t) out.at(b, t) = g.at(b, t % g.n_frames);
  }
  return out;
}

FeatureGram extract_features(const Waveform& w, const FeatureSettings& settings) {
  switch (settings.kind) {
    case FeatureKind::kStft: return stft_gram(w, settings.frame, settings.n_frames);
    case FeatureKind::kGd: return gd_gram(w, settings.frame, settings.n_frames);
    case FeatureKind::kMgd: return mgd_gram(w, settings.frame, settings.mgd, settings.n_frames);
    case FeatureKind::kCqt: return cqt_gram(w, settings.cqt, settings.n_frames);
  }
  fail(ErrorCategory::kParameter, "unknown feature kind");
}

void write_gram(const FeatureGram& g, const std::filesystem::path& path) {
  require(g.data.size() == g.n_bins * g.n_frames, ErrorCategory::kInternal, "gram buffer size mismatch");
  std::string out;
  out.reserve(15 + 4 * g.data.size());
  out.append(kGramMagic, 4);
  put_bytes(out, &kGramVersion, 2);
  const auto kind = static_cast<std::uint8_t>(g.kind);
  put_bytes(out, &kind, 1);
  const auto bins = static_cast<std::uint32_t>(g.n_bins);
  const auto frames = static_cast<std::uint32_t>(g.n_frames);
  put_bytes(out, &bins, 4);
  put_bytes(out, &frames, 4);
  for (double v : g.data) {
    const auto f = static_cast<float>(v);
    put_bytes(out, &f, 4);
  }
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  require(file.good(), ErrorCategory::kIo, "cannot write " + path.string());
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  require(file.good(), ErrorCategory::kIo, "write failed for " + path.string());
}

FeatureGram read_gram(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCategory::kIo, "cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  require(bytes.size() >= 15 && std::memcmp(bytes.data(), kGramMagic, 4) == 0, ErrorCategory::kFormat,
          path.string() + ": not a feature-gram file");
  const char* p = bytes.data();
  const auto version = get_le<std::uint16_t>(p + 4);
  require(version == kGramVersion, ErrorCategory::kUnsupported,
          path.string() + ": unsupported gram version " + std::to_string(version));
  const auto kind = static_cast<std::uint8_t>(p[6]);
  require(kind <= 3, ErrorCategory::kFormat, path.string() + ": unknown feature kind");
  FeatureGram g;
  g.kind = static_cast<FeatureKind>(kind);
  g.n_bins = get_le<std::uint32_t>(p + 7);
  g.n_frames = get_le<std::uint32_t>(p + 11);
  g.utt_id = path.stem().string();
  require(bytes.size() == 15 + 4 * g.n_bins * g.n_frames, ErrorCategory::kFormat,
          path.string() + ": payload size does not match header");
  g.data.resize(g.n_bins * g.n_frames);
  for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] = get_le<float>(p + 15 + 4 * i);
  return g;
}

}  // namespace replaycm
