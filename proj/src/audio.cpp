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

#include "audio.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>

#include "errors.hpp"
#include "rng.hpp"

namespace replaycm {

namespace {

std::uint16_t load_u16(const unsigned char* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }

std::uint32_t load_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>(v >> 8));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatExtensible = 0xfffe;

}  // namespace

void validate(const Waveform& w) {
  require(w.sample_rate > 0, ErrorCategory::kParameter, "sample rate must be positive");
  require(!w.samples.empty(), ErrorCategory::kParameter, "waveform '" + w.utt_id + "' is empty");
  for (double s : w.samples) {
    require(std::isfinite(s) && s >= -1.0 && s <= 1.0, ErrorCategory::kParameter,
            "waveform '" + w.utt_id + "' has a sample outside [-1, 1]");
  }
}

std::int16_t quantize_sample(double x) {
  const double scaled = x >= 0.0 ? x * 32767.0 : x * 32768.0;
  const double r = std::clamp(std::round(scaled), -32768.0, 32767.0);
  return static_cast<std::int16_t>(r);
}

double dequantize_sample(std::int16_t q) { return q >= 0 ? q / 32767.0 : q / 32768.0; }

Waveform read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCategory::kIo, "cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto* data = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::size_t size = bytes.size();

  require(size >= 12 && std::memcmp(data, "RIFF", 4) == 0 && std::memcmp(data + 8, "WAVE", 4) == 0,
          ErrorCategory::kFormat, path.string() + ": not a RIFF/WAVE file");

  bool have_fmt = false;
  std::uint16_t channels = 0;
  std::uint16_t bits = 0;
  std::uint32_t sample_rate = 0;
  const unsigned char* pcm = nullptr;
  std::size_t pcm_bytes = 0;

  std::size_t pos = 12;
  while (pos + 8 <= size) {
    const unsigned char* chunk = data + pos;
    const std::uint32_t chunk_size = load_u32(chunk + 4);
    const std::size_t body = pos + 8;
    require(body + chunk_size <= size || std::memcmp(chunk, "data", 4) == 0, ErrorCategory::kFormat,
            path.string() + ": truncated chunk");
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      require(chunk_size >= 16, ErrorCategory::kFormat, path.string() + ": short fmt chunk");
      std::uint16_t format = load_u16(data + body);
      channels = load_u16(data + body + 2);
      sample_rate = load_u32(data + body + 4);
      bits = load_u16(data + body + 14);
      if (format == kFormatExtensible && chunk_size >= 26) format = load_u16(data + body + 24);
      require(format == kFormatPcm, ErrorCategory::kUnsupported,
              path.string() + ": only integer PCM is supported");
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      require(have_fmt, ErrorCategory::kFormat, path.string() + ": data chunk before fmt chunk");
      pcm = data + body;
      // Some writers leave the data size unset; take what is there.
      pcm_bytes = std::min<std::size_t>(chunk_size, size - body);
      break;
    }
    pos = body + chunk_size + (chunk_size & 1u);
  }

  require(have_fmt, ErrorCategory::kFormat, path.string() + ": missing fmt chunk");
  require(pcm != nullptr, ErrorCategory::kFormat, path.string() + ": missing data chunk");
  require(channels == 1, ErrorCategory::kUnsupported,
          path.string() + ": " + std::to_string(channels) + " channels; only mono is supported");
  require(bits == 16, ErrorCategory::kUnsupported,
          path.string() + ": " + std::to_string(bits) + "-bit samples; only 16-bit is supported");
  require(sample_rate > 0, ErrorCategory::kFormat, path.string() + ": zero sample rate");

  Waveform w;
  w.sample_rate = static_cast<int>(sample_rate);
  w.utt_id = path.stem().string();
  w.samples.resize(pcm_bytes / 2);
  for (std::size_t i = 0; i < w.samples.size(); ++i) {
    w.samples[i] = dequantize_sample(static_cast<std::int16_t>(load_u16(pcm + 2 * i)));
  }
  return w;
}

void write_wav(const Waveform& w, const std::filesystem::path& path) {
  require(w.sample_rate > 0, ErrorCategory::kParameter, "sample rate must be positive");
  const auto data_bytes = static_cast<std::uint32_t>(w.samples.size() * 2);
  std::string out;
  out.reserve(44 + data_bytes);
  out += "RIFF";
  put_u32(out, 36 + data_bytes);
  out += "WAVEfmt ";
  put_u32(out, 16);
  put_u16(out, kFormatPcm);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(w.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(w.sample_rate) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out += "data";
  put_u32(out, data_bytes);
  for (double s : w.samples) {
    require(s >= -1.0 && s <= 1.0, ErrorCategory::kParameter,
            "waveform '" + w.utt_id + "' has a sample outside [-1, 1]");
    put_u16(out, static_cast<std::uint16_t>(quantize_sample(s)));
  }

  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  require(file.good(), ErrorCategory::kIo, "cannot write " + path.string());
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  require(file.good(), ErrorCategory::kIo, "write failed for " + path.string());
}

Waveform synth_tone_complex(double f0, int n_harmonics, double duration, int sample_rate,
                            std::uint64_t seed) {
  require(sample_rate > 0, ErrorCategory::kParameter, "sample rate must be positive");
  require(duration > 0.0, ErrorCategory::kParameter, "duration must be positive");
  require(n_harmonics >= 0, ErrorCategory::kParameter, "harmonic count must be non-negative");
  require(n_harmonics == 0 || (f0 > 0.0 && f0 * n_harmonics < sample_rate / 2.0),
          ErrorCategory::kParameter, "f0 * n_harmonics must stay below Nyquist");

  const auto n = static_cast<std::size_t>(std::llround(duration * sample_rate));
  require(n > 0, ErrorCategory::kParameter, "duration shorter than one sample");
  Rng rng(seed);

  std::vector<double> harmonic(n, 0.0);
  for (int k = 1; k <= n_harmonics; ++k) {
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double omega = 2.0 * std::numbers::pi * f0 * k / sample_rate;
    const double amp = 1.0 / k;
    for (std::size_t i = 0; i < n; ++i) harmonic[i] += amp * std::sin(omega * static_cast<double>(i) + phase);
  }

  std::vector<double> noise(n);
  for (auto& v : noise) v = rng.normal();
  const double harmonic_rms = rms(harmonic);
  const double noise_rms = rms(noise);
  // 45 dB below the harmonic part; a bare floor when there are no harmonics.
  const double noise_gain = harmonic_rms > 0.0 ? harmonic_rms * std::pow(10.0, -45.0 / 20.0) / noise_rms : 1.0;

  Waveform w;
  w.sample_rate = sample_rate;
  w.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) w.samples[i] = harmonic[i] + noise_gain * noise[i];
  const double peak = peak_abs(w.samples);
  if (peak > 0.0) {
    for (auto& v : w.samples) v *= 0.9 / peak;
  }
  return w;
}

double peak_abs(const std::vector<double>& x) {
  double peak = 0.0;
  for (double v : x) peak = std::max(peak, std::abs(v));
  return peak;
}

double rms(const std::vector<double>& x) {
  if (x.empty()) return 0.0;
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return std::sqrt(acc / static_cast<double>(x.size()));
}

}  // namespace replaycm
