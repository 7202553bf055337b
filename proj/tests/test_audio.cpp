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

#include <doctest.h>

#include <cmath>
#include <cstring>
#include <numbers>

#include "audio.hpp"
#include "errors.hpp"
#include "fft.hpp"
#include "test_util.hpp"

using namespace replaycm;
using replaycm::testing::TempDir;

namespace {

// Little-endian 16-bit words of the data chunk, located by a naive chunk walk.
std::vector<std::int16_t> data_words(const std::filesystem::path& p) {
  const std::string bytes = replaycm::testing::slurp(p);
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::string id = bytes.substr(pos, 4);
    std::uint32_t size = 0;
    std::memcpy(&size, bytes.data() + pos + 4, 4);
    if (id == "data") {
      std::vector<std::int16_t> out(size / 2);
      std::memcpy(out.data(), bytes.data() + pos + 8, size);
      return out;
    }
    pos += 8 + size + (size & 1);
  }
  return {};
}

std::string wav_header(std::uint16_t format, std::uint16_t channels, std::uint16_t bits, std::uint32_t data_bytes) {
  std::string h = "RIFF";
  auto put32 = [&h](std::uint32_t v) { h.append(reinterpret_cast<const char*>(&v), 4); };
  auto put16 = [&h](std::uint16_t v) { h.append(reinterpret_cast<const char*>(&v), 2); };
  put32(36 + data_bytes);
  h += "WAVEfmt ";
  put32(16);
  put16(format);
  put16(channels);
  put32(16000);
  put32(16000 * channels * bits / 8);
  put16(static_cast<std::uint16_t>(channels * bits / 8));
  put16(bits);
  h += "data";
  put32(data_bytes);
  return h;
}

}  // namespace

TEST_CASE("quantization maps the unit endpoints to the int16 extremes") {
  CHECK(quantize_sample(1.0) == 32767);
  CHECK(quantize_sample(-1.0) == -32768);
  CHECK(quantize_sample(0.0) == 0);
  CHECK(quantize_sample(2.0) == 32767);
  CHECK(quantize_sample(-3.0) == -32768);
  // Half away from zero: 0.5 / 32767 lands exactly between 0 and 1.
  CHECK(quantize_sample(0.5 / 32767.0) == 1);
  CHECK(quantize_sample(-0.5 / 32768.0) == -1);
}

TEST_CASE("write_wav stores the quantized words") {
  TempDir dir("audio");
  Waveform w{{1.0, -1.0, 0.0}, 16000, "x"};
  write_wav(w, dir / "three.wav");
  const auto words = data_words(dir / "three.wav");
  REQUIRE(words.size() == 3);
  CHECK(words[0] == 32767);
  CHECK(words[1] == -32768);
  CHECK(words[2] == 0);

  Waveform zeros{std::vector<double>(100, 0.0), 16000, "z"};
  write_wav(zeros, dir / "zeros.wav");
  for (auto v : data_words(dir / "zeros.wav")) CHECK(v == 0);
}

TEST_CASE("read_wav of a zero file and round trip within quantization") {
  TempDir dir("audio");
  write_wav({std::vector<double>(16000, 0.0), 16000, "z"}, dir / "zero.wav");
  const Waveform z = read_wav(dir / "zero.wav");
  CHECK(z.sample_rate == 16000);
  CHECK(z.samples.size() == 16000);
  CHECK(z.utt_id == "zero");
  for (double v : z.samples) CHECK(v == 0.0);

  Waveform noise = synth_tone_complex(0.0, 0, 0.25, 16000, 3);
  write_wav(noise, dir / "noise.wav");
  const Waveform back = read_wav(dir / "noise.wav");
  REQUIRE(back.samples.size() == noise.samples.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < back.samples.size(); ++i) {
    worst = std::max(worst, std::abs(back.samples[i] - noise.samples[i]));
  }
  CHECK(worst <= std::ldexp(1.0, -15));
}

TEST_CASE("a half-amplitude sine keeps its peak through the file") {
  TempDir dir("audio");
  Waveform w;
  for (int n = 0; n < 16000; ++n) w.samples.push_back(0.5 * std::sin(2.0 * std::numbers::pi * 440.0 * n / 16000.0));
  write_wav(w, dir / "sine.wav");
  const double peak = peak_abs(read_wav(dir / "sine.wav").samples);
  CHECK(peak >= 0.5 - std::ldexp(1.0, -14));
  CHECK(peak <= 0.5 + std::ldexp(1.0, -14));
}

TEST_CASE("read_wav rejects malformed and unsupported files") {
  TempDir dir("audio");
  replaycm::testing::spit(dir / "junk.wav", "not a wave file at all");
  CHECK_THROWS_AS(read_wav(dir / "junk.wav"), Error);
  try {
    read_wav(dir / "junk.wav");
  } catch (const Error& e) {
    CHECK(e.category() == ErrorCategory::kFormat);
  }

  replaycm::testing::spit(dir / "stereo.wav", wav_header(1, 2, 16, 8) + std::string(8, '\0'));
  try {
    read_wav(dir / "stereo.wav");
    FAIL("stereo accepted");
  } catch (const Error& e) {
    CHECK(e.category() == ErrorCategory::kUnsupported);
  }

  replaycm::testing::spit(dir / "float.wav", wav_header(3, 1, 32, 8) + std::string(8, '\0'));
  try {
    read_wav(dir / "float.wav");
    FAIL("float accepted");
  } catch (const Error& e) {
    CHECK(e.category() == ErrorCategory::kUnsupported);
  }

  try {
    read_wav(dir / "missing.wav");
    FAIL("missing file accepted");
  } catch (const Error& e) {
    CHECK(e.category() == ErrorCategory::kIo);
  }
}

TEST_CASE("write_wav to an unwritable path is an I/O error") {
  try {
    write_wav({{0.0}, 16000, "x"}, "/nonexistent-dir/x.wav");
    FAIL("write succeeded");
  } catch (const Error& e) {
    CHECK(e.category() == ErrorCategory::kIo);
  }
}

TEST_CASE("synth_tone_complex is deterministic and peak-normalized") {
  const Waveform a = synth_tone_complex(200.0, 10, 0.5, 16000, 7);
  const Waveform b = synth_tone_complex(200.0, 10, 0.5, 16000, 7);
  CHECK(a.samples == b.samples);
  CHECK(peak_abs(a.samples) == doctest::Approx(0.9).epsilon(1e-12));
  const Waveform c = synth_tone_complex(200.0, 10, 0.5, 16000, 8);
  CHECK(a.samples != c.samples);

  const Waveform noise = synth_tone_complex(200.0, 0, 0.5, 16000, 1);
  CHECK(peak_abs(noise.samples) == doctest::Approx(0.9).epsilon(1e-12));
}

TEST_CASE("synth_tone_complex rejects aliasing harmonics") {
  try {
    synth_tone_complex(1000.0, 8, 0.1, 16000, 0);
    FAIL("aliasing accepted");
  } catch (const Error& e) {
    CHECK(e.category() == ErrorCategory::kParameter);
  }
}

TEST_CASE("harmonics show up as spectral peaks") {
  const Waveform w = synth_tone_complex(200.0, 10, 1.0, 16000, 11);
  const auto spec = rfft(w.samples);
  std::vector<double> mag(spec.size());
  for (std::size_t i = 0; i < spec.size(); ++i) mag[i] = std::abs(spec[i]);
  // 1 Hz bins for a one-second signal.
  for (int k = 1; k <= 10; ++k) {
    const int center = 200 * k;
    bool local_max = false;
    for (int b = center - 1; b <= center + 1; ++b) {
      if (mag[b] > mag[b - 1] && mag[b] > mag[b + 1]) local_max = true;
    }
    CHECK_MESSAGE(local_max, "harmonic " << k);
  }
}

TEST_CASE("the noise floor sits at least 40 dB below the harmonics") {
  const Waveform w = synth_tone_complex(200.0, 10, 1.0, 16000, 12);
  const auto spec = rfft(w.samples);
  double harmonic = 0.0;
  double rest = 0.0;
  for (std::size_t i = 1; i < spec.size(); ++i) {
    const double p = std::norm(spec[i]);
    const long nearest = std::lround(static_cast<double>(i) / 200.0);
    const bool near_harmonic = nearest >= 1 && nearest <= 10 && std::abs(static_cast<long>(i) - 200 * nearest) <= 2;
    (near_harmonic ? harmonic : rest) += p;
  }
  CHECK(10.0 * std::log10(harmonic / rest) >= 40.0);
}
