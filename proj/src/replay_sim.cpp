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

#include "replay_sim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <thread>

#include "errors.hpp"
#include "features.hpp"
#include "fft.hpp"
#include "rng.hpp"

namespace replaycm {

namespace {

struct Biquad {
  double b0 = 1, b1 = 0, b2 = 0, a1 = 0, a2 = 0;

  static Biquad make(double b0, double b1, double b2, double a0, double a1, double a2) {
    return {b0 / a0, b1 / a0, b2 / a0, a1 / a0, a2 / a0};
  }

  static Biquad lowpass(double f, double fs, double q = std::numbers::sqrt2 / 2) {
    const double w0 = 2 * std::numbers::pi * f / fs;
    const double c = std::cos(w0);
    const double alpha = std::sin(w0) / (2 * q);
    return make((1 - c) / 2, 1 - c, (1 - c) / 2, 1 + alpha, -2 * c, 1 - alpha);
  }

  static Biquad highpass(double f, double fs, double q = std::numbers::sqrt2 / 2) {
    const double w0 = 2 * std::numbers::pi * f / fs;
    const double c = std::cos(w0);
    const double alpha = std::sin(w0) / (2 * q);
    return make((1 + c) / 2, -(1 + c), (1 + c) / 2, 1 + alpha, -2 * c, 1 - alpha);
  }

  static Biquad peaking(double f, double fs, double q, double gain_db) {
    const double a = std::pow(10.0, gain_db / 40.0);
    const double w0 = 2 * std::numbers::pi * f / fs;
    const double c = std::cos(w0);
    const double alpha = std::sin(w0) / (2 * q);
    return make(1 + alpha * a, -2 * c, 1 - alpha * a, 1 + alpha / a, -2 * c, 1 - alpha / a);
  }

  void apply(std::vector<double>& x) const {
    double x1 = 0, x2 = 0, y1 = 0, y2 = 0;
    for (auto& v : x) {
      const double y = b0 * v + b1 * x1 + b2 * x2 - a1 * y1 - a2 * y2;
      x2 = x1;
      x1 = v;
      y2 = y1;
      y1 = y;
      v = y;
    }
  }
};

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

// Linear convolution truncated to the length of x.
std::vector<double> convolve_same(const std::vector<double>& x, const std::vector<double>& h) {
  const std::size_t n = next_pow2(x.size() + h.size() - 1);
  std::vector<double> xp(n, 0.0);
  std::vector<double> hp(n, 0.0);
  std::copy(x.begin(), x.end(), xp.begin());
  std::copy(h.begin(), h.end(), hp.begin());
  auto xs = rfft(xp);
  const auto hs = rfft(hp);
  for (std::size_t k = 0; k < xs.size(); ++k) xs[k] *= hs[k];
  auto y = irfft(xs, n);
  y.resize(x.size());
  return y;
}

std::vector<double> reverb_response(const DistanceClassParams& p, int sample_rate, Rng& rng) {
  const auto len = std::max<std::size_t>(2, static_cast<std::size_t>(p.rt60 * sample_rate));
  std::vector<double> h(len, 0.0);
  // 60 dB amplitude decay over rt60.
  const double decay = std::log(1000.0) / (p.rt60 * sample_rate);
  const auto onset = static_cast<std::size_t>(0.001 * sample_rate) + 1;
  double tail_energy = 0.0;
  for (std::size_t n = onset; n < len; ++n) {
    h[n] = rng.normal() * std::exp(-decay * static_cast<double>(n - onset));
    tail_energy += h[n] * h[n];
  }
  const double target = std::pow(10.0, -p.drr_db / 10.0);
  const double scale = tail_energy > 0.0 ? std::sqrt(target / tail_energy) : 0.0;
  for (auto& v : h) v *= scale;
  h[0] = 1.0;
  return h;
}

}  // namespace

Waveform degrade(const Waveform& w, const AttackSpec& spec, std::uint64_t seed, const ReplaySimConfig& config) {
  validate(w);
  const auto& dist = config.distance[static_cast<std::size_t>(spec.distance)];
  const auto& qual = config.quality[static_cast<std::size_t>(spec.quality)];
  const double fs = w.sample_rate;
  Rng rng(mix_seed(seed, static_cast<std::uint64_t>(spec.index())));

  std::vector<double> y = w.samples;
  for (auto& v : y) v *= dist.gain;
  y = convolve_same(y, reverb_response(dist, w.sample_rate, rng));

  const double nyquist = fs / 2.0;
  if (qual.low_hz > 0.0 && qual.low_hz < 0.95 * nyquist) {
    const auto hp = Biquad::highpass(qual.low_hz, fs);
    hp.apply(y);
    hp.apply(y);
  }
  if (qual.high_hz < 0.98 * nyquist) {
    const auto lp = Biquad::lowpass(qual.high_hz, fs);
    lp.apply(y);
    lp.apply(y);
  }
  if (qual.drive > 0.0) {
    for (auto& v : y) v = std::tanh(qual.drive * v) / qual.drive;
  }

  const double replay_peak = peak_abs(y);
  const double noise_rms = std::pow(10.0, qual.noise_dbfs / 20.0);
  for (auto& v : y) v += noise_rms * rng.normal();
  if (replay_peak > 0.0) {
    const double scale = 0.9 / peak_abs(y);
    for (auto& v : y) v *= scale;
  }
  for (auto& v : y) v = std::clamp(v, -1.0, 1.0);

  Waveform out;
  out.sample_rate = w.sample_rate;
  out.utt_id = w.utt_id.empty() ? spec.code() : w.utt_id + "_" + spec.code();
  out.samples = std::move(y);
  return out;
}

double log_spectral_distance(const Waveform& a, const Waveform& b) {
  require(a.sample_rate == b.sample_rate, ErrorCategory::kParameter, "sample rates differ");
  FrameSpec spec;
  spec.frame_len = 512;
  spec.hop = 256;
  spec.n_fft = 512;
  spec.window = WindowKind::kHann;
  const std::size_t n = std::min(a.size(), b.size());
  Waveform ta = a;
  Waveform tb = b;
  ta.samples.resize(n);
  tb.samples.resize(n);
  const auto sa = stft(ta, spec);
  const auto sb = stft(tb, spec);
  double total = 0.0;
  for (std::size_t t = 0; t < sa.cols; ++t) {
    double acc = 0.0;
    for (std::size_t k = 0; k < sa.rows; ++k) {
      const double da = 10.0 * std::log10(std::norm(sa.at(k, t)) + kLogFloor);
      const double db = 10.0 * std::log10(std::norm(sb.at(k, t)) + kLogFloor);
      acc += (da - db) * (da - db);
    }
    total += std::sqrt(acc / static_cast<double>(sa.rows));
  }
  return total / static_cast<double>(sa.cols);
}

Waveform synth_source_utterance(std::uint64_t source_seed, int utt_index, double duration, int sample_rate) {
  Rng voice(mix_seed(source_seed, 0));
  const double f0_base = voice.uniform(90.0, 220.0);
  const std::array<double, 3> formants{voice.uniform(300.0, 800.0), voice.uniform(900.0, 2300.0),
                                       voice.uniform(2400.0, 3200.0)};

  const std::uint64_t utt_seed = mix_seed(source_seed, static_cast<std::uint64_t>(utt_index) + 1);
  Rng rng(utt_seed);
  const double f0 = f0_base * rng.uniform(0.9, 1.1);
  const int n_harmonics = std::min(60, static_cast<int>(0.45 * sample_rate / f0));
  Waveform w = synth_tone_complex(f0, n_harmonics, duration, sample_rate, mix_seed(utt_seed, 7));

  for (double f : formants) {
    if (f < 0.45 * sample_rate) Biquad::peaking(f, sample_rate, 4.0, 12.0).apply(w.samples);
  }
  // Syllable-rate amplitude envelope.
  const double rate = rng.uniform(3.0, 5.0);
  const double phase = rng.uniform(0.0, std::numbers::pi);
  for (std::size_t i = 0; i < w.samples.size(); ++i) {
    const double t = static_cast<double>(i) / sample_rate;
    w.samples[i] *= 0.3 + 0.7 * std::abs(std::sin(std::numbers::pi * rate * t + phase));
  }
  const double peak = peak_abs(w.samples);
  if (peak > 0.0) {
    for (auto& v : w.samples) v *= 0.9 / peak;
  }
  return w;
}

std::filesystem::path protocol_path(const std::filesystem::path& corpus_dir, Split split) {
  return corpus_dir / ("protocol_" + std::string(split_name(split)) + ".txt");
}

std::vector<CorpusManifest> generate_corpus(const std::filesystem::path& out_dir, const CorpusOptions& options) {
  require(options.n_sources > 0 && options.utts_per_source > 0, ErrorCategory::kParameter,
          "source and utterance counts must be positive");
  double ratio_sum = 0.0;
  for (double r : options.split_ratios) {
    require(r >= 0.0, ErrorCategory::kParameter, "split ratios must be non-negative");
    ratio_sum += r;
  }
  require(std::abs(ratio_sum - 1.0) < 1e-9, ErrorCategory::kParameter, "split ratios must sum to 1");
  require(options.duration > 0.0 && options.sample_rate > 0, ErrorCategory::kParameter,
          "duration and sample rate must be positive");

  namespace fs = std::filesystem;
  if (fs::exists(out_dir)) {
    require(fs::is_directory(out_dir) && fs::is_empty(out_dir), ErrorCategory::kIo,
            "output directory " + out_dir.string() + " already exists and is not empty");
  }
  std::error_code ec;
  fs::create_directories(out_dir / "wav", ec);
  require(!ec, ErrorCategory::kIo, "cannot create " + (out_dir / "wav").string() + ": " + ec.message());

  // Sources are assigned to splits as contiguous blocks, so source identities
  // never cross splits.
  std::array<int, 3> counts{};
  counts[0] = static_cast<int>(std::lround(options.split_ratios[0] * options.n_sources));
  counts[1] = static_cast<int>(std::lround(options.split_ratios[1] * options.n_sources));
  counts[0] = std::min(counts[0], options.n_sources);
  counts[1] = std::min(counts[1], options.n_sources - counts[0]);
  counts[2] = options.n_sources - counts[0] - counts[1];
  // Rounding may leave a split with a positive ratio empty; move one source
  // into it from the largest split that can spare one.
  for (int s = 0; s < 3; ++s) {
    if (options.split_ratios[s] <= 0.0 || counts[s] > 0) continue;
    const auto donor = std::max_element(counts.begin(), counts.end());
    if (*donor > 1) {
      --*donor;
      ++counts[s];
    }
  }

  struct Task {
    Split split;
    int source;
    int utt;
  };
  std::vector<Task> tasks;
  int source = 0;
  for (int s = 0; s < 3; ++s) {
    for (int i = 0; i < counts[static_cast<std::size_t>(s)]; ++i, ++source) {
      for (int u = 0; u < options.utts_per_source; ++u) tasks.push_back({static_cast<Split>(s), source, u});
    }
  }

  const char prefixes[3] = {'T', 'D', 'E'};
  auto bonafide_id = [&](const Task& t) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%c_s%04d_u%03d", prefixes[static_cast<int>(t.split)], t.source, t.utt);
    return std::string(buf);
  };

  std::atomic<std::size_t> next{0};
  std::vector<std::string> errors(tasks.size());
  auto worker = [&] {
    for (std::size_t i = next++; i < tasks.size(); i = next++) {
      try {
        const Task& t = tasks[i];
        const std::uint64_t source_seed = mix_seed(options.seed, static_cast<std::uint64_t>(t.source));
        Waveform bona = synth_source_utterance(source_seed, t.utt, options.duration, options.sample_rate);
        bona.utt_id = bonafide_id(t);
        write_wav(bona, out_dir / "wav" / (bona.utt_id + ".wav"));
        const std::uint64_t replay_seed = mix_seed(source_seed, 1000 + static_cast<std::uint64_t>(t.utt));
        for (const AttackSpec& spec : all_attacks()) {
          Waveform spoof = degrade(bona, spec, replay_seed, options.sim);
          write_wav(spoof, out_dir / "wav" / (spoof.utt_id + ".wav"));
        }
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  const int jobs = std::max(1, options.jobs);
  std::vector<std::thread> pool;
  for (int j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  for (const auto& e : errors) require(e.empty(), ErrorCategory::kIo, e);

  std::vector<CorpusManifest> manifests(3);
  for (int s = 0; s < 3; ++s) manifests[static_cast<std::size_t>(s)].split = static_cast<Split>(s);
  for (const Task& t : tasks) {
    auto& m = manifests[static_cast<std::size_t>(t.split)];
    const std::string id = bonafide_id(t);
    m.entries.push_back({id, std::nullopt});
    for (const AttackSpec& spec : all_attacks()) m.entries.push_back({id + "_" + spec.code(), spec});
  }
  for (const auto& m : manifests) write_protocol(m.entries, protocol_path(out_dir, m.split));
  return manifests;
}

}  // namespace replaycm
