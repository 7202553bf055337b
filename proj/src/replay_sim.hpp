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

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "audio.hpp"
#include "protocol.hpp"

namespace replaycm {

// Replay-chain parameters, one set per factor class. Index with FactorClass.
struct DistanceClassParams {
  double gain;
  double rt60;    // seconds
  double drr_db;  // direct-to-reverberant energy ratio
};

struct QualityClassParams {
  double low_hz;
  double high_hz;
  double drive;       // tanh soft-clipper drive; near 0 is linear
  double noise_dbfs;  // RMS of the device noise floor
};

struct ReplaySimConfig {
  std::array<DistanceClassParams, 3> distance{{
      {0.9, 0.08, 20.0},
      {0.6, 0.25, 10.0},
      {0.35, 0.5, 3.0},
  }};
  std::array<QualityClassParams, 3> quality{{
      {50.0, 7800.0, 0.05, -75.0},
      {150.0, 6000.0, 1.0, -60.0},
      {300.0, 3400.0, 3.0, -45.0},
  }};
};

// Distance effect (gain + exponentially decaying reverb tail), then device
// effect (band-pass + tanh nonlinearity), then the device noise floor; the
// result is renormalized to peak 0.9 unless the replayed signal is silent.
Waveform degrade(const Waveform& w, const AttackSpec& spec, std::uint64_t seed,
                 const ReplaySimConfig& config = {});

// Mean over frames of the RMS difference of dB power spectra.
double log_spectral_distance(const Waveform& a, const Waveform& b);

// Speech-like bonafide utterance of one synthetic source.
Waveform synth_source_utterance(std::uint64_t source_seed, int utt_index, double duration, int sample_rate);

struct CorpusOptions {
  int n_sources = 10;
  int utts_per_source = 6;
  std::array<double, 3> split_ratios{0.6, 0.2, 0.2};
  std::uint64_t seed = 0;
  double duration = 1.0;
  int sample_rate = kDefaultSampleRate;
  int jobs = 1;
  ReplaySimConfig sim;
};

// Writes <out>/wav/<utt_id>.wav and <out>/protocol_<split>.txt; every
// bonafide utterance gets one replayed copy per attack code.
std::vector<CorpusManifest> generate_corpus(const std::filesystem::path& out_dir, const CorpusOptions& options);

std::filesystem::path protocol_path(const std::filesystem::path& corpus_dir, Split split);

}  // namespace replaycm
