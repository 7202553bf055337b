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
#include <map>
#include <set>

#include "errors.hpp"
#include "protocol.hpp"
#include "replay_sim.hpp"
#include "test_util.hpp"

using namespace replaycm;
using replaycm::testing::TempDir;

TEST_CASE("attack codes cover the nine combinations in order") {
  const auto& all = all_attacks();
  const char* expected[] = {"AA", "AB", "AC", "BA", "BB", "BC", "CA", "CB", "CC"};
  for (int i = 0; i < kAttackCount; ++i) {
    CHECK(all[static_cast<std::size_t>(i)].code() == expected[i]);
    CHECK(AttackSpec::parse(expected[i]) == all[static_cast<std::size_t>(i)]);
    CHECK(AttackSpec::from_index(i).index() == i);
  }
  for (const char* bad : {"AD", "A", "AAA", "-", "aa"}) {
    try {
      AttackSpec::parse(bad);
      FAIL("accepted " << bad);
    } catch (const Error& e) {
      CHECK(e.category() == ErrorCategory::kData);
    }
  }
}

TEST_CASE("protocol lines round trip") {
  const ProtocolEntry bona{"T_s0001_u000", std::nullopt};
  const ProtocolEntry spoof{"T_s0001_u000_BC", AttackSpec::parse("BC")};
  CHECK(format_protocol_line(bona) == "T_s0001_u000 - bonafide");
  CHECK(format_protocol_line(spoof) == "T_s0001_u000_BC BC spoof");
  const auto b = parse_protocol_line(format_protocol_line(bona), 1);
  const auto s = parse_protocol_line(format_protocol_line(spoof), 2);
  CHECK(b.utt_id == bona.utt_id);
  CHECK(!b.attack);
  CHECK(s.attack == spoof.attack);
  CHECK(s.label() == Label::kSpoof);
  try {
    parse_protocol_line("x AA bonafide", 7);
    FAIL("inconsistent label accepted");
  } catch (const Error& e) {
    CHECK(e.category() == ErrorCategory::kParse);
    CHECK(std::string(e.what()).find('7') != std::string::npos);
  }
}

TEST_CASE("degrade is deterministic and tags the utterance id") {
  Waveform src = synth_source_utterance(42, 0, 0.5, 16000);
  src.utt_id = "u";
  const auto spec = AttackSpec::parse("BB");
  const Waveform a = degrade(src, spec, 5);
  const Waveform b = degrade(src, spec, 5);
  CHECK(a.samples == b.samples);
  CHECK(a.utt_id == "u_BB");
  CHECK(a.samples.size() == src.samples.size());
  CHECK(peak_abs(a.samples) == doctest::Approx(0.9).epsilon(1e-12));
}

TEST_CASE("AA is the closest attack to the source in log-spectral distance") {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const Waveform src = synth_source_utterance(100 + seed, 1, 0.5, 16000);
    std::map<std::string, double> lsd;
    for (const auto& spec : all_attacks()) lsd[spec.code()] = log_spectral_distance(src, degrade(src, spec, seed));
    for (const auto& [code, d] : lsd) {
      if (code != "AA") CHECK_MESSAGE(lsd["AA"] < d, "seed " << seed << " code " << code);
    }
    CHECK(lsd["AA"] < lsd["AC"]);
    CHECK(lsd["AA"] < lsd["CA"]);
    CHECK(lsd["AA"] < lsd["CC"]);
  }
}

TEST_CASE("silence replays as the device noise floor") {
  Waveform silence{std::vector<double>(16000, 0.0), 16000, "s"};
  const ReplaySimConfig cfg;
  for (const auto& spec : all_attacks()) {
    const Waveform out = degrade(silence, spec, 3, cfg);
    const double limit = std::pow(10.0, cfg.quality[static_cast<std::size_t>(spec.quality)].noise_dbfs / 20.0);
    CHECK_MESSAGE(rms(out.samples) < 1.1 * limit, spec.code());
  }
}

TEST_CASE("the best device is nearly linear") {
  // A tanh soft clipper with the class-A drive on a full-scale sine.
  const double drive = ReplaySimConfig{}.quality[0].drive;
  const int n = 16000;
  std::vector<double> y(n);
  for (int i = 0; i < n; ++i) {
    const double x = 0.9 * std::sin(2.0 * 3.141592653589793 * 100.0 * i / n);
    y[i] = std::tanh(drive * x) / drive;
  }
  // Harmonic amplitudes by direct projection onto 100 Hz multiples.
  auto amp = [&](int k) {
    double re = 0.0, im = 0.0;
    for (int i = 0; i < n; ++i) {
      const double ph = 2.0 * 3.141592653589793 * 100.0 * k * i / n;
      re += y[i] * std::cos(ph);
      im += y[i] * std::sin(ph);
    }
    return 2.0 * std::hypot(re, im) / n;
  };
  double distortion = 0.0;
  for (int k = 2; k <= 9; ++k) distortion += amp(k) * amp(k);
  CHECK(std::sqrt(distortion) / amp(1) < 1e-3);
}

TEST_CASE("generate_corpus produces balanced, disjoint, reproducible manifests") {
  TempDir a("corpus");
  TempDir b("corpus");
  CorpusOptions opts;
  opts.n_sources = 10;
  opts.utts_per_source = 6;
  opts.seed = 9;
  opts.duration = 0.1;
  opts.jobs = 2;
  const auto manifests = generate_corpus(a / "c", opts);
  generate_corpus(b / "c", opts);

  std::size_t bona = 0;
  std::size_t spoof = 0;
  std::map<std::string, std::size_t> per_code;
  std::set<std::string> ids;
  std::map<Split, std::set<std::string>> sources;
  for (const auto& m : manifests) {
    std::size_t split_bona = 0;
    std::size_t split_spoof = 0;
    std::map<std::string, std::size_t> split_codes;
    for (const auto& e : m.entries) {
      CHECK(ids.insert(e.utt_id).second);
      sources[m.split].insert(e.utt_id.substr(2, 5));
      if (e.attack) {
        ++split_spoof;
        ++per_code[e.attack->code()];
        ++split_codes[e.attack->code()];
      } else {
        ++split_bona;
      }
      CHECK(std::filesystem::exists(a / "c" / "wav" / (e.utt_id + ".wav")));
    }
    CHECK(split_spoof == 9 * split_bona);
    for (const auto& [code, n] : split_codes) CHECK(n == split_bona);
    bona += split_bona;
    spoof += split_spoof;

    const auto path = protocol_path(a / "c", m.split);
    const auto parsed = read_protocol(path);
    REQUIRE(parsed.size() == m.entries.size());
    for (std::size_t i = 0; i < parsed.size(); ++i) {
      CHECK(parsed[i].utt_id == m.entries[i].utt_id);
      CHECK(parsed[i].attack == m.entries[i].attack);
    }
    CHECK(replaycm::testing::slurp(path) == replaycm::testing::slurp(protocol_path(b / "c", m.split)));
  }
  CHECK(bona == 60);
  CHECK(spoof == 540);
  for (const auto& [code, n] : per_code) CHECK(n == 60);
  for (Split x : {Split::kTrain, Split::kDev, Split::kEval}) {
    for (Split y : {Split::kTrain, Split::kDev, Split::kEval}) {
      if (x == y) continue;
      for (const auto& s : sources[x]) CHECK(sources[y].count(s) == 0);
    }
  }
  const auto wav = std::string("wav/T_s0000_u000_CC.wav");
  CHECK(replaycm::testing::slurp(a / "c" / wav) == replaycm::testing::slurp(b / "c" / wav));
}

TEST_CASE("generate_corpus refuses a non-empty output directory") {
  TempDir a("corpus");
  replaycm::testing::spit(a / "occupied.txt", "x");
  CorpusOptions opts;
  opts.n_sources = 3;
  opts.utts_per_source = 1;
  opts.duration = 0.05;
  try {
    generate_corpus(a.path(), opts);
    FAIL("collision accepted");
  } catch (const Error& e) {
    CHECK(e.category() == ErrorCategory::kIo);
  }
}

TEST_CASE("every split with a positive ratio receives a source") {
  TempDir a("corpus_small");
  CorpusOptions opts;
  opts.n_sources = 3;
  opts.utts_per_source = 2;
  opts.duration = 0.05;
  const auto manifests = generate_corpus(a / "c", opts);
  REQUIRE(manifests.size() == 3);
  for (const auto& m : manifests) CHECK(m.entries.size() == 20);
}
