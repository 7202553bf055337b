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

namespace replaycm {

// Distance bands A/B/C: 10-50 cm, 50-100 cm, beyond 100 cm.
// Device quality A/B/C: perfect, high, low.
enum class FactorClass : std::uint8_t { kA = 0, kB = 1, kC = 2 };

struct AttackSpec {
  FactorClass distance = FactorClass::kA;
  FactorClass quality = FactorClass::kA;

  std::string code() const;
  // Index in AA, AB, AC, BA, ..., CC order.
  int index() const { return 3 * static_cast<int>(distance) + static_cast<int>(quality); }
  static AttackSpec from_index(int index);
  static AttackSpec parse(std::string_view code);

  friend bool operator==(const AttackSpec&, const AttackSpec&) = default;
};

inline constexpr int kAttackCount = 9;
const std::array<AttackSpec, kAttackCount>& all_attacks();

enum class Label : std::uint8_t { kBonafide = 0, kSpoof = 1 };
std::string_view label_name(Label label);

enum class Split : std::uint8_t { kTrain = 0, kDev = 1, kEval = 2 };
std::string_view split_name(Split split);

// One protocol line: "<utt_id> <attack_code|-> <bonafide|spoof>".
struct ProtocolEntry {
  std::string utt_id;
  std::optional<AttackSpec> attack;

  Label label() const { return attack ? Label::kSpoof : Label::kBonafide; }
};

struct CorpusManifest {
  Split split = Split::kTrain;
  std::vector<ProtocolEntry> entries;
};

ProtocolEntry parse_protocol_line(std::string_view line, std::size_t line_number);
std::string format_protocol_line(const ProtocolEntry& entry);
std::vector<ProtocolEntry> read_protocol(const std::filesystem::path& path);
void write_protocol(const std::vector<ProtocolEntry>& entries, const std::filesystem::path& path);

}  // namespace replaycm
