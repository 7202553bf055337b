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

#include "protocol.hpp"

#include <fstream>
#include <sstream>

#include "errors.hpp"

namespace replaycm {

namespace {

std::string factor_letter(FactorClass c) { return std::string(1, static_cast<char>('A' + static_cast<int>(c))); }

}  // namespace

std::string AttackSpec::code() const { return factor_letter(distance) + factor_letter(quality); }

AttackSpec AttackSpec::from_index(int index) {
  require(index >= 0 && index < kAttackCount, ErrorCategory::kParameter, "attack index out of range");
  return {static_cast<FactorClass>(index / 3), static_cast<FactorClass>(index % 3)};
}

AttackSpec AttackSpec::parse(std::string_view code) {
  auto valid = [](char c) { return c >= 'A' && c <= 'C'; };
  require(code.size() == 2 && valid(code[0]) && valid(code[1]), ErrorCategory::kData,
          "unknown attack code '" + std::string(code) + "'");
  return {static_cast<FactorClass>(code[0] - 'A'), static_cast<FactorClass>(code[1] - 'A')};
}

const std::array<AttackSpec, kAttackCount>& all_attacks() {
  static const std::array<AttackSpec, kAttackCount> attacks = [] {
    std::array<AttackSpec, kAttackCount> a;
    for (int i = 0; i < kAttackCount; ++i) a[static_cast<std::size_t>(i)] = AttackSpec::from_index(i);
    return a;
  }();
  return attacks;
}

std::string_view label_name(Label label) { return label == Label::kBonafide ? "bonafide" : "spoof"; }

std::string_view split_name(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kDev: return "dev";
    case Split::kEval: return "eval";
  }
  return "train";
}

ProtocolEntry parse_protocol_line(std::string_view line, std::size_t line_number) {
  std::istringstream in{std::string(line)};
  std::string utt;
  std::string code;
  std::string label;
  std::string extra;
  const std::string where = "protocol line " + std::to_string(line_number);
  require(static_cast<bool>(in >> utt >> code >> label) && !(in >> extra), ErrorCategory::kParse,
          where + ": expected '<utt_id> <attack_code|-> <bonafide|spoof>'");
  ProtocolEntry entry;
  entry.utt_id = utt;
  if (label == "bonafide") {
    require(code == "-", ErrorCategory::kParse, where + ": bonafide entry must have attack code '-'");
  } else if (label == "spoof") {
    require(code != "-", ErrorCategory::kParse, where + ": spoof entry needs an attack code");
    try {
      entry.attack = AttackSpec::parse(code);
    } catch (const Error& e) {
      fail(ErrorCategory::kData, where + ": " + e.what());
    }
  } else {
    fail(ErrorCategory::kParse, where + ": unknown label '" + label + "'");
  }
  return entry;
}

std::string format_protocol_line(const ProtocolEntry& entry) {
  return entry.utt_id + " " + (entry.attack ? entry.attack->code() : std::string("-")) + " " +
         std::string(label_name(entry.label()));
}

std::vector<ProtocolEntry> read_protocol(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCategory::kIo, "cannot open protocol " + path.string());
  std::vector<ProtocolEntry> entries;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    entries.push_back(parse_protocol_line(line, number));
  }
  return entries;
}

void write_protocol(const std::vector<ProtocolEntry>& entries, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  require(out.good(), ErrorCategory::kIo, "cannot write protocol " + path.string());
  for (const auto& e : entries) out << format_protocol_line(e) << '\n';
  require(out.good(), ErrorCategory::kIo, "write failed for " + path.string());
}

}  // namespace replaycm
