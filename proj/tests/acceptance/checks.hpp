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

#include <chrono>
#include <filesystem>
#include <functional>
#include <string>

namespace replaycm::acceptance {

struct Outcome {
  bool pass = false;
  std::string detail;
  // Seconds spent producing results shared with an earlier criterion; not
  // charged to this criterion's budget.
  double shared_s = 0.0;
};

struct Context {
  std::filesystem::path work_dir;
  std::filesystem::path cli;
  std::filesystem::path experiment_config;
  std::filesystem::path results_dir;
};

Outcome architecture_fidelity(const Context& ctx);
Outcome loss_correctness(const Context& ctx);
Outcome autodiff(const Context& ctx);
Outcome mgd_degeneracy(const Context& ctx);
Outcome cqt_structure(const Context& ctx);
Outcome metric_oracles(const Context& ctx);
Outcome directional_bfl(const Context& ctx);
Outcome fusion(const Context& ctx);
Outcome saliency(const Context& ctx);
Outcome determinism(const Context& ctx);

// Runs the CLI with `args`, returning the exit code; stdout goes to `out`.
int run_cli(const Context& ctx, const std::string& args, const std::filesystem::path& out = {});

std::string fmt(const char* format, ...) __attribute__((format(printf, 1, 2)));

}  // namespace replaycm::acceptance
