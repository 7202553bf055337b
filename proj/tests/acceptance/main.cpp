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

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "checks.hpp"
#include "errors.hpp"

using namespace replaycm::acceptance;

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks, one PASS/FAIL line per criterion"};
  Context ctx;
  std::string work = (std::filesystem::temp_directory_path() / "replaycm_acceptance").string();
  std::string cli = REPLAYCM_CLI;
  std::string config = std::string(REPLAYCM_SOURCE_DIR) + "/configs/acceptance.ini";
  std::string results;
  std::vector<int> only;
  app.add_option("--work-dir", work, "Scratch directory (recreated)");
  app.add_option("--cli", cli, "replaycm executable");
  app.add_option("--experiment-config", config, "Config for the desk-scale training experiments");
  app.add_option("--results-dir", results, "Also keep experiment score files and tables here");
  app.add_option("--only", only, "Run only these criteria")->check(CLI::Range(1, 10));
  CLI11_PARSE(app, argc, argv);

  std::filesystem::remove_all(work);
  std::filesystem::create_directories(work);
  ctx.work_dir = work;
  ctx.cli = cli;
  ctx.experiment_config = config;
  ctx.results_dir = results;
  if (!results.empty()) std::filesystem::create_directories(results);

  struct Criterion {
    int id;
    const char* name;
    Outcome (*fn)(const Context&);
    double budget_s;
  };
  const Criterion criteria[] = {
      {1, "architecture fidelity", architecture_fidelity, 1},
      {2, "loss correctness", loss_correctness, 5},
      {3, "autodiff", autodiff, 30},
      {4, "MGD degeneracy", mgd_degeneracy, 10},
      {5, "CQT structure", cqt_structure, 10},
      {6, "metric oracles", metric_oracles, 30},
      {7, "directional BFL claim", directional_bfl, 1800},
      {8, "fusion", fusion, 300},
      {9, "saliency", saliency, 60},
      {10, "determinism and persistence", determinism, 300},
  };
  const std::set<int> selected(only.begin(), only.end());
  int failures = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.fn(ctx);
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (o.shared_s > 0.0) o.detail += fmt("; %.1f s of shared training not counted", o.shared_s);
    if (secs - o.shared_s > c.budget_s) {
      o.pass = false;
      o.detail += "; over the " + std::to_string(static_cast<int>(c.budget_s)) + " s budget";
    }
    std::printf("criterion %d %s: %s (%s; %.1f s)\n", c.id, c.name, o.pass ? "PASS" : "FAIL", o.detail.c_str(), secs);
    std::fflush(stdout);
    failures += !o.pass;
  }
  std::filesystem::remove_all(work);
  return failures == 0 ? 0 : 1;
}
