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

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "metrics.hpp"
#include "rng.hpp"

namespace replaycm::testing {

struct SweepPoint {
  double p_fa;
  double p_miss;
};

// Every threshold strictly between adjacent distinct scores plus both
// infinities, with error rates counted directly.
inline std::vector<SweepPoint> brute_force_sweep(std::span<const double> bonafide, std::span<const double> spoof) {
  std::vector<double> all(bonafide.begin(), bonafide.end());
  all.insert(all.end(), spoof.begin(), spoof.end());
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());
  std::vector<double> thresholds{-std::numeric_limits<double>::infinity()};
  for (std::size_t i = 1; i < all.size(); ++i) thresholds.push_back(all[i - 1] + (all[i] - all[i - 1]) / 2.0);
  thresholds.push_back(std::numeric_limits<double>::infinity());
  std::vector<SweepPoint> out;
  for (double t : thresholds) {
    std::size_t fa = 0, miss = 0;
    for (double s : spoof) fa += s > t;
    for (double s : bonafide) miss += !(s > t);
    out.push_back({static_cast<double>(fa) / static_cast<double>(spoof.size()),
                   static_cast<double>(miss) / static_cast<double>(bonafide.size())});
  }
  return out;
}

// Smallest point where a segment between two operating points (or a single
// operating point) meets P_fa = P_miss.
inline double brute_force_eer(std::span<const double> bonafide, std::span<const double> spoof) {
  const auto pts = brute_force_sweep(bonafide, spoof);
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double di = pts[i].p_miss - pts[i].p_fa;
    if (di == 0.0) best = std::min(best, pts[i].p_fa);
    for (std::size_t j = 0; j < pts.size(); ++j) {
      const double dj = pts[j].p_miss - pts[j].p_fa;
      if (!(di > 0.0 && dj < 0.0)) continue;
      const double t = di / (di - dj);
      best = std::min(best, pts[i].p_fa + t * (pts[j].p_fa - pts[i].p_fa));
    }
  }
  return best;
}

inline double brute_force_min_tdcf(std::span<const double> bonafide, std::span<const double> spoof,
                                   const TdcfParams& p = {}) {
  const double c1 = p.c1(), c2 = p.c2();
  double best = std::numeric_limits<double>::infinity();
  for (const auto& pt : brute_force_sweep(bonafide, spoof)) best = std::min(best, c1 * pt.p_miss + c2 * pt.p_fa);
  return best / std::min(c1, c2);
}

struct RandomScores {
  std::vector<double> bonafide;
  std::vector<double> spoof;
};

// Overlapping classes with occasional ties from a coarse grid.
inline RandomScores random_score_set(Rng& rng, std::size_t max_n = 500) {
  RandomScores r;
  const std::size_t n = 2 + rng.below(max_n - 1);
  const std::size_t n_bona = 1 + rng.below(n - 1);
  const double shift = rng.uniform(-1.0, 3.0);
  const bool coarse = rng.uniform() < 0.3;
  for (std::size_t i = 0; i < n; ++i) {
    double s = rng.normal() + (i < n_bona ? shift : 0.0);
    if (coarse) s = std::round(s * 4.0) / 4.0;
    (i < n_bona ? r.bonafide : r.spoof).push_back(s);
  }
  return r;
}

}  // namespace replaycm::testing
