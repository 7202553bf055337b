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

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "scoring.hpp"

namespace replaycm {

// Operating points of a detector that accepts a trial when score > threshold.
// Thresholds are -inf, the midpoints between adjacent distinct scores, and
// +inf, in increasing order.
struct ErrorCurve {
  std::vector<double> thresholds;
  std::vector<double> p_fa;    // spoof accepted
  std::vector<double> p_miss;  // bonafide rejected
};

ErrorCurve error_curve(std::span<const double> bonafide, std::span<const double> spoof);

struct EerResult {
  double eer = 0.0;
  double threshold = 0.0;
};

// Equal error rate of the ROC convex hull: the point where the lower hull of
// the (P_fa, P_miss) operating points crosses P_fa = P_miss.
EerResult compute_eer(std::span<const double> bonafide, std::span<const double> spoof);

struct TdcfParams {
  double p_spoof = 0.05;
  double p_tar = 0.95 * 0.99;
  double p_non = 0.95 * 0.01;
  double c_miss_asv = 1.0;
  double c_fa_asv = 10.0;
  double c_miss_cm = 1.0;
  double c_fa_cm = 10.0;
  double p_miss_asv = 0.05;
  double p_fa_asv = 0.05;
  double p_miss_spoof_asv = 0.30;

  double c1() const { return p_tar * (c_miss_cm - c_miss_asv * p_miss_asv) - p_non * c_fa_asv * p_fa_asv; }
  double c2() const { return c_fa_cm * p_spoof * (1.0 - p_miss_spoof_asv); }
  void validate() const;
};

struct TdcfResult {
  double min_tdcf = 0.0;
  double threshold = 0.0;
};

// min over thresholds of (C1 P_miss + C2 P_fa) / min(C1, C2).
TdcfResult compute_min_tdcf(std::span<const double> bonafide, std::span<const double> spoof,
                            const TdcfParams& params = {});

struct MetricResult {
  double eer = 0.0;
  double eer_threshold = 0.0;
  double min_tdcf = 0.0;
  double tdcf_threshold = 0.0;
  std::size_t n_bonafide = 0;
  std::size_t n_spoof = 0;
};

// Records must carry labels.
MetricResult evaluate(const ScoreSet& records, const TdcfParams& params = {});

// "eer=<f> min_tdcf=<f> n_bonafide=<n> n_spoof=<n>"
std::string format_metric_line(const MetricResult& m);

struct BreakdownRow {
  AttackSpec attack;
  MetricResult metrics;
};

// One row per attack code present, in AA..CC order, each scored against all
// bonafide records.
std::vector<BreakdownRow> breakdown(const ScoreSet& records, const TdcfParams& params = {});

// Header "attack_code\teer\tmin_tdcf\tn_spoof" and one tab-separated row per code.
std::string format_breakdown(const std::vector<BreakdownRow>& rows);

}  // namespace replaycm
