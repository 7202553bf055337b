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

#include "metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <iterator>
#include <limits>

#include "errors.hpp"

namespace replaycm {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_both_classes(std::span<const double> bonafide, std::span<const double> spoof) {
  require(!bonafide.empty() && !spoof.empty(), ErrorCategory::kMetric,
          "metrics need at least one bonafide and one spoof score (got " + std::to_string(bonafide.size()) +
              " and " + std::to_string(spoof.size()) + ")");
  for (auto set : {bonafide, spoof}) {
    for (double s : set) require(std::isfinite(s), ErrorCategory::kMetric, "non-finite score");
  }
}

double cross(double ox, double oy, double ax, double ay, double bx, double by) {
  return (ax - ox) * (by - oy) - (ay - oy) * (bx - ox);
}

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

ErrorCurve error_curve(std::span<const double> bonafide, std::span<const double> spoof) {
  require_both_classes(bonafide, spoof);
  std::vector<double> b(bonafide.begin(), bonafide.end());
  std::vector<double> s(spoof.begin(), spoof.end());
  std::sort(b.begin(), b.end());
  std::sort(s.begin(), s.end());
  std::vector<double> all;
  all.reserve(b.size() + s.size());
  std::merge(b.begin(), b.end(), s.begin(), s.end(), std::back_inserter(all));
  all.erase(std::unique(all.begin(), all.end()), all.end());

  ErrorCurve c;
  c.thresholds.reserve(all.size() + 1);
  c.thresholds.push_back(-kInf);
  for (std::size_t i = 0; i + 1 < all.size(); ++i) c.thresholds.push_back(all[i] + (all[i + 1] - all[i]) / 2.0);
  c.thresholds.push_back(kInf);

  const double nb = static_cast<double>(b.size());
  const double ns = static_cast<double>(s.size());
  std::size_t ib = 0;
  std::size_t is = 0;
  for (double t : c.thresholds) {
    while (ib < b.size() && b[ib] < t) ++ib;
    while (is < s.size() && s[is] < t) ++is;
    c.p_miss.push_back(static_cast<double>(ib) / nb);
    c.p_fa.push_back(static_cast<double>(s.size() - is) / ns);
  }
  return c;
}

EerResult compute_eer(std::span<const double> bonafide, std::span<const double> spoof) {
  const ErrorCurve c = error_curve(bonafide, spoof);
  // Walk from +inf (P_fa = 0) towards -inf so P_fa ascends, building the lower hull.
  std::vector<std::size_t> hull;
  for (std::size_t k = c.thresholds.size(); k-- > 0;) {
    while (hull.size() >= 2) {
      const std::size_t a = hull[hull.size() - 2];
      const std::size_t o = hull[hull.size() - 1];
      if (cross(c.p_fa[a], c.p_miss[a], c.p_fa[o], c.p_miss[o], c.p_fa[k], c.p_miss[k]) <= 0.0) {
        hull.pop_back();
      } else {
        break;
      }
    }
    hull.push_back(k);
  }
  for (std::size_t h = 0; h + 1 < hull.size(); ++h) {
    const std::size_t i = hull[h];
    const std::size_t j = hull[h + 1];
    const double d1 = c.p_miss[i] - c.p_fa[i];
    const double d2 = c.p_miss[j] - c.p_fa[j];
    if (d1 >= 0.0 && d2 <= 0.0) {
      if (d1 == d2) return {c.p_fa[i], c.thresholds[i]};
      const double u = d1 / (d1 - d2);
      const double eer = c.p_fa[i] + u * (c.p_fa[j] - c.p_fa[i]);
      return {eer, u <= 0.5 ? c.thresholds[i] : c.thresholds[j]};
    }
  }
  fail(ErrorCategory::kInternal, "error curve does not cross the diagonal");
}

void TdcfParams::validate() const {
  for (double p : {p_spoof, p_tar, p_non}) {
    require(p > 0.0 && p < 1.0, ErrorCategory::kParameter, "t-DCF priors must lie in (0, 1)");
  }
  require(std::abs(p_spoof + p_tar + p_non - 1.0) <= 1e-9, ErrorCategory::kParameter,
          "t-DCF priors must sum to 1");
  for (double c : {c_miss_asv, c_fa_asv, c_miss_cm, c_fa_cm}) {
    require(c > 0.0, ErrorCategory::kParameter, "t-DCF costs must be positive");
  }
  for (double r : {p_miss_asv, p_fa_asv, p_miss_spoof_asv}) {
    require(r >= 0.0 && r <= 1.0, ErrorCategory::kParameter, "ASV error rates must lie in [0, 1]");
  }
  require(c1() > 0.0 && c2() > 0.0, ErrorCategory::kParameter,
          "degenerate ASV operating point: C1 = " + std::to_string(c1()) + ", C2 = " + std::to_string(c2()));
}

TdcfResult compute_min_tdcf(std::span<const double> bonafide, std::span<const double> spoof,
                            const TdcfParams& params) {
  params.validate();
  const ErrorCurve c = error_curve(bonafide, spoof);
  const double c1 = params.c1();
  const double c2 = params.c2();
  const double norm = std::min(c1, c2);
  TdcfResult best{kInf, 0.0};
  for (std::size_t k = 0; k < c.thresholds.size(); ++k) {
    const double v = (c1 * c.p_miss[k] + c2 * c.p_fa[k]) / norm;
    if (v < best.min_tdcf) best = {v, c.thresholds[k]};
  }
  return best;
}

MetricResult evaluate(const ScoreSet& records, const TdcfParams& params) {
  std::vector<double> bonafide;
  std::vector<double> spoof;
  for (const auto& r : records) {
    require(r.label.has_value(), ErrorCategory::kData, "utterance '" + r.utt_id + "' has no label");
    (*r.label == Label::kBonafide ? bonafide : spoof).push_back(r.score);
  }
  MetricResult m;
  const EerResult e = compute_eer(bonafide, spoof);
  const TdcfResult t = compute_min_tdcf(bonafide, spoof, params);
  m.eer = e.eer;
  m.eer_threshold = e.threshold;
  m.min_tdcf = t.min_tdcf;
  m.tdcf_threshold = t.threshold;
  m.n_bonafide = bonafide.size();
  m.n_spoof = spoof.size();
  return m;
}

std::string format_metric_line(const MetricResult& m) {
  return "eer=" + fixed6(m.eer) + " min_tdcf=" + fixed6(m.min_tdcf) + " n_bonafide=" +
         std::to_string(m.n_bonafide) + " n_spoof=" + std::to_string(m.n_spoof);
}

std::vector<BreakdownRow> breakdown(const ScoreSet& records, const TdcfParams& params) {
  ScoreSet bonafide;
  std::array<ScoreSet, kAttackCount> by_code;
  for (const auto& r : records) {
    require(r.label.has_value(), ErrorCategory::kData, "utterance '" + r.utt_id + "' has no label");
    if (*r.label == Label::kBonafide) {
      bonafide.push_back(r);
    } else {
      require(r.attack.has_value(), ErrorCategory::kData, "spoof utterance '" + r.utt_id + "' has no attack code");
      by_code[static_cast<std::size_t>(r.attack->index())].push_back(r);
    }
  }
  std::vector<BreakdownRow> rows;
  for (int i = 0; i < kAttackCount; ++i) {
    const ScoreSet& spoof = by_code[static_cast<std::size_t>(i)];
    if (spoof.empty()) continue;
    ScoreSet subset = bonafide;
    subset.insert(subset.end(), spoof.begin(), spoof.end());
    rows.push_back({AttackSpec::from_index(i), evaluate(subset, params)});
  }
  return rows;
}

std::string format_breakdown(const std::vector<BreakdownRow>& rows) {
  std::string out = "attack_code\teer\tmin_tdcf\tn_spoof\n";
  for (const auto& r : rows) {
    out += r.attack.code() + "\t" + fixed6(r.metrics.eer) + "\t" + fixed6(r.metrics.min_tdcf) + "\t" +
           std::to_string(r.metrics.n_spoof) + "\n";
  }
  return out;
}

}  // namespace replaycm
