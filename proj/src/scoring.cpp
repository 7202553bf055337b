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

#include "scoring.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "errors.hpp"

namespace replaycm {

namespace {

// Adds one to a non-negative decimal digit string.
void increment_digits(std::string& digits) {
  for (auto it = digits.rbegin(); it != digits.rend(); ++it) {
    if (*it != '9') {
      ++*it;
      return;
    }
    *it = '0';
  }
  digits.insert(digits.begin(), '1');
}

double sorted_mean(std::vector<double>& values) {
  std::sort(values.begin(), values.end());
  double m = values.front();
  for (std::size_t i = 1; i < values.size(); ++i) m += (values[i] - m) / static_cast<double>(i + 1);
  return m;
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

// Solves a x = b in place for a small dense system (partial pivoting).
std::vector<double> solve_dense(std::vector<double> a, std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r) {
      if (std::abs(a[r * n + col]) > std::abs(a[pivot * n + col])) pivot = r;
    }
    require(a[pivot * n + col] != 0.0, ErrorCategory::kNumeric, "logistic fusion: singular Hessian");
    if (pivot != col) {
      for (std::size_t c = 0; c < n; ++c) std::swap(a[col * n + c], a[pivot * n + c]);
      std::swap(b[col], b[pivot]);
    }
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = a[r * n + col] / a[col * n + col];
      for (std::size_t c = col; c < n; ++c) a[r * n + c] -= f * a[col * n + c];
      b[r] -= f * b[col];
    }
  }
  std::vector<double> x(n);
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t c = i + 1; c < n; ++c) s -= a[i * n + c] * x[c];
    x[i] = s / a[i * n + i];
  }
  return x;
}

// Rows of per-system scores aligned on the first system's utterance order.
struct Aligned {
  std::vector<const ScoreRecord*> reference;
  std::vector<std::vector<double>> rows;
};

Aligned align(std::span<const ScoreSet> systems) {
  require(!systems.empty(), ErrorCategory::kParameter, "no score sets to fuse");
  const ScoreSet& first = systems.front();
  std::unordered_set<std::string> first_ids;
  for (const auto& r : first) first_ids.insert(r.utt_id);

  std::vector<std::unordered_map<std::string, double>> lookup(systems.size());
  for (std::size_t k = 0; k < systems.size(); ++k) {
    for (const auto& r : systems[k]) lookup[k].emplace(r.utt_id, r.score);
    std::vector<std::string> diff;
    for (const auto& r : first) {
      if (!lookup[k].count(r.utt_id)) diff.push_back(r.utt_id);
    }
    for (const auto& r : systems[k]) {
      if (!first_ids.count(r.utt_id)) diff.push_back(r.utt_id);
    }
    if (!diff.empty()) {
      std::sort(diff.begin(), diff.end());
      std::string listing;
      for (std::size_t i = 0; i < diff.size() && i < 10; ++i) listing += (i ? " " : "") + diff[i];
      if (diff.size() > 10) listing += " ...";
      fail(ErrorCategory::kAlignment, "score set " + std::to_string(k + 1) + " differs from set 1 in " +
                                          std::to_string(diff.size()) + " utterances: " + listing);
    }
  }

  Aligned out;
  for (const auto& r : first) {
    out.reference.push_back(&r);
    std::vector<double> row(systems.size());
    for (std::size_t k = 0; k < systems.size(); ++k) row[k] = lookup[k].at(r.utt_id);
    out.rows.push_back(std::move(row));
  }
  return out;
}

}  // namespace

std::string format_score(double score) {
  require(std::isfinite(score), ErrorCategory::kParameter, "cannot format a non-finite score");
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, std::abs(score), std::chars_format::scientific);
  const std::string text(buf, res.ptr);
  const auto e_pos = text.find('e');
  std::string digits = text.substr(0, e_pos);
  digits.erase(std::remove(digits.begin(), digits.end(), '.'), digits.end());
  const int exponent = std::stoi(text.substr(e_pos + 1));

  // |score| * 1e6 = digits * 10^shift.
  const int shift = exponent + 6 - static_cast<int>(digits.size() - 1);
  std::string scaled;
  if (shift >= 0) {
    scaled = digits + std::string(static_cast<std::size_t>(shift), '0');
  } else {
    const int keep = static_cast<int>(digits.size()) + shift;
    if (keep < 0) {
      scaled = "0";
    } else {
      scaled = keep == 0 ? "0" : digits.substr(0, static_cast<std::size_t>(keep));
      if (digits[static_cast<std::size_t>(keep)] >= '5') increment_digits(scaled);
    }
  }
  scaled.erase(0, std::min(scaled.find_first_not_of('0'), scaled.size()));
  if (scaled.size() < 7) scaled.insert(0, 7 - scaled.size(), '0');
  const bool zero = scaled.find_first_not_of('0') == std::string::npos;
  std::string out = (score < 0.0 && !zero) ? "-" : "";
  out += scaled.substr(0, scaled.size() - 6) + "." + scaled.substr(scaled.size() - 6);
  return out;
}

void write_scores(const ScoreSet& scores, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  require(out.good(), ErrorCategory::kIo, "cannot write scores to " + path.string());
  for (const auto& r : scores) out << r.utt_id << ' ' << format_score(r.score) << '\n';
  require(out.good(), ErrorCategory::kIo, "write failed for " + path.string());
}

ScoreSet parse_scores(std::string_view text) {
  ScoreSet out;
  std::unordered_set<std::string> seen;
  std::size_t line_number = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string line(text.substr(pos, end - pos));
    pos = end + 1;
    ++line_number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;

    std::istringstream in(line);
    std::string utt;
    std::string value;
    std::string extra;
    const std::string where = "score line " + std::to_string(line_number);
    require(static_cast<bool>(in >> utt >> value) && !(in >> extra), ErrorCategory::kParse,
            where + ": expected '<utt_id> <score>'");
    double score = 0.0;
    const auto res = std::from_chars(value.data(), value.data() + value.size(), score);
    require(res.ec == std::errc() && res.ptr == value.data() + value.size() && std::isfinite(score),
            ErrorCategory::kParse, where + ": '" + value + "' is not a finite number");
    require(seen.insert(utt).second, ErrorCategory::kParse, where + ": duplicate utterance '" + utt + "'");
    out.push_back({utt, score, std::nullopt, std::nullopt});
  }
  return out;
}

ScoreSet read_scores(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCategory::kIo, "cannot open scores " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  try {
    return parse_scores(buffer.str());
  } catch (const Error& e) {
    fail(e.category(), path.string() + ": " + e.what());
  }
}

ScoreSet attach_protocol(const ScoreSet& scores, const std::vector<ProtocolEntry>& protocol) {
  std::unordered_map<std::string, const ProtocolEntry*> by_id;
  for (const auto& e : protocol) by_id.emplace(e.utt_id, &e);
  require(scores.size() == by_id.size(), ErrorCategory::kData,
          std::to_string(scores.size()) + " scores but " + std::to_string(by_id.size()) + " protocol entries");
  ScoreSet out = scores;
  for (auto& r : out) {
    auto it = by_id.find(r.utt_id);
    require(it != by_id.end(), ErrorCategory::kData, "utterance '" + r.utt_id + "' is not in the protocol");
    r.label = it->second->label();
    r.attack = it->second->attack;
  }
  return out;
}

ScoreSet mean_fuse(std::span<const ScoreSet> systems) {
  return apply_fusion(FusionModel::mean(systems.size()), systems);
}

FusionModel FusionModel::mean(std::size_t n_systems) {
  require(n_systems > 0, ErrorCategory::kParameter, "mean fusion of zero systems");
  FusionModel m;
  m.kind = Kind::kMean;
  m.weights.assign(n_systems, 1.0 / static_cast<double>(n_systems));
  return m;
}

double FusionModel::fuse(std::span<const double> scores) const {
  require(scores.size() == weights.size(), ErrorCategory::kAlignment,
          "fusion model expects " + std::to_string(weights.size()) + " systems, got " +
              std::to_string(scores.size()));
  if (kind == Kind::kMean) {
    std::vector<double> v(scores.begin(), scores.end());
    return sorted_mean(v);
  }
  double z = bias;
  for (std::size_t k = 0; k < scores.size(); ++k) z += weights[k] * scores[k];
  return z;
}

FusionModel lr_fuse_train(std::span<const ScoreSet> dev_systems, const LogisticFusionOptions& options) {
  const Aligned data = align(dev_systems);
  const std::size_t k = dev_systems.size();
  const std::size_t n = data.rows.size();
  require(n > 0, ErrorCategory::kData, "logistic fusion needs dev scores");
  std::vector<double> y(n);
  std::size_t n_bona = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const ScoreRecord& r = *data.reference[i];
    require(r.label.has_value(), ErrorCategory::kData, "dev utterance '" + r.utt_id + "' has no label");
    y[i] = *r.label == Label::kBonafide ? 1.0 : -1.0;
    n_bona += *r.label == Label::kBonafide;
  }
  require(n_bona > 0 && n_bona < n, ErrorCategory::kData, "logistic fusion needs dev labels of both classes");

  const std::size_t dim = k + 1;
  std::vector<double> theta(dim, 0.0);
  const double inv_n = 1.0 / static_cast<double>(n);
  auto objective = [&](const std::vector<double>& th) {
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double z = th[k];
      for (std::size_t j = 0; j < k; ++j) z += th[j] * data.rows[i][j];
      loss += softplus(-y[i] * z);
    }
    double reg = 0.0;
    for (std::size_t j = 0; j < k; ++j) reg += th[j] * th[j];
    return loss * inv_n + 0.5 * options.l2 * reg;
  };

  double grad_norm = 0.0;
  double current = objective(theta);
  for (std::size_t iter = 0; iter < options.max_iterations; ++iter) {
    std::vector<double> grad(dim, 0.0);
    std::vector<double> hess(dim * dim, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      double z = theta[k];
      for (std::size_t j = 0; j < k; ++j) z += theta[j] * data.rows[i][j];
      const double p = sigmoid(z);
      const double target = y[i] > 0 ? 1.0 : 0.0;
      const double r = (p - target) * inv_n;
      const double wgt = p * (1.0 - p) * inv_n;
      for (std::size_t a = 0; a < dim; ++a) {
        const double xa = a < k ? data.rows[i][a] : 1.0;
        grad[a] += r * xa;
        for (std::size_t b = 0; b < dim; ++b) {
          const double xb = b < k ? data.rows[i][b] : 1.0;
          hess[a * dim + b] += wgt * xa * xb;
        }
      }
    }
    for (std::size_t j = 0; j < k; ++j) {
      grad[j] += options.l2 * theta[j];
      hess[j * dim + j] += options.l2;
    }
    grad_norm = 0.0;
    for (double g : grad) grad_norm += g * g;
    grad_norm = std::sqrt(grad_norm);
    if (grad_norm < options.gradient_tolerance) {
      FusionModel m;
      m.kind = FusionModel::Kind::kLogistic;
      m.weights.assign(theta.begin(), theta.begin() + static_cast<std::ptrdiff_t>(k));
      m.bias = theta[k];
      return m;
    }

    std::vector<double> neg(dim);
    for (std::size_t a = 0; a < dim; ++a) neg[a] = -grad[a];
    const std::vector<double> step = solve_dense(hess, neg);
    double slope = 0.0;
    for (std::size_t a = 0; a < dim; ++a) slope += grad[a] * step[a];
    double t = 1.0;
    std::vector<double> candidate(dim);
    for (int tries = 0; tries < 60; ++tries, t *= 0.5) {
      for (std::size_t a = 0; a < dim; ++a) candidate[a] = theta[a] + t * step[a];
      const double value = objective(candidate);
      if (value <= current + 1e-4 * t * slope) break;
    }
    theta = candidate;
    current = objective(theta);
  }
  fail(ErrorCategory::kNumeric, "logistic fusion did not converge in " + std::to_string(options.max_iterations) +
                                    " iterations (gradient norm " + std::to_string(grad_norm) + ")");
}

ScoreSet apply_fusion(const FusionModel& model, std::span<const ScoreSet> systems) {
  const Aligned data = align(systems);
  ScoreSet out;
  out.reserve(data.rows.size());
  for (std::size_t i = 0; i < data.rows.size(); ++i) {
    ScoreRecord r = *data.reference[i];
    r.score = model.fuse(data.rows[i]);
    out.push_back(std::move(r));
  }
  return out;
}

void write_fusion_model(const FusionModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  require(out.good(), ErrorCategory::kIo, "cannot write fusion model to " + path.string());
  char buf[64];
  out << "replaycm-fusion 1\n";
  out << "kind " << (model.kind == FusionModel::Kind::kMean ? "mean" : "logistic") << '\n';
  out << "weights";
  for (double w : model.weights) {
    std::snprintf(buf, sizeof buf, " %.17g", w);
    out << buf;
  }
  std::snprintf(buf, sizeof buf, "%.17g", model.bias);
  out << "\nbias " << buf << '\n';
  require(out.good(), ErrorCategory::kIo, "write failed for " + path.string());
}

FusionModel read_fusion_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCategory::kIo, "cannot open fusion model " + path.string());
  std::string magic;
  int version = 0;
  in >> magic >> version;
  require(magic == "replaycm-fusion", ErrorCategory::kFormat, path.string() + ": not a fusion model file");
  require(version == 1, ErrorCategory::kUnsupported, path.string() + ": unsupported fusion model version");
  FusionModel m;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key)) continue;
    if (key == "kind") {
      std::string kind;
      ls >> kind;
      require(kind == "mean" || kind == "logistic", ErrorCategory::kFormat, path.string() + ": bad kind");
      m.kind = kind == "mean" ? FusionModel::Kind::kMean : FusionModel::Kind::kLogistic;
    } else if (key == "weights") {
      double w = 0.0;
      while (ls >> w) m.weights.push_back(w);
    } else if (key == "bias") {
      require(static_cast<bool>(ls >> m.bias), ErrorCategory::kFormat, path.string() + ": bad bias");
    } else {
      fail(ErrorCategory::kFormat, path.string() + ": unknown key '" + key + "'");
    }
  }
  require(!m.weights.empty(), ErrorCategory::kFormat, path.string() + ": no weights");
  return m;
}

}  // namespace replaycm
