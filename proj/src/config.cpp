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

#include "config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "errors.hpp"

namespace replaycm {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& where, const std::string& value, const std::string& expected) {
  fail(ErrorCategory::kParse, where + ": '" + value + "' is not " + expected);
}

double to_double(const std::string& where, const std::string& text) {
  const std::string v = trim(text);
  double out = 0.0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size() || v.empty()) bad_value(where, v, "a number");
  return out;
}

std::uint64_t to_u64(const std::string& where, const std::string& text) {
  const std::string v = trim(text);
  std::uint64_t out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size() || v.empty()) {
    bad_value(where, v, "a non-negative integer");
  }
  return out;
}

int to_int(const std::string& where, const std::string& text) {
  const std::string v = trim(text);
  int out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size() || v.empty()) bad_value(where, v, "an integer");
  return out;
}

bool to_bool(const std::string& where, const std::string& text) {
  const std::string v = trim(text);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad_value(where, v, "a boolean");
}

std::vector<double> to_list(const std::string& where, const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_double(where, item));
  return out;
}

WindowKind to_window(const std::string& where, const std::string& text) {
  const std::string v = trim(text);
  if (v == "hamming") return WindowKind::kHamming;
  if (v == "hann") return WindowKind::kHann;
  if (v == "rectangular") return WindowKind::kRectangular;
  bad_value(where, v, "one of hamming, hann, rectangular");
}

std::string_view window_name(WindowKind w) {
  switch (w) {
    case WindowKind::kHamming: return "hamming";
    case WindowKind::kHann: return "hann";
    case WindowKind::kRectangular: return "rectangular";
  }
  return "hamming";
}

std::string num(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

char factor_letter(int i) { return static_cast<char>('a' + i); }

}  // namespace

ExperimentConfig::ExperimentConfig() {
  model.scale = 4;
}

void ExperimentConfig::validate() const {
  features.frame.validate();
  features.mgd.validate();
  model.validate();
  train.validate();
  tdcf.validate();
  require(corpus.duration > 0.0 && corpus.sample_rate > 0 && corpus.jobs > 0, ErrorCategory::kParameter,
          "corpus duration, sample rate and jobs must be positive");
}

void set_config_value(ExperimentConfig& cfg, const std::string& section, const std::string& key,
                      const std::string& value) {
  const std::string where = "[" + section + "] " + key;
  auto& f = cfg.features;
  auto& m = cfg.model;
  auto& t = cfg.train;
  auto& d = cfg.tdcf;
  auto& c = cfg.corpus;
  if (section == "features") {
    if (key == "kind") {
      try {
        f.kind = parse_feature_kind(trim(value));
      } catch (const Error&) {
        bad_value(where, value, "one of stft, gd, mgd, cqt");
      }
    } else if (key == "frame_len") f.frame.frame_len = to_int(where, value);
    else if (key == "hop") f.frame.hop = to_int(where, value);
    else if (key == "n_fft") f.frame.n_fft = to_int(where, value);
    else if (key == "window") f.frame.window = to_window(where, value);
    else if (key == "n_frames") f.n_frames = to_u64(where, value);
    else if (key == "mgd_rho") f.mgd.rho = to_double(where, value);
    else if (key == "mgd_lambda") f.mgd.lambda = to_double(where, value);
    else if (key == "mgd_lifter_len") f.mgd.lifter_len = to_int(where, value);
    else if (key == "mgd_smoothing") f.mgd.smoothing = to_bool(where, value);
    else if (key == "cqt_hop") f.cqt.hop = to_int(where, value);
    else if (key == "cqt_octaves") f.cqt.n_octaves = to_int(where, value);
    else if (key == "cqt_bins_per_octave") f.cqt.bins_per_octave = to_int(where, value);
    else if (key == "cqt_fmin") f.cqt.f_min = to_double(where, value);
    else fail(ErrorCategory::kParse, "unknown config key " + where);
  } else if (section == "model") {
    if (key == "block_counts") {
      m.block_counts.clear();
      for (double b : to_list(where, value)) {
        if (b < 1 || b != static_cast<double>(static_cast<std::size_t>(b))) bad_value(where, value, "a list of counts");
        m.block_counts.push_back(static_cast<std::size_t>(b));
      }
    } else if (key == "base_channels") m.base_channels = to_u64(where, value);
    else if (key == "fc_width") m.fc_width = to_u64(where, value);
    else if (key == "scale") m.scale = to_u64(where, value);
    else fail(ErrorCategory::kParse, "unknown config key " + where);
  } else if (section == "train") {
    if (key == "lr") t.lr = to_double(where, value);
    else if (key == "beta1") t.beta1 = to_double(where, value);
    else if (key == "beta2") t.beta2 = to_double(where, value);
    else if (key == "eps") t.eps = to_double(where, value);
    else if (key == "weight_decay") t.weight_decay = to_double(where, value);
    else if (key == "plateau_patience") t.plateau_patience = to_u64(where, value);
    else if (key == "plateau_factor") t.plateau_factor = to_double(where, value);
    else if (key == "batch_size") t.batch_size = to_u64(where, value);
    else if (key == "max_epochs") t.max_epochs = to_u64(where, value);
    else if (key == "seed") t.seed = to_u64(where, value);
    else if (key == "objective") {
      try {
        t.objective = parse_objective(trim(value));
      } catch (const Error&) {
        bad_value(where, value, "bce or bfl");
      }
    } else if (key == "gamma") t.gamma = to_double(where, value);
    else if (key == "alpha") {
      if (trim(value) == "auto") {
        t.alpha.reset();
      } else {
        const auto a = to_list(where, value);
        if (a.size() != 2) bad_value(where, value, "'auto' or 'alpha_bonafide, alpha_spoof'");
        t.alpha = ClassWeights::explicit_weights(a[0], a[1]);
      }
    } else fail(ErrorCategory::kParse, "unknown config key " + where);
  } else if (section == "tdcf") {
    if (key == "p_spoof") d.p_spoof = to_double(where, value);
    else if (key == "p_tar") d.p_tar = to_double(where, value);
    else if (key == "p_non") d.p_non = to_double(where, value);
    else if (key == "c_miss_asv") d.c_miss_asv = to_double(where, value);
    else if (key == "c_fa_asv") d.c_fa_asv = to_double(where, value);
    else if (key == "c_miss_cm") d.c_miss_cm = to_double(where, value);
    else if (key == "c_fa_cm") d.c_fa_cm = to_double(where, value);
    else if (key == "p_miss_asv") d.p_miss_asv = to_double(where, value);
    else if (key == "p_fa_asv") d.p_fa_asv = to_double(where, value);
    else if (key == "p_miss_spoof_asv") d.p_miss_spoof_asv = to_double(where, value);
    else fail(ErrorCategory::kParse, "unknown config key " + where);
  } else if (section == "sim") {
    // distance_<a|b|c> = gain, rt60, drr_db; quality_<a|b|c> = low_hz, high_hz, drive, noise_dbfs
    for (int i = 0; i < 3; ++i) {
      if (key == std::string("distance_") + factor_letter(i)) {
        const auto v = to_list(where, value);
        if (v.size() != 3) bad_value(where, value, "'gain, rt60, drr_db'");
        c.sim.distance[static_cast<std::size_t>(i)] = {v[0], v[1], v[2]};
        return;
      }
      if (key == std::string("quality_") + factor_letter(i)) {
        const auto v = to_list(where, value);
        if (v.size() != 4) bad_value(where, value, "'low_hz, high_hz, drive, noise_dbfs'");
        c.sim.quality[static_cast<std::size_t>(i)] = {v[0], v[1], v[2], v[3]};
        return;
      }
    }
    fail(ErrorCategory::kParse, "unknown config key " + where);
  } else if (section == "corpus") {
    if (key == "duration") c.duration = to_double(where, value);
    else if (key == "sample_rate") c.sample_rate = to_int(where, value);
    else if (key == "split_ratios") {
      const auto v = to_list(where, value);
      if (v.size() != 3) bad_value(where, value, "'train, dev, eval'");
      c.split_ratios = {v[0], v[1], v[2]};
    } else if (key == "jobs") c.jobs = to_int(where, value);
    else fail(ErrorCategory::kParse, "unknown config key " + where);
  } else {
    fail(ErrorCategory::kParse, "unknown config section [" + section + "]");
  }
}

ExperimentConfig parse_config(const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    fail(ErrorCategory::kParse, "config line " + std::to_string(e.line()) + ": " + e.message());
  }
  ExperimentConfig cfg;
  for (const auto& [section, body] : tree) {
    if (body.empty()) fail(ErrorCategory::kParse, "config key '" + section + "' outside a section");
    for (const auto& [key, value] : body) set_config_value(cfg, section, key, value.data());
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCategory::kIo, "cannot open config " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  try {
    return parse_config(buffer.str());
  } catch (const Error& e) {
    fail(e.category(), path.string() + ": " + e.what());
  }
}

std::string format_config(const ExperimentConfig& cfg) {
  std::ostringstream o;
  const auto& f = cfg.features;
  o << "[features]\n"
    << "kind = " << feature_kind_name(f.kind) << "\n"
    << "frame_len = " << f.frame.frame_len << "\n"
    << "hop = " << f.frame.hop << "\n"
    << "n_fft = " << f.frame.n_fft << "\n"
    << "window = " << window_name(f.frame.window) << "\n"
    << "n_frames = " << f.n_frames << "\n"
    << "mgd_rho = " << num(f.mgd.rho) << "\n"
    << "mgd_lambda = " << num(f.mgd.lambda) << "\n"
    << "mgd_lifter_len = " << f.mgd.lifter_len << "\n"
    << "mgd_smoothing = " << (f.mgd.smoothing ? "true" : "false") << "\n"
    << "cqt_hop = " << f.cqt.hop << "\n"
    << "cqt_octaves = " << f.cqt.n_octaves << "\n"
    << "cqt_bins_per_octave = " << f.cqt.bins_per_octave << "\n"
    << "cqt_fmin = " << num(f.cqt.f_min) << "\n";
  const auto& m = cfg.model;
  o << "\n[model]\nblock_counts = ";
  for (std::size_t i = 0; i < m.block_counts.size(); ++i) o << (i ? ", " : "") << m.block_counts[i];
  o << "\nbase_channels = " << m.base_channels << "\n"
    << "fc_width = " << m.fc_width << "\n"
    << "scale = " << m.scale << "\n";
  const auto& t = cfg.train;
  o << "\n[train]\n"
    << "lr = " << num(t.lr) << "\n"
    << "beta1 = " << num(t.beta1) << "\n"
    << "beta2 = " << num(t.beta2) << "\n"
    << "eps = " << num(t.eps) << "\n"
    << "weight_decay = " << num(t.weight_decay) << "\n"
    << "plateau_patience = " << t.plateau_patience << "\n"
    << "plateau_factor = " << num(t.plateau_factor) << "\n"
    << "batch_size = " << t.batch_size << "\n"
    << "max_epochs = " << t.max_epochs << "\n"
    << "seed = " << t.seed << "\n"
    << "objective = " << objective_name(t.objective) << "\n"
    << "gamma = " << num(t.gamma) << "\n"
    << "alpha = "
    << (t.alpha ? num(t.alpha->alpha_bonafide) + ", " + num(t.alpha->alpha_spoof) : std::string("auto")) << "\n";
  const auto& d = cfg.tdcf;
  o << "\n[tdcf]\n"
    << "p_spoof = " << num(d.p_spoof) << "\n"
    << "p_tar = " << num(d.p_tar) << "\n"
    << "p_non = " << num(d.p_non) << "\n"
    << "c_miss_asv = " << num(d.c_miss_asv) << "\n"
    << "c_fa_asv = " << num(d.c_fa_asv) << "\n"
    << "c_miss_cm = " << num(d.c_miss_cm) << "\n"
    << "c_fa_cm = " << num(d.c_fa_cm) << "\n"
    << "p_miss_asv = " << num(d.p_miss_asv) << "\n"
    << "p_fa_asv = " << num(d.p_fa_asv) << "\n"
    << "p_miss_spoof_asv = " << num(d.p_miss_spoof_asv) << "\n";
  const auto& c = cfg.corpus;
  o << "\n[sim]\n";
  for (int i = 0; i < 3; ++i) {
    const auto& p = c.sim.distance[static_cast<std::size_t>(i)];
    o << "distance_" << factor_letter(i) << " = " << num(p.gain) << ", " << num(p.rt60) << ", " << num(p.drr_db)
      << "\n";
  }
  for (int i = 0; i < 3; ++i) {
    const auto& p = c.sim.quality[static_cast<std::size_t>(i)];
    o << "quality_" << factor_letter(i) << " = " << num(p.low_hz) << ", " << num(p.high_hz) << ", "
      << num(p.drive) << ", " << num(p.noise_dbfs) << "\n";
  }
  o << "\n[corpus]\n"
    << "duration = " << num(c.duration) << "\n"
    << "sample_rate = " << c.sample_rate << "\n"
    << "split_ratios = " << num(c.split_ratios[0]) << ", " << num(c.split_ratios[1]) << ", "
    << num(c.split_ratios[2]) << "\n"
    << "jobs = " << c.jobs << "\n";
  return o.str();
}

}  // namespace replaycm
