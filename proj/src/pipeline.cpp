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

#include "pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "errors.hpp"
#include "parallel.hpp"

namespace replaycm {

void write_feature_manifest(const std::filesystem::path& feature_dir, const std::vector<ProtocolEntry>& entries,
                            const std::filesystem::path& relative_dir) {
  const auto path = feature_dir / kFeatureManifestName;
  std::ofstream out(path, std::ios::trunc);
  require(out.good(), ErrorCategory::kIo, "cannot write " + path.string());
  for (const auto& e : entries) out << e.utt_id << ' ' << (relative_dir / (e.utt_id + ".fgrm")).string() << '\n';
  require(out.good(), ErrorCategory::kIo, "write failed for " + path.string());
}

FeatureManifest read_feature_manifest(const std::filesystem::path& feature_dir) {
  const auto path = feature_dir / kFeatureManifestName;
  FeatureManifest out;
  std::ifstream in(path);
  if (!in.good()) return out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    std::istringstream ls(line);
    std::string utt;
    std::string rel;
    if (!(ls >> utt)) continue;
    require(static_cast<bool>(ls >> rel), ErrorCategory::kParse,
            path.string() + " line " + std::to_string(n) + ": expected '<utt_id> <path>'");
    out[utt] = feature_dir / rel;
  }
  return out;
}

void extract_corpus(const std::vector<ProtocolEntry>& protocol, const std::filesystem::path& wav_dir,
                    const std::filesystem::path& out_dir, const FeatureSettings& settings, int jobs) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  require(!ec, ErrorCategory::kIo, "cannot create " + out_dir.string() + ": " + ec.message());
  parallel_for(protocol.size(), jobs, [&](std::size_t i) {
    const Waveform w = read_wav(wav_dir / (protocol[i].utt_id + ".wav"));
    FeatureGram g = extract_features(w, settings);
    g.utt_id = protocol[i].utt_id;
    write_gram(g, out_dir / (protocol[i].utt_id + ".fgrm"));
  });
  // Merge with entries already present so several protocols can share one directory.
  FeatureManifest existing = read_feature_manifest(out_dir);
  std::vector<ProtocolEntry> merged;
  for (const auto& [utt, path] : existing) merged.push_back({utt, std::nullopt});
  for (const auto& e : protocol) {
    if (!existing.count(e.utt_id)) merged.push_back({e.utt_id, std::nullopt});
  }
  std::sort(merged.begin(), merged.end(), [](const auto& a, const auto& b) { return a.utt_id < b.utt_id; });
  write_feature_manifest(out_dir, merged);
}

std::vector<Example> load_examples(const std::filesystem::path& feature_dir,
                                   const std::vector<ProtocolEntry>& protocol, int jobs) {
  const FeatureManifest manifest = read_feature_manifest(feature_dir);
  std::vector<Example> out(protocol.size());
  parallel_for(protocol.size(), jobs, [&](std::size_t i) {
    const auto& e = protocol[i];
    auto it = manifest.find(e.utt_id);
    const auto path = it != manifest.end() ? it->second : feature_dir / (e.utt_id + ".fgrm");
    require(std::filesystem::exists(path), ErrorCategory::kData,
            "missing feature file for utterance '" + e.utt_id + "' (" + path.string() + ")");
    out[i].gram = read_gram(path);
    out[i].gram.utt_id = e.utt_id;
    out[i].target = e.label() == Label::kBonafide ? kBonafideClass : kSpoofClass;
  });
  return out;
}

TrainResult run_training(const TrainJob& job) {
  job.config.validate();
  const auto train = load_examples(job.feature_dir, read_protocol(job.protocol_train), job.jobs);
  const auto dev = load_examples(job.feature_dir, read_protocol(job.protocol_dev), job.jobs);
  require(!train.empty() && !dev.empty(), ErrorCategory::kData, "training and dev protocols must be non-empty");

  ResNetConfig model_cfg = job.config.model;
  model_cfg.input_bins = train.front().gram.n_bins;
  model_cfg.input_frames = train.front().gram.n_frames;
  ResNet model(model_cfg, mix_seed(job.config.train.seed, 0x303));

  std::ofstream log;
  if (!job.log.empty()) {
    log.open(job.log, std::ios::trunc);
    require(log.good(), ErrorCategory::kIo, "cannot write training log " + job.log.string());
  }
  TrainResult result = train_model(model, train, dev, job.config.train, [&](const EpochRecord& r) {
    if (log.is_open()) log << format_epoch_record(r) << '\n' << std::flush;
  });
  save_checkpoint(job.checkpoint, model, train.front().gram.kind, result.optimizer, result.lr);
  return result;
}

ScoreSet score_corpus(ResNet& model, const std::filesystem::path& feature_dir,
                      const std::vector<ProtocolEntry>& protocol, int jobs) {
  const auto examples = load_examples(feature_dir, protocol, jobs);
  std::vector<FeatureGram> grams;
  grams.reserve(examples.size());
  for (const auto& e : examples) grams.push_back(e.gram);
  const auto scores = score_batch(model, grams);
  ScoreSet out;
  for (std::size_t i = 0; i < protocol.size(); ++i) {
    out.push_back({protocol[i].utt_id, scores[i], protocol[i].label(), protocol[i].attack});
  }
  return out;
}

FeatureGram saliency_gram(ResNet& model, const FeatureGram& gram, std::size_t target_class) {
  require(target_class < 2, ErrorCategory::kParameter, "class index must be 0 (bonafide) or 1 (spoof)");
  const FeatureGram* one = &gram;
  const Tensor input = stack_grams({&one, 1});
  const std::size_t index[1] = {target_class};
  const Tensor map = saliency_map(
      [&](const Tensor& x) { return ops::sum(ops::gather_rows(model.forward(x, false), index)); }, input);
  FeatureGram out = gram;
  out.data.assign(map.values().begin(), map.values().end());
  return out;
}

}  // namespace replaycm
