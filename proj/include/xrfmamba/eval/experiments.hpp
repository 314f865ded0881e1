#pragma once

// Train/infer/evaluate runs used by the fold, fusion and device grids. Each
// run lives in its own directory and is skipped when its report exists.

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "xrfmamba/inference/inference.hpp"
#include "xrfmamba/model/checkpoint.hpp"
#include "xrfmamba/model/trainer.hpp"

namespace xrf::eval {

namespace fs = std::filesystem;
using model::FusionPosition;
using model::FusionStrategy;

struct FusionCell {
  std::size_t number = 0;  // 1-based row of the ablation table
  FusionStrategy strategy;
  FusionPosition position;
};

/// Strategy-major: weighted, linear, gated, each after projection, embedding
/// and backbone.
inline std::vector<FusionCell> fusion_grid() {
  std::vector<FusionCell> out;
  for (auto s : {FusionStrategy::weighted, FusionStrategy::linear, FusionStrategy::gated}) {
    for (auto p : {FusionPosition::after_projection, FusionPosition::after_embedding, FusionPosition::after_backbone}) {
      out.push_back({out.size() + 1, s, p});
    }
  }
  return out;
}

struct DeviceCase {
  std::size_t number = 0;
  std::string name;
  model::DeviceMask mask;
};

/// The 21 device combinations: every single device, the common pairs and
/// triples, and supersets up to all seven.
inline std::vector<DeviceCase> device_grid() {
  using K = data::ModalityKind;
  const K wl = K::imu_watch_left, wr = K::imu_watch_right, pl = K::imu_phone_left, pr = K::imu_phone_right,
          eb = K::imu_earbuds, gl = K::imu_glasses, wf = K::wifi_csi;
  const std::vector<std::vector<K>> sets = {
      {wr},
      {wl},
      {pr},
      {pl},
      {eb},
      {gl},
      {wf},
      {wl, wr},
      {pr, wr},
      {pl, pr},
      {eb, gl},
      {wr, wf},
      {pr, wf},
      {pr, wr, eb},
      {pr, wr, gl},
      {wl, wr, pl, pr, eb, gl},
      {pr, wr, gl, wf},
      {wl, wr, pl, pr},
      {pr, wr, eb, gl, wf},
      {wl, wr, pl, pr, eb, wf},
      {wl, wr, pl, pr, eb, gl, wf},
  };
  std::vector<DeviceCase> out;
  for (const auto& s : sets) {
    DeviceCase c;
    c.number = out.size() + 1;
    c.mask.active.clear();
    for (auto k : data::kAllModalities) {
      if (std::find(s.begin(), s.end(), k) != s.end()) c.mask.active.push_back(k);
    }
    for (auto k : c.mask.active) {
      if (!c.name.empty()) c.name += '+';
      c.name += std::string(data::modality_name(k));
    }
    out.push_back(std::move(c));
  }
  return out;
}

struct ExperimentSpec {
  model::ModelConfig model;
  model::TrainConfig train;
  inference::DecodeConfig decode;
  MetricConfig metrics;
  std::uint64_t seed = 0;
};

struct ExperimentResult {
  EvalReport report;
  bool reused = false;
  bool diverged = false;
};

inline EvalReport report_from_json(const json& j) {
  EvalReport r;
  r.thresholds = j.at("thresholds").get<std::vector<double>>();
  r.ap = j.at("ap").get<std::vector<double>>();
  r.map_avg = j.at("map_avg").get<double>();
  r.n_actions = j.at("n_actions").get<std::size_t>();
  r.matching = j.at("matching").get<std::string>() == "hit_ratio" ? Matching::hit_ratio
                                                                         : Matching::ranked_detection_ap;
  for (const auto& row : j.at("per_action")) {
    r.per_action.push_back({row.at("label").get<int>(), row.at("name").get<std::string>(),
                            row.at("count").get<std::size_t>(), row.at("ap").get<std::vector<double>>(),
                            row.at("mean").get<double>()});
  }
  return r;
}

inline std::vector<SequencePair> pair_with_ground_truth(const data::DatasetManifest& m,
                                                        const std::vector<inference::SequencePredictions>& preds,
                                                        const std::vector<std::string>& ids) {
  std::map<std::string, const inference::SequencePredictions*> by_id;
  for (const auto& p : preds) by_id[p.sequence_id] = &p;
  std::vector<SequencePair> out;
  for (const auto& id : ids) {
    SequencePair sp{id, m.find(id).annotations, {}};
    if (auto it = by_id.find(id); it != by_id.end()) {
      sp.pred = it->second->segments;
    } else {
      std::cerr << "warning: no predictions for " << id << "; treated as empty\n";
    }
    out.push_back(std::move(sp));
  }
  return out;
}

/// Trains on `train_ids`, localizes `test_ids` and writes model.ckpt,
/// train_log.csv, predictions.json and report.json under `dir`.
inline ExperimentResult run_experiment(const ExperimentSpec& spec, const data::DatasetManifest& m,
                                       const std::vector<std::string>& train_ids,
                                       const std::vector<std::string>& test_ids, const fs::path& dir,
                                       bool verbose = true) {
  const auto report_path = dir / "report.json";
  if (fs::exists(report_path)) {
    return {report_from_json(data::parse_json_file(report_path)), true, false};
  }
  fs::create_directories(dir);
  std::vector<data::SequenceRecord> train, test;
  for (const auto& id : train_ids) train.push_back(data::open_sequence(m, id));
  for (const auto& id : test_ids) test.push_back(data::open_sequence(m, id));
  model::XRFMamba<float> net(spec.model, spec.seed);
  auto tc = spec.train;
  tc.seed = spec.seed;
  model::Trainer trainer(net, tc);
  const auto progress = [&](const model::EpochStats& s) {
    if (verbose) {
      std::cerr << dir.filename().string() << " epoch " << s.epoch + 1 << "/" << tc.epochs << " loss " << s.loss
                << " (" << s.seconds << " s)\n";
    }
  };
  const auto tr = trainer.fit(train, dir / "model.ckpt", dir / "train_log.csv", progress);
  if (tr.diverged) {
    save_checkpoint(dir / "model.ckpt", net, json{{"diverged", true}});
    throw NumericError(dir.string() + ": training diverged: " + tr.message);
  }
  std::vector<inference::SequencePredictions> preds;
  for (const auto& rec : test) preds.push_back({rec.id, inference::localize_sequence(net, rec, spec.decode)});
  inference::write_predictions(dir / "predictions.json", preds);
  ExperimentResult r;
  r.report = map_avg(pair_with_ground_truth(m, preds, test_ids), spec.metrics, m.label_names);
  data::write_text(report_path, to_json(r.report).dump(2) + "\n");
  return r;
}

}  // namespace xrf::eval
