#pragma once

// The single run configuration file. Every section is optional; defaults
// are the full-size training recipe with weighted fusion after projection.
// Unknown keys are rejected at every level.

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "xrfmamba/data/synth.hpp"
#include "xrfmamba/eval/metrics.hpp"
#include "xrfmamba/inference/inference.hpp"
#include "xrfmamba/model/config.hpp"
#include "xrfmamba/model/trainer.hpp"
#include "xrfmamba/summarize/llm.hpp"
#include "xrfmamba/util/json_strict.hpp"

namespace xrf::cli {

using json = nlohmann::json;

struct SummarizeConfig {
  std::size_t prompts_per_sequence = 2;
  std::uint64_t assignment_seed = 2025;
  std::uint64_t blind_seed = 7;
};

struct RunConfig {
  std::string manifest;  // dataset manifest path; CLI flags override
  std::uint64_t seed = 0;
  model::ModelConfig model;
  model::TrainConfig train;
  inference::DecodeConfig decode;
  eval::MetricConfig metrics;
  data::SynthConfig synth;
  std::vector<summarize::LLMEndpointConfig> llm;
  SummarizeConfig summarize;

  void validate() const {
    model.validate();
    train.validate();
    decode.validate();
    metrics.validate();
    synth.validate();
    for (const auto& e : llm) e.validate();
    if (summarize.prompts_per_sequence == 0) throw ConfigError("summarize.prompts_per_sequence must be positive");
    if (std::abs(decode.window_s - model.window_s) > 1e-12 || std::abs(train.window_s - model.window_s) > 1e-12) {
      throw ConfigError("train/decode window_s must equal model.window_s");
    }
  }
};

inline json train_to_json(const model::TrainConfig& t) {
  return json{{"lr", t.lr},
              {"epochs", t.epochs},
              {"batch_size", t.batch_size},
              {"lr_step_epochs", t.lr_step_epochs},
              {"lr_gamma", t.lr_gamma},
              {"window_s", t.window_s},
              {"stride_s", t.stride_s},
              {"box_filter", t.box_filter},
              {"grad_clip", t.grad_clip},
              {"max_clips", t.max_clips},
              {"adamw",
               {{"beta1", t.adamw.beta1},
                {"beta2", t.adamw.beta2},
                {"eps", t.adamw.eps},
                {"weight_decay", t.adamw.weight_decay}}},
              {"loss",
               {{"alpha_cls", t.loss.alpha_cls},
                {"alpha_loc", t.loss.alpha_loc},
                {"focal_gamma", t.loss.focal_gamma},
                {"focal_alpha", t.loss.focal_alpha}}}};
}

inline void train_from_json(const json& j, model::TrainConfig& t, const std::string& w) {
  using util::read_opt;
  util::reject_unknown_keys(j, {"lr", "epochs", "batch_size", "lr_step_epochs", "lr_gamma", "window_s", "stride_s",
                                "box_filter", "grad_clip", "max_clips", "adamw", "loss"},
                            w);
  read_opt(j, "lr", t.lr, w);
  read_opt(j, "epochs", t.epochs, w);
  read_opt(j, "batch_size", t.batch_size, w);
  read_opt(j, "lr_step_epochs", t.lr_step_epochs, w);
  read_opt(j, "lr_gamma", t.lr_gamma, w);
  read_opt(j, "window_s", t.window_s, w);
  read_opt(j, "stride_s", t.stride_s, w);
  read_opt(j, "box_filter", t.box_filter, w);
  read_opt(j, "grad_clip", t.grad_clip, w);
  read_opt(j, "max_clips", t.max_clips, w);
  if (j.contains("adamw")) {
    const auto& a = j["adamw"];
    const std::string wa = w + ".adamw";
    util::reject_unknown_keys(a, {"beta1", "beta2", "eps", "weight_decay"}, wa);
    read_opt(a, "beta1", t.adamw.beta1, wa);
    read_opt(a, "beta2", t.adamw.beta2, wa);
    read_opt(a, "eps", t.adamw.eps, wa);
    read_opt(a, "weight_decay", t.adamw.weight_decay, wa);
  }
  if (j.contains("loss")) {
    const auto& l = j["loss"];
    const std::string wl = w + ".loss";
    util::reject_unknown_keys(l, {"alpha_cls", "alpha_loc", "focal_gamma", "focal_alpha"}, wl);
    read_opt(l, "alpha_cls", t.loss.alpha_cls, wl);
    read_opt(l, "alpha_loc", t.loss.alpha_loc, wl);
    read_opt(l, "focal_gamma", t.loss.focal_gamma, wl);
    read_opt(l, "focal_alpha", t.loss.focal_alpha, wl);
  }
}

inline json decode_to_json(const inference::DecodeConfig& d) {
  return json{{"score_threshold", d.score_threshold}, {"nms_tiou_threshold", d.nms_tiou_threshold},
              {"max_segments_per_clip", d.max_segments_per_clip}, {"infer_stride_s", d.infer_stride_s},
              {"window_s", d.window_s}, {"per_class_nms", d.per_class_nms}, {"batch_size", d.batch_size},
              {"box_filter", d.box_filter}};
}

inline void decode_from_json(const json& j, inference::DecodeConfig& d, const std::string& w) {
  using util::read_opt;
  util::reject_unknown_keys(j, {"score_threshold", "nms_tiou_threshold", "max_segments_per_clip", "infer_stride_s",
                                "window_s", "per_class_nms", "batch_size", "box_filter"},
                            w);
  read_opt(j, "score_threshold", d.score_threshold, w);
  read_opt(j, "nms_tiou_threshold", d.nms_tiou_threshold, w);
  read_opt(j, "max_segments_per_clip", d.max_segments_per_clip, w);
  read_opt(j, "infer_stride_s", d.infer_stride_s, w);
  read_opt(j, "window_s", d.window_s, w);
  read_opt(j, "per_class_nms", d.per_class_nms, w);
  read_opt(j, "batch_size", d.batch_size, w);
  read_opt(j, "box_filter", d.box_filter, w);
}

inline std::string matching_name(eval::Matching m) {
  return m == eval::Matching::hit_ratio ? "hit_ratio" : "ranked";
}

inline eval::Matching parse_matching(const std::string& s) {
  if (s == "hit_ratio") return eval::Matching::hit_ratio;
  if (s == "ranked") return eval::Matching::ranked_detection_ap;
  throw ConfigError("unknown matching '" + s + "' (expected hit_ratio or ranked)");
}

inline json synth_to_json(const data::SynthConfig& s) {
  return json{{"n_sequences", s.n_sequences}, {"n_classes", s.n_classes},     {"duration_min_s", s.duration_min_s},
              {"duration_max_s", s.duration_max_s}, {"actions_min", s.actions_min}, {"actions_max", s.actions_max},
              {"noise_std", s.noise_std},     {"amplitude", s.amplitude},     {"seed", s.seed},
              {"n_subjects", s.n_subjects},   {"csi_phase", s.csi_phase},     {"test_every", s.test_every}};
}

inline void synth_from_json(const json& j, data::SynthConfig& s, const std::string& w) {
  using util::read_opt;
  util::reject_unknown_keys(j, {"n_sequences", "n_classes", "duration_min_s", "duration_max_s", "actions_min",
                                "actions_max", "noise_std", "amplitude", "seed", "n_subjects", "csi_phase",
                                "test_every"},
                            w);
  read_opt(j, "n_sequences", s.n_sequences, w);
  read_opt(j, "n_classes", s.n_classes, w);
  read_opt(j, "duration_min_s", s.duration_min_s, w);
  read_opt(j, "duration_max_s", s.duration_max_s, w);
  read_opt(j, "actions_min", s.actions_min, w);
  read_opt(j, "actions_max", s.actions_max, w);
  read_opt(j, "noise_std", s.noise_std, w);
  read_opt(j, "amplitude", s.amplitude, w);
  read_opt(j, "seed", s.seed, w);
  read_opt(j, "n_subjects", s.n_subjects, w);
  read_opt(j, "csi_phase", s.csi_phase, w);
  read_opt(j, "test_every", s.test_every, w);
}

inline json to_json(const RunConfig& c) {
  json llm = json::array();
  for (const auto& e : c.llm) llm.push_back(summarize::to_json(e));
  return json{{"manifest", c.manifest},
              {"seed", c.seed},
              {"model", model::to_json(c.model)},
              {"train", train_to_json(c.train)},
              {"decode", decode_to_json(c.decode)},
              {"metrics", {{"thresholds", c.metrics.thresholds}, {"matching", matching_name(c.metrics.matching)}}},
              {"synth", synth_to_json(c.synth)},
              {"llm", llm},
              {"summarize",
               {{"prompts_per_sequence", c.summarize.prompts_per_sequence},
                {"assignment_seed", c.summarize.assignment_seed},
                {"blind_seed", c.summarize.blind_seed}}}};
}

inline RunConfig run_config_from_json(const json& j) {
  using util::read_opt;
  const std::string w = "config";
  util::reject_unknown_keys(j, {"manifest", "seed", "model", "train", "decode", "metrics", "synth", "llm", "summarize"},
                            w);
  RunConfig c;
  read_opt(j, "manifest", c.manifest, w);
  read_opt(j, "seed", c.seed, w);
  if (j.contains("model")) c.model = model::model_config_from_json(j["model"], w + ".model");
  if (j.contains("train")) train_from_json(j["train"], c.train, w + ".train");
  if (j.contains("decode")) decode_from_json(j["decode"], c.decode, w + ".decode");
  if (j.contains("metrics")) {
    const auto& m = j["metrics"];
    util::reject_unknown_keys(m, {"thresholds", "matching"}, w + ".metrics");
    read_opt(m, "thresholds", c.metrics.thresholds, w + ".metrics");
    std::string matching = matching_name(c.metrics.matching);
    read_opt(m, "matching", matching, w + ".metrics");
    c.metrics.matching = parse_matching(matching);
  }
  if (j.contains("synth")) synth_from_json(j["synth"], c.synth, w + ".synth");
  if (j.contains("llm")) {
    if (!j["llm"].is_array()) throw ConfigError(w + ".llm: expected a list of endpoints");
    for (std::size_t i = 0; i < j["llm"].size(); ++i) {
      c.llm.push_back(summarize::endpoint_from_json(j["llm"][i], w + ".llm[" + std::to_string(i) + "]"));
    }
  }
  if (j.contains("summarize")) {
    const auto& s = j["summarize"];
    const std::string ws = w + ".summarize";
    util::reject_unknown_keys(s, {"prompts_per_sequence", "assignment_seed", "blind_seed"}, ws);
    read_opt(s, "prompts_per_sequence", c.summarize.prompts_per_sequence, ws);
    read_opt(s, "assignment_seed", c.summarize.assignment_seed, ws);
    read_opt(s, "blind_seed", c.summarize.blind_seed, ws);
  }
  c.train.seed = c.seed;
  c.validate();
  return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("config file not found: " + path.string());
  json j;
  try {
    j = json::parse(data::read_text(path));
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

}  // namespace xrf::cli
