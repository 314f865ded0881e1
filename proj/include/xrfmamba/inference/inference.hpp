#pragma once

// Proposal decoding, temporal NMS and sliding-window localization over a
// whole sequence.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "xrfmamba/data/datapipe.hpp"
#include "xrfmamba/eval/metrics.hpp"
#include "xrfmamba/model/loss.hpp"

namespace xrf::inference {

using data::Segment;
using json = nlohmann::json;

struct DecodeConfig {
  double score_threshold = 0.05;
  double nms_tiou_threshold = 0.5;
  std::size_t max_segments_per_clip = 100;
  double infer_stride_s = data::kInferStrideSeconds;
  double window_s = data::kWindowSeconds;
  bool per_class_nms = false;
  std::size_t batch_size = 8;
  bool box_filter = false;

  void validate() const {
    const auto in01 = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!in01(score_threshold) || !in01(nms_tiou_threshold)) throw ConfigError("decode: thresholds must be in [0,1]");
    if (!(infer_stride_s > 0.0) || !(window_s > 0.0)) throw ConfigError("decode: stride and window must be positive");
    if (max_segments_per_clip == 0 || batch_size == 0) throw ConfigError("decode: caps must be positive");
  }
};

/// Greedy order: higher score, then earlier start, then lower label.
inline bool nms_before(const Segment& a, const Segment& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.start_s != b.start_s) return a.start_s < b.start_s;
  if (a.label != b.label) return a.label < b.label;
  return a.end_s < b.end_s;
}

/// Hard NMS: repeatedly keep the best remaining segment and discard every
/// remaining one overlapping it by more than the threshold. Survivors are
/// returned in pick order.
inline std::vector<Segment> nms(std::vector<Segment> segs, double tiou_threshold, bool per_class = false) {
  std::stable_sort(segs.begin(), segs.end(), nms_before);
  std::vector<Segment> keep;
  std::vector<bool> removed(segs.size(), false);
  for (std::size_t i = 0; i < segs.size(); ++i) {
    if (removed[i]) continue;
    keep.push_back(segs[i]);
    for (std::size_t j = i + 1; j < segs.size(); ++j) {
      if (removed[j]) continue;
      if (per_class && segs[j].label != segs[i].label) continue;
      if (eval::tiou(segs[i], segs[j]) > tiou_threshold) removed[j] = true;
    }
  }
  return keep;
}

/// All proposals of batch item `b` scoring at least the threshold, in
/// clip-local seconds clamped to [0, window_len_s].
inline std::vector<Segment> decode_proposals(const model::ModelOutput<float>& out, std::size_t b,
                                             double window_len_s, const DecodeConfig& cfg) {
  std::vector<Segment> segs;
  for (const auto& level : out.levels) {
    const std::size_t L = level.logits.dim(1), C = level.logits.dim(2);
    const double stride = window_len_s / static_cast<double>(L);
    const auto& lg = level.logits.values();
    const auto& rg = level.regression.values();
    for (std::size_t t = 0; t < L; ++t) {
      const double c = model::step_center(t, stride);
      const double ds = rg[(b * L + t) * 2], de = rg[(b * L + t) * 2 + 1];
      const double s = std::clamp(c - ds * stride, 0.0, window_len_s);
      const double e = std::clamp(c + de * stride, 0.0, window_len_s);
      if (!(e > s)) continue;
      for (std::size_t k = 0; k < C; ++k) {
        const double score = ad::detail::stable_sigmoid(static_cast<double>(lg[(b * L + t) * C + k]));
        if (score >= cfg.score_threshold) segs.push_back({static_cast<int>(k), s, e, score});
      }
    }
  }
  return segs;
}

/// Per-clip NMS followed by the per-clip cap.
inline std::vector<Segment> clip_detections(std::vector<Segment> proposals, const DecodeConfig& cfg) {
  auto kept = nms(std::move(proposals), cfg.nms_tiou_threshold, cfg.per_class_nms);
  if (kept.size() > cfg.max_segments_per_clip) kept.resize(cfg.max_segments_per_clip);
  return kept;
}

inline void sort_by_start(std::vector<Segment>& segs) {
  std::stable_sort(segs.begin(), segs.end(), [](const Segment& a, const Segment& b) {
    if (a.start_s != b.start_s) return a.start_s < b.start_s;
    return nms_before(a, b);
  });
}

/// Windows the sequence at the inference stride, decodes each clip, shifts
/// detections to sequence time, pools them and runs one global NMS pass.
inline std::vector<Segment> localize_sequence(const model::XRFMamba<float>& net, const data::SequenceRecord& record,
                                              const DecodeConfig& cfg) {
  cfg.validate();
  ad::NoGradGuard no_grad;
  const auto& mc = net.config();
  const auto windows = data::plan_windows(record.duration_s, cfg.window_s, cfg.infer_stride_s);
  std::vector<Segment> pooled;
  for (std::size_t off = 0; off < windows.size(); off += cfg.batch_size) {
    const std::size_t n = std::min(cfg.batch_size, windows.size() - off);
    std::vector<data::Clip> clips;
    std::vector<const data::Clip*> ptrs;
    for (std::size_t k = 0; k < n; ++k) {
      clips.push_back(data::make_clip(record, windows[off + k].start_s, windows[off + k].len_s, mc.clip_steps,
                                      cfg.box_filter));
    }
    for (const auto& c : clips) ptrs.push_back(&c);
    const auto out = net.forward(model::make_input<float>(ptrs, mc));
    for (std::size_t k = 0; k < n; ++k) {
      for (auto s : clip_detections(decode_proposals(out, k, clips[k].window_len_s, cfg), cfg)) {
        s.start_s += clips[k].global_offset_s;
        s.end_s += clips[k].global_offset_s;
        pooled.push_back(s);
      }
    }
  }
  auto final_segs = nms(std::move(pooled), cfg.nms_tiou_threshold, cfg.per_class_nms);
  sort_by_start(final_segs);
  return final_segs;
}

// ------------------------------------------------------------------ predictions file

struct SequencePredictions {
  std::string sequence_id;
  std::vector<Segment> segments;
};

inline json predictions_json(std::vector<SequencePredictions> preds) {
  std::sort(preds.begin(), preds.end(),
            [](const SequencePredictions& a, const SequencePredictions& b) { return a.sequence_id < b.sequence_id; });
  json arr = json::array();
  for (auto& p : preds) {
    sort_by_start(p.segments);
    json segs = json::array();
    for (const auto& s : p.segments) {
      segs.push_back({{"label", s.label}, {"start_s", s.start_s}, {"end_s", s.end_s}, {"score", s.score}});
    }
    arr.push_back({{"sequence_id", p.sequence_id}, {"segments", segs}});
  }
  return arr;
}

inline void write_predictions(const std::filesystem::path& path, const std::vector<SequencePredictions>& preds) {
  data::write_text(path, predictions_json(preds).dump(2) + "\n");
}

inline std::vector<SequencePredictions> read_predictions(const std::filesystem::path& path) {
  const json j = data::parse_json_file(path);
  if (!j.is_array()) throw SchemaError(path.string() + ": predictions must be a list");
  std::vector<SequencePredictions> out;
  std::set<std::string> ids;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string at = path.filename().string() + "[" + std::to_string(i) + "]";
    SequencePredictions p;
    p.sequence_id = data::detail::field<std::string>(j[i], "sequence_id", at);
    if (!ids.insert(p.sequence_id).second) throw SchemaError(at + ": duplicate sequence_id " + p.sequence_id);
    const json segs = data::detail::field<json>(j[i], "segments", at);
    if (!segs.is_array()) throw SchemaError(at + ".segments: expected list");
    for (std::size_t k = 0; k < segs.size(); ++k) {
      const std::string sat = at + ".segments[" + std::to_string(k) + "]";
      Segment s{data::detail::field<int>(segs[k], "label", sat), data::detail::field<double>(segs[k], "start_s", sat),
                data::detail::field<double>(segs[k], "end_s", sat), data::detail::field<double>(segs[k], "score", sat)};
      if (!data::valid_label(s.label)) throw SchemaError(sat + ": unknown label " + std::to_string(s.label));
      if (!(s.end_s > s.start_s)) throw SchemaError(sat + ": end_s <= start_s");
      if (!(s.score >= 0.0 && s.score <= 1.0)) throw SchemaError(sat + ": score outside [0,1]");
      p.segments.push_back(s);
    }
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace xrf::inference
