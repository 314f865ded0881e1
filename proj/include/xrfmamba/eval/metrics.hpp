#pragma once

// Temporal IoU, per-class greedy matching, AP@t and the 10-threshold mean.

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "xrfmamba/data/dataset.hpp"

namespace xrf::eval {

using data::AnnotationTuple;
using data::Segment;
using json = nlohmann::json;

/// Intersection over union of two intervals; label-blind.
inline double tiou(double a_start, double a_end, double b_start, double b_end) {
  const double inter = std::max(0.0, std::min(a_end, b_end) - std::max(a_start, b_start));
  const double uni = (a_end - a_start) + (b_end - b_start) - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

template <typename A, typename B>
double tiou(const A& a, const B& b) {
  return tiou(a.start_s, a.end_s, b.start_s, b.end_s);
}

enum class Matching { hit_ratio, ranked_detection_ap };

struct MetricConfig {
  std::vector<double> thresholds = {0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95};
  Matching matching = Matching::hit_ratio;

  void validate() const {
    if (thresholds.empty()) throw ConfigError("metrics: no thresholds");
    for (std::size_t i = 0; i < thresholds.size(); ++i) {
      if (!(thresholds[i] > 0.0 && thresholds[i] <= 1.0)) throw ConfigError("metrics: thresholds must be in (0,1]");
      if (i > 0 && !(thresholds[i] > thresholds[i - 1])) throw ConfigError("metrics: thresholds must increase");
    }
  }
};

/// One-to-one matching inside each label: ground-truth actions in start order
/// claim their highest-tIoU unclaimed prediction of the same label (earliest
/// prediction on ties). Returns one tIoU per ground-truth action, in input
/// order; unmatched actions score 0.
inline std::vector<double> match_and_score(const std::vector<AnnotationTuple>& gt,
                                           const std::vector<Segment>& pred) {
  std::vector<std::size_t> order(gt.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return gt[a].start_s < gt[b].start_s; });
  std::vector<bool> claimed(pred.size(), false);
  std::vector<double> out(gt.size(), 0.0);
  for (std::size_t gi : order) {
    double best = 0.0;
    std::size_t best_j = pred.size();
    for (std::size_t j = 0; j < pred.size(); ++j) {
      if (claimed[j] || pred[j].label != gt[gi].label) continue;
      const double v = tiou(gt[gi], pred[j]);
      if (v > best) {
        best = v;
        best_j = j;
      }
    }
    if (best_j < pred.size()) {
      claimed[best_j] = true;
      out[gi] = best;
    }
  }
  return out;
}

/// Fraction of tIoUs at or above t; 0 for an empty list.
inline double ap_at_t(const std::vector<double>& tious, double t) {
  if (tious.empty()) return 0.0;
  std::size_t hits = 0;
  for (double v : tious) hits += v >= t;
  return static_cast<double>(hits) / static_cast<double>(tious.size());
}

/// Score-ranked average precision at one threshold for one class, pooled over
/// sequences (VOC-style all-point interpolation). Each prediction is a true
/// positive when it overlaps a not-yet-matched ground truth of the same
/// sequence by at least t.
struct RankedItem {
  std::size_t sequence;
  Segment seg;
};

inline double ranked_ap(const std::vector<std::vector<AnnotationTuple>>& gt_per_seq,
                        std::vector<RankedItem> preds, int label, double t) {
  std::size_t n_gt = 0;
  for (const auto& g : gt_per_seq) {
    for (const auto& a : g) n_gt += a.label == label;
  }
  if (n_gt == 0) return 0.0;
  std::stable_sort(preds.begin(), preds.end(), [](const RankedItem& a, const RankedItem& b) {
    return a.seg.score > b.seg.score;
  });
  std::vector<std::vector<bool>> used(gt_per_seq.size());
  for (std::size_t s = 0; s < gt_per_seq.size(); ++s) used[s].assign(gt_per_seq[s].size(), false);
  std::vector<double> precision, recall;
  std::size_t tp = 0, fp = 0;
  for (const auto& p : preds) {
    if (p.seg.label != label) continue;
    const auto& g = gt_per_seq[p.sequence];
    double best = -1.0;
    std::size_t best_i = g.size();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (g[i].label != label || used[p.sequence][i]) continue;
      const double v = tiou(g[i], p.seg);
      if (v > best) {
        best = v;
        best_i = i;
      }
    }
    if (best_i < g.size() && best >= t) {
      used[p.sequence][best_i] = true;
      ++tp;
    } else {
      ++fp;
    }
    precision.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(n_gt));
  }
  double ap = 0.0, prev_r = 0.0;
  for (std::size_t i = 0; i < precision.size(); ++i) {
    const double p_interp = *std::max_element(precision.begin() + static_cast<std::ptrdiff_t>(i), precision.end());
    ap += (recall[i] - prev_r) * p_interp;
    prev_r = recall[i];
  }
  return ap;
}

struct ActionRow {
  int label = 0;
  std::string name;
  std::size_t count = 0;
  std::vector<double> ap;  // per threshold
  double mean = 0.0;
};

struct EvalReport {
  std::vector<double> thresholds;
  std::vector<double> ap;  // per threshold
  double map_avg = 0.0;
  std::size_t n_actions = 0;
  std::vector<ActionRow> per_action;
  Matching matching = Matching::hit_ratio;

  double ap_at(double t) const {
    for (std::size_t i = 0; i < thresholds.size(); ++i) {
      if (std::abs(thresholds[i] - t) < 1e-9) return ap[i];
    }
    throw ConfigError("report has no threshold " + std::to_string(t));
  }
};

struct SequencePair {
  std::string id;
  std::vector<AnnotationTuple> gt;
  std::vector<Segment> pred;
};

inline double mean(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

/// Full report over a split. Classes without ground truth are left out of the
/// per-action table.
inline EvalReport map_avg(const std::vector<SequencePair>& seqs, const MetricConfig& cfg = {},
                          const std::vector<std::string>& label_names = data::canonical_labels()) {
  cfg.validate();
  EvalReport r;
  r.thresholds = cfg.thresholds;
  r.matching = cfg.matching;
  for (const auto& s : seqs) {
    for (const auto& a : s.gt) {
      if (!data::valid_label(a.label)) throw SchemaError("eval: ground-truth label out of vocabulary in " + s.id);
    }
    for (const auto& p : s.pred) {
      if (!data::valid_label(p.label)) throw SchemaError("eval: predicted label out of vocabulary in " + s.id);
    }
  }

  std::map<int, std::vector<double>> per_label_tious;
  std::vector<double> all;
  if (cfg.matching == Matching::hit_ratio) {
    for (const auto& s : seqs) {
      const auto t = match_and_score(s.gt, s.pred);
      for (std::size_t i = 0; i < t.size(); ++i) {
        per_label_tious[s.gt[i].label].push_back(t[i]);
        all.push_back(t[i]);
      }
    }
    r.n_actions = all.size();
    if (all.empty()) std::cerr << "warning: evaluation set has no ground-truth actions; AP defined as 0\n";
    for (double t : cfg.thresholds) r.ap.push_back(ap_at_t(all, t));
    for (const auto& [label, tious] : per_label_tious) {
      ActionRow row{label, label_names.at(static_cast<std::size_t>(label)), tious.size(), {}, 0.0};
      for (double t : cfg.thresholds) row.ap.push_back(ap_at_t(tious, t));
      row.mean = mean(row.ap);
      r.per_action.push_back(std::move(row));
    }
  } else {
    std::vector<std::vector<AnnotationTuple>> gts;
    std::vector<RankedItem> items;
    std::map<int, std::size_t> counts;
    for (std::size_t s = 0; s < seqs.size(); ++s) {
      gts.push_back(seqs[s].gt);
      for (const auto& a : seqs[s].gt) ++counts[a.label];
      for (const auto& p : seqs[s].pred) items.push_back({s, p});
    }
    for (const auto& [label, n] : counts) {
      ActionRow row{label, label_names.at(static_cast<std::size_t>(label)), n, {}, 0.0};
      for (double t : cfg.thresholds) row.ap.push_back(ranked_ap(gts, items, label, t));
      row.mean = mean(row.ap);
      r.n_actions += n;
      r.per_action.push_back(std::move(row));
    }
    for (std::size_t k = 0; k < cfg.thresholds.size(); ++k) {
      std::vector<double> col;
      for (const auto& row : r.per_action) col.push_back(row.ap[k]);
      r.ap.push_back(mean(col));
    }
  }
  r.map_avg = mean(r.ap);
  return r;
}

inline std::string fmt_threshold(double t) {
  std::ostringstream os;
  os << "mAP@" << std::fixed << std::setprecision(2) << t;
  return os.str();
}

inline json to_json(const EvalReport& r) {
  json per = json::array();
  for (const auto& row : r.per_action) {
    per.push_back({{"label", row.label}, {"name", row.name}, {"count", row.count}, {"ap", row.ap}, {"mean", row.mean}});
  }
  return json{{"matching", r.matching == Matching::hit_ratio ? "hit_ratio" : "ranked_detection_ap"},
              {"thresholds", r.thresholds},
              {"ap", r.ap},
              {"map_avg", r.map_avg},
              {"n_actions", r.n_actions},
              {"per_action", per}};
}

/// Aligned text table: one row per action plus the overall row, values in %.
inline std::string format_table(const EvalReport& r) {
  std::ostringstream os;
  std::size_t name_w = 8;
  for (const auto& row : r.per_action) name_w = std::max(name_w, row.name.size());
  os << std::left << std::setw(static_cast<int>(name_w)) << "Action" << "  " << std::right << std::setw(5) << "N";
  for (double t : r.thresholds) os << "  " << std::setw(8) << fmt_threshold(t).substr(4);
  os << "  " << std::setw(8) << "avg" << '\n';
  auto line = [&](const std::string& name, std::size_t n, const std::vector<double>& ap, double m) {
    os << std::left << std::setw(static_cast<int>(name_w)) << name << "  " << std::right << std::setw(5) << n;
    os << std::fixed << std::setprecision(2);
    for (double v : ap) os << "  " << std::setw(8) << 100.0 * v;
    os << "  " << std::setw(8) << 100.0 * m << '\n';
    os.unsetf(std::ios::fixed);
  };
  for (const auto& row : r.per_action) line(row.name, row.count, row.ap, row.mean);
  line("Overall", r.n_actions, r.ap, r.map_avg);
  return os.str();
}

}  // namespace xrf::eval
