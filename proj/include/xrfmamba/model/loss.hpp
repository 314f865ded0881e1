#pragma once

// Training targets and loss.
//
// Level i of a clip of length W seconds has L_i steps of stride W / L_i; step t
// sits at center (t + 0.5)·stride. A step is positive when its center lies in an
// unmasked action (the shortest one if several); its regression targets are the
// stride-normalized distances to that action's start and end. Steps covered only
// by masked actions are ignored entirely. With N = max(1, positives in batch):
//
//   L_cls = Σ_levels Σ_steps Σ_classes focal(logit, onehot) / N
//   L_loc = Σ_levels Σ_positives |d_s − t_s| + |d_e − t_e| / N
//   L     = α1·L_cls + α2·L_loc

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "xrfmamba/data/datapipe.hpp"
#include "xrfmamba/model/xrfmamba.hpp"

namespace xrf::model {

struct LossConfig {
  double alpha_cls = 1.0;
  double alpha_loc = 1000.0;
  double focal_gamma = 2.0;
  double focal_alpha = 0.25;

  void validate() const {
    if (alpha_cls < 0 || alpha_loc < 0 || focal_gamma < 0 || focal_alpha < 0 || focal_alpha > 1) {
      throw ConfigError("loss: weights must be >= 0 and focal_alpha in [0,1]");
    }
  }
};

struct LevelTargets {
  std::size_t length = 0;
  double stride_s = 0.0;
  std::vector<int> label;               // -1: background
  std::vector<std::uint8_t> ignore;     // 1: excluded from both terms
  std::vector<double> dist_start, dist_end;  // stride units, valid where label >= 0

  std::size_t positives() const {
    std::size_t n = 0;
    for (int l : label) n += l >= 0;
    return n;
  }
};

inline double step_center(std::size_t t, double stride_s) { return (static_cast<double>(t) + 0.5) * stride_s; }

inline LevelTargets build_level_targets(const data::ClipLabels& labels, double window_s, std::size_t length) {
  LevelTargets tg;
  tg.length = length;
  tg.stride_s = window_s / static_cast<double>(length);
  tg.label.assign(length, -1);
  tg.ignore.assign(length, 0);
  tg.dist_start.assign(length, 0.0);
  tg.dist_end.assign(length, 0.0);
  std::vector<double> best(length, std::numeric_limits<double>::infinity());
  for (const auto& e : labels.entries) {
    for (std::size_t t = 0; t < length; ++t) {
      const double c = step_center(t, tg.stride_s);
      if (c < e.start_s || c > e.end_s) continue;
      if (e.masked) {
        tg.ignore[t] = 1;
        continue;
      }
      const double dur = e.end_s - e.start_s;
      if (dur < best[t]) {
        best[t] = dur;
        tg.label[t] = e.label;
        tg.dist_start[t] = (c - e.start_s) / tg.stride_s;
        tg.dist_end[t] = (e.end_s - c) / tg.stride_s;
      }
    }
  }
  for (std::size_t t = 0; t < length; ++t) {
    if (tg.label[t] >= 0) tg.ignore[t] = 0;
  }
  return tg;
}

/// targets[b][level] for a batch.
inline std::vector<std::vector<LevelTargets>> build_targets(const std::vector<const data::ClipLabels*>& labels,
                                                            const std::vector<double>& window_s,
                                                            const std::vector<std::size_t>& level_lengths) {
  std::vector<std::vector<LevelTargets>> out(labels.size());
  for (std::size_t b = 0; b < labels.size(); ++b) {
    for (std::size_t len : level_lengths) out[b].push_back(build_level_targets(*labels[b], window_s[b], len));
  }
  return out;
}

/// Sigmoid focal loss of one logit and its derivative.
struct FocalTerm {
  double loss;
  double grad;
};

inline FocalTerm focal_term(double x, bool positive, double gamma, double alpha) {
  const double p = 1.0 / (1.0 + std::exp(-x));
  if (positive) {
    const double log_p = -ad::detail::stable_softplus(-x);
    const double q = 1.0 - p;
    const double w = std::pow(q, gamma);
    return {-alpha * w * log_p, -alpha * w * (q - gamma * p * log_p)};
  }
  const double log_q = -ad::detail::stable_softplus(x);
  const double w = std::pow(p, gamma);
  return {-(1.0 - alpha) * w * log_q, (1.0 - alpha) * w * (p - gamma * (1.0 - p) * log_q)};
}

template <typename T>
struct LossResult {
  Tensor<T> total;
  double cls = 0.0;
  double loc = 0.0;
  std::size_t positives = 0;
};

template <typename T>
LossResult<T> compute_loss(const ModelOutput<T>& out, const std::vector<std::vector<LevelTargets>>& targets,
                           const LossConfig& cfg) {
  cfg.validate();
  if (out.levels.empty()) throw ShapeError("compute_loss: no pyramid levels");
  const std::size_t B = out.levels[0].logits.dim(0);
  if (targets.size() != B) throw ShapeError("compute_loss: batch size mismatch");
  std::size_t positives = 0;
  for (const auto& per_clip : targets) {
    if (per_clip.size() != out.levels.size()) throw ShapeError("compute_loss: level count mismatch");
    for (const auto& tg : per_clip) positives += tg.positives();
  }
  const double norm = 1.0 / static_cast<double>(std::max<std::size_t>(1, positives));

  LossResult<T> result;
  result.positives = positives;
  Tensor<T> total;
  for (std::size_t lvl = 0; lvl < out.levels.size(); ++lvl) {
    const auto& logits = out.levels[lvl].logits;
    const auto& reg = out.levels[lvl].regression;
    const std::size_t L = logits.dim(1), C = logits.dim(2);
    if (reg.dim(1) != L || reg.dim(2) != 2) throw ShapeError("compute_loss: regression shape");

    // Classification term with its gradient computed in the same sweep.
    std::vector<T> cls_grad(logits.size(), T(0));
    double cls = 0.0;
    for (std::size_t b = 0; b < B; ++b) {
      const auto& tg = targets[b][lvl];
      if (tg.length != L) throw ShapeError("compute_loss: target length mismatch");
      for (std::size_t t = 0; t < L; ++t) {
        if (tg.ignore[t]) continue;
        const std::size_t row = (b * L + t) * C;
        for (std::size_t c = 0; c < C; ++c) {
          const auto f = focal_term(static_cast<double>(logits[row + c]), tg.label[t] == static_cast<int>(c),
                                    cfg.focal_gamma, cfg.focal_alpha);
          cls += f.loss;
          cls_grad[row + c] = static_cast<T>(f.grad * norm * cfg.alpha_cls);
        }
      }
    }
    cls *= norm;
    auto cls_t = ad::make_result<T>({}, {static_cast<T>(cfg.alpha_cls * cls)}, {logits},
                                    [logits, g = std::move(cls_grad)](ad::Node<T>& self) {
                                      T* gl = ad::grad_of(logits);
                                      const T s = self.grad[0];
                                      for (std::size_t i = 0; i < g.size(); ++i) gl[i] += s * g[i];
                                    });

    std::vector<T> loc_grad(reg.size(), T(0));
    double loc = 0.0;
    for (std::size_t b = 0; b < B; ++b) {
      const auto& tg = targets[b][lvl];
      for (std::size_t t = 0; t < L; ++t) {
        if (tg.label[t] < 0) continue;
        const std::size_t i = (b * L + t) * 2;
        const double ds = static_cast<double>(reg[i]) - tg.dist_start[t];
        const double de = static_cast<double>(reg[i + 1]) - tg.dist_end[t];
        loc += std::abs(ds) + std::abs(de);
        loc_grad[i] = static_cast<T>((ds > 0) - (ds < 0)) * static_cast<T>(norm * cfg.alpha_loc);
        loc_grad[i + 1] = static_cast<T>((de > 0) - (de < 0)) * static_cast<T>(norm * cfg.alpha_loc);
      }
    }
    loc *= norm;
    auto loc_t = ad::make_result<T>({}, {static_cast<T>(cfg.alpha_loc * loc)}, {reg},
                                    [reg, g = std::move(loc_grad)](ad::Node<T>& self) {
                                      T* gr = ad::grad_of(reg);
                                      const T s = self.grad[0];
                                      for (std::size_t i = 0; i < g.size(); ++i) gr[i] += s * g[i];
                                    });
    result.cls += cls;
    result.loc += loc;
    auto level_total = ad::add(cls_t, loc_t);
    total = total.defined() ? ad::add(total, level_total) : level_total;
  }
  result.total = total;
  return result;
}

}  // namespace xrf::model
