#pragma once

// Reference implementations written from the definitions, sharing no code
// with the library paths they check. Used by the unit suite and the
// acceptance runner.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "xrfmamba/data/dataset.hpp"

namespace xrf::oracle {

// ------------------------------------------------------------------ SSM

/// exp(M) by its Taylor series; accurate for the small norms used in tests.
inline Eigen::MatrixXd exp_series(const Eigen::MatrixXd& M, int terms = 30) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Identity(M.rows(), M.cols());
  Eigen::MatrixXd term = out;
  for (int k = 1; k < terms; ++k) {
    term = term * M / static_cast<double>(k);
    out += term;
  }
  return out;
}

/// (dA)^-1 (exp(dA) - I) dB as the series sum_k (dA)^k / (k+1)! dB.
inline Eigen::VectorXd zoh_input_series(const Eigen::MatrixXd& dA, const Eigen::VectorXd& dB, int terms = 30) {
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(dA.rows(), dA.cols());
  Eigen::MatrixXd power = Eigen::MatrixXd::Identity(dA.rows(), dA.cols());
  double fact = 1.0;
  for (int k = 0; k < terms; ++k) {
    fact *= static_cast<double>(k + 1);
    acc += power / fact;
    power = power * dA;
  }
  return acc * dB;
}

// ------------------------------------------------------------------ tIoU on an integer grid

/// Segment with integer endpoints (grid units); tIoU is the exact ratio
/// inter / union.
struct GridSeg {
  int label = 0;
  long start = 0;
  long end = 0;
  double score = 0.0;
};

struct Ratio {
  long num = 0;
  long den = 1;
};

inline Ratio grid_tiou(const GridSeg& a, const GridSeg& b) {
  long inter = 0;
  for (long x = a.start; x < a.end; ++x) inter += (x >= b.start && x < b.end);
  const long uni = (a.end - a.start) + (b.end - b.start) - inter;
  return {inter, uni};
}

inline bool ratio_less(Ratio a, Ratio b) { return a.num * b.den < b.num * a.den; }

/// tIoU >= pct / 100 in exact integer arithmetic.
inline bool ratio_at_least_pct(Ratio r, long pct) { return r.num * 100 >= pct * r.den; }

/// Greedy per-label matching of ground truth (in start order, index order on
/// ties) to the best unclaimed overlapping prediction (first index on ties).
inline std::vector<Ratio> hit_ratio_match(const std::vector<GridSeg>& gt, const std::vector<GridSeg>& pred) {
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < gt.size(); ++i) order.push_back(i);
  for (std::size_t i = 0; i < order.size(); ++i) {
    for (std::size_t j = i + 1; j < order.size(); ++j) {
      if (gt[order[j]].start < gt[order[i]].start ||
          (gt[order[j]].start == gt[order[i]].start && order[j] < order[i])) {
        std::swap(order[i], order[j]);
      }
    }
  }
  std::vector<bool> taken(pred.size(), false);
  std::vector<Ratio> out(gt.size(), Ratio{0, 1});
  for (std::size_t gi : order) {
    Ratio best{0, 1};
    long pick = -1;
    for (std::size_t j = 0; j < pred.size(); ++j) {
      if (taken[j] || pred[j].label != gt[gi].label) continue;
      const Ratio r = grid_tiou(gt[gi], pred[j]);
      if (r.num > 0 && ratio_less(best, r)) {
        best = r;
        pick = static_cast<long>(j);
      }
    }
    if (pick >= 0) {
      taken[static_cast<std::size_t>(pick)] = true;
      out[gi] = best;
    }
  }
  return out;
}

// ------------------------------------------------------------------ NMS

inline bool picked_before(const data::Segment& a, const data::Segment& b) {
  if (a.score > b.score) return true;
  if (a.score < b.score) return false;
  if (a.start_s < b.start_s) return true;
  if (a.start_s > b.start_s) return false;
  if (a.label < b.label) return true;
  if (a.label > b.label) return false;
  return a.end_s < b.end_s;
}

/// Overlapping intervals have a contiguous union, so it is the hull.
inline double overlap_ratio(const data::Segment& a, const data::Segment& b) {
  const double lo = std::max(a.start_s, b.start_s), hi = std::min(a.end_s, b.end_s);
  if (hi <= lo) return 0.0;
  return (hi - lo) / (std::max(a.end_s, b.end_s) - std::min(a.start_s, b.start_s));
}

/// Greedy process step by step: pick the best remaining, drop everything it
/// suppresses, repeat until nothing remains.
inline std::vector<data::Segment> brute_nms(std::vector<data::Segment> remaining, double thr, bool per_class) {
  std::vector<data::Segment> kept;
  while (!remaining.empty()) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < remaining.size(); ++i) {
      if (picked_before(remaining[i], remaining[best])) best = i;
    }
    const data::Segment top = remaining[best];
    kept.push_back(top);
    std::vector<data::Segment> next;
    for (std::size_t i = 0; i < remaining.size(); ++i) {
      if (i == best) continue;
      const bool same_group = !per_class || remaining[i].label == top.label;
      if (same_group && overlap_ratio(top, remaining[i]) > thr) continue;
      next.push_back(remaining[i]);
    }
    remaining = std::move(next);
  }
  return kept;
}

// ------------------------------------------------------------------ resampling

/// Evaluates the piecewise-linear interpolant of column c at position p.
inline double interpolant(const std::vector<float>& x, std::size_t rows, std::size_t channels, std::size_t c,
                          double p) {
  if (p <= 0.0) return x[c];
  if (p >= static_cast<double>(rows - 1)) return x[(rows - 1) * channels + c];
  const double fl = std::floor(p);
  const auto i = static_cast<std::size_t>(fl);
  const double w = p - fl;
  return (1.0 - w) * x[i * channels + c] + w * x[(i + 1) * channels + c];
}

inline std::vector<double> resample(const std::vector<float>& x, std::size_t rows, std::size_t channels,
                                    std::size_t target) {
  std::vector<double> out(target * channels);
  for (std::size_t j = 0; j < target; ++j) {
    const double p = static_cast<double>(j) * static_cast<double>(rows - 1) / static_cast<double>(target - 1);
    for (std::size_t c = 0; c < channels; ++c) out[j * channels + c] = interpolant(x, rows, channels, c, p);
  }
  return out;
}

// ------------------------------------------------------------------ fusion

inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

/// G = sigmoid((imu + wifi) Wg + bg); out = (G * [imu, wifi]) Wf + bf, per row.
inline std::vector<double> fuse_linear(std::span<const double> wifi, std::span<const double> imu,
                                       std::size_t rows, std::size_t D, std::span<const double> Wg,
                                       std::span<const double> bg, std::span<const double> Wf,
                                       std::span<const double> bf) {
  std::vector<double> out(rows * D);
  for (std::size_t r = 0; r < rows; ++r) {
    std::vector<double> cat(2 * D);
    for (std::size_t o = 0; o < 2 * D; ++o) {
      double z = bg[o];
      for (std::size_t i = 0; i < D; ++i) z += (imu[r * D + i] + wifi[r * D + i]) * Wg[i * 2 * D + o];
      const double feature = o < D ? imu[r * D + o] : wifi[r * D + o - D];
      cat[o] = sigmoid(z) * feature;
    }
    for (std::size_t o = 0; o < D; ++o) {
      double z = bf[o];
      for (std::size_t i = 0; i < 2 * D; ++i) z += cat[i] * Wf[i * D + o];
      out[r * D + o] = z;
    }
  }
  return out;
}

/// Zero-padded "same" convolution over time of x[B, L, D] with W[K, D, D].
inline std::vector<double> conv_same(std::span<const double> x, std::size_t B, std::size_t L, std::size_t D,
                                     std::span<const double> W, std::span<const double> bias, std::size_t K) {
  const long left = static_cast<long>((K - 1) / 2);
  std::vector<double> out(B * L * D);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t t = 0; t < L; ++t) {
      for (std::size_t o = 0; o < D; ++o) {
        double z = bias[o];
        for (std::size_t k = 0; k < K; ++k) {
          const long src = static_cast<long>(t) + static_cast<long>(k) - left;
          if (src < 0 || src >= static_cast<long>(L)) continue;
          for (std::size_t i = 0; i < D; ++i) {
            z += x[(b * L + static_cast<std::size_t>(src)) * D + i] * W[(k * D + i) * D + o];
          }
        }
        out[(b * L + t) * D + o] = z;
      }
    }
  }
  return out;
}

}  // namespace xrf::oracle
