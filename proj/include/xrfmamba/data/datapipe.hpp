#pragma once

// Sliding windows, fixed-length resampling and the boundary truncation rule.

#include <algorithm>
#include <cmath>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "xrfmamba/data/dataset.hpp"

namespace xrf::data {

inline constexpr std::size_t kClipSteps = 2048;
inline constexpr double kWindowSeconds = 30.0;
inline constexpr double kTrainStrideSeconds = 3.0;
inline constexpr double kInferStrideSeconds = 5.0;
inline constexpr double kKeepRatio = 0.8;

/// Resamples rows [first, first + count) of a [T, C] array to [target_len, C].
/// Output row j samples the piecewise-linear interpolant at j·(count−1)/(target_len−1),
/// so both endpoints are reproduced exactly. With `box_filter` and count > target_len,
/// each channel is first smoothed by a centered moving average of width
/// ceil(count / target_len).
inline std::vector<float> resample_rows(std::span<const float> samples, std::size_t channels,
                                        std::size_t first, std::size_t count,
                                        std::size_t target_len, bool box_filter = false) {
  if (count == 0 || channels == 0) throw ShapeError("resample: empty stream");
  if (target_len < 2) throw ShapeError("resample: target_len must be >= 2");
  if ((first + count) * channels > samples.size()) throw ShapeError("resample: row range out of bounds");
  const float* src = samples.data() + first * channels;

  std::vector<float> smoothed;
  if (box_filter && count > target_len) {
    const std::size_t width = (count + target_len - 1) / target_len;
    const std::size_t half = width / 2;
    smoothed.resize(count * channels);
    for (std::size_t c = 0; c < channels; ++c) {
      // Prefix sums keep the filter O(count) per channel.
      std::vector<double> prefix(count + 1, 0.0);
      for (std::size_t t = 0; t < count; ++t) prefix[t + 1] = prefix[t] + src[t * channels + c];
      for (std::size_t t = 0; t < count; ++t) {
        const std::size_t lo = t >= half ? t - half : 0;
        const std::size_t hi = std::min(count, lo + width);
        smoothed[t * channels + c] = static_cast<float>((prefix[hi] - prefix[lo]) / double(hi - lo));
      }
    }
    src = smoothed.data();
  }

  std::vector<float> out(target_len * channels);
  if (count == 1) {
    for (std::size_t j = 0; j < target_len; ++j) std::copy_n(src, channels, out.data() + j * channels);
    return out;
  }
  const double scale = static_cast<double>(count - 1) / static_cast<double>(target_len - 1);
  for (std::size_t j = 0; j < target_len; ++j) {
    const double pos = static_cast<double>(j) * scale;
    std::size_t i0 = static_cast<std::size_t>(pos);
    if (i0 >= count - 1) i0 = count - 1;
    const double frac = pos - static_cast<double>(i0);
    const float* a = src + i0 * channels;
    float* o = out.data() + j * channels;
    if (frac == 0.0) {
      std::copy_n(a, channels, o);
      continue;
    }
    const float* b = a + channels;
    const float w = static_cast<float>(frac);
    for (std::size_t c = 0; c < channels; ++c) o[c] = a[c] + w * (b[c] - a[c]);
  }
  return out;
}

inline std::vector<float> resample_stream(const SensorStream& stream, std::size_t target_len,
                                          bool box_filter = false) {
  if (stream.length() == 0) throw ShapeError("resample_stream: empty stream");
  return resample_rows(stream.samples(), stream.channels(), 0, stream.length(), target_len, box_filter);
}

struct ClipLabel {
  int label = 0;
  double start_s = 0.0;  // clip-local
  double end_s = 0.0;
  bool masked = false;
  bool operator==(const ClipLabel&) const = default;
};

struct ClipLabels {
  std::vector<ClipLabel> entries;

  std::size_t unmasked_count() const {
    return static_cast<std::size_t>(
        std::count_if(entries.begin(), entries.end(), [](const ClipLabel& e) { return !e.masked; }));
  }
};

struct Clip {
  std::string sequence_id;
  double window_start_s = 0.0;
  double window_len_s = kWindowSeconds;
  double global_offset_s = 0.0;
  std::size_t steps = kClipSteps;
  std::map<ModalityKind, std::vector<float>> arrays;  // [steps, C] each
  std::map<ModalityKind, std::size_t> channels;
};

/// Window starts 0, stride, 2·stride, ... that fit inside the sequence, plus a
/// final window clamped to end at the sequence end when the grid leaves a tail.
/// Sequences no longer than one window yield the single start 0.
inline std::vector<double> window_starts(double duration_s, double window_s, double stride_s) {
  if (!(stride_s > 0.0)) throw ConfigError("window stride must be positive");
  if (!(window_s > 0.0)) throw ConfigError("window length must be positive");
  if (duration_s <= window_s) return {0.0};
  std::vector<double> starts;
  constexpr double eps = 1e-9;
  for (std::size_t k = 0;; ++k) {
    const double t0 = static_cast<double>(k) * stride_s;
    if (t0 + window_s > duration_s + eps) break;
    starts.push_back(t0);
  }
  const double last = duration_s - window_s;
  if (starts.back() < last - eps) starts.push_back(last);
  return starts;
}

/// Projects sequence annotations onto the window [t0, t0 + len]. Fully contained
/// actions are kept verbatim; cut actions retaining at least `keep_ratio` of their
/// duration are kept with the window edge as the new boundary; other cut actions
/// are kept as masked entries; actions that do not overlap are omitted.
inline ClipLabels apply_truncation_rule(const std::vector<AnnotationTuple>& annotations, double t0,
                                        double len, double keep_ratio = kKeepRatio) {
  ClipLabels out;
  const double t1 = t0 + len;
  for (const auto& a : annotations) {
    const double lo = std::max(a.start_s, t0);
    const double hi = std::min(a.end_s, t1);
    if (hi <= lo) continue;
    ClipLabel e{a.label, lo - t0, hi - t0, false};
    const bool inside = a.start_s >= t0 && a.end_s <= t1;
    if (!inside) e.masked = (hi - lo) < keep_ratio * a.duration();
    out.entries.push_back(e);
  }
  return out;
}

/// Row range of a window within a stream: start index round(t0·rate), length
/// round(len·rate), shifted or trimmed to stay within the stream.
inline std::pair<std::size_t, std::size_t> window_rows(const SensorStream& s, double t0, double len) {
  const std::size_t T = s.length();
  if (T == 0) throw ShapeError("window_rows: empty stream");
  auto n = static_cast<std::size_t>(std::llround(len * s.rate_hz()));
  n = std::clamp<std::size_t>(n, 1, T);
  auto first = static_cast<std::size_t>(std::max<long long>(0, std::llround(t0 * s.rate_hz())));
  if (first + n > T) first = T - n;
  return {first, n};
}

inline Clip make_clip(const SequenceRecord& record, double t0, double len,
                      std::size_t steps = kClipSteps, bool box_filter = false) {
  Clip clip;
  clip.sequence_id = record.id;
  clip.window_start_s = t0;
  clip.window_len_s = len;
  clip.global_offset_s = t0;
  clip.steps = steps;
  for (const auto& [kind, stream] : record.streams) {
    const auto [first, n] = window_rows(stream, t0, len);
    clip.arrays[kind] = resample_rows(stream.samples(), stream.channels(), first, n, steps, box_filter);
    clip.channels[kind] = stream.channels();
  }
  return clip;
}

struct WindowSpec {
  double start_s = 0.0;
  double len_s = kWindowSeconds;
};

inline std::vector<WindowSpec> plan_windows(double duration_s, double window_s, double stride_s) {
  std::vector<WindowSpec> out;
  const double len = std::min(window_s, duration_s);
  for (double t0 : window_starts(duration_s, window_s, stride_s)) out.push_back({t0, len});
  return out;
}

inline std::vector<std::pair<Clip, ClipLabels>> window_sequence(const SequenceRecord& record,
                                                                double window_s, double stride_s,
                                                                std::size_t steps = kClipSteps,
                                                                bool box_filter = false) {
  std::vector<std::pair<Clip, ClipLabels>> out;
  for (const auto& w : plan_windows(record.duration_s, window_s, stride_s)) {
    out.emplace_back(make_clip(record, w.start_s, w.len_s, steps, box_filter),
                     apply_truncation_rule(record.annotations, w.start_s, w.len_s));
  }
  return out;
}

}  // namespace xrf::data
