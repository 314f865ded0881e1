#pragma once

// Seeded synthetic dataset with the same on-disk layout as the real one.
//
// Class k is a cosine at f_k = 0.8 + 0.35·k Hz, amplitude-modulated by
// 1 + 0.25·sin(2π·g_k·τ) with g_k = 0.15 + 0.05·(k mod 5) and τ the time since
// action onset. It is added to a class-specific subset of every device's
// channels. All samples then receive Gaussian noise; idle gaps carry noise only.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "xrfmamba/data/dataset.hpp"

namespace xrf::data {

struct SynthConfig {
  std::size_t n_sequences = 200;
  std::size_t n_classes = 5;
  double duration_min_s = 60.0;
  double duration_max_s = 60.0;
  std::size_t actions_min = 7;
  std::size_t actions_max = 10;
  double noise_std = 0.5;
  double amplitude = 1.0;
  std::uint64_t seed = 1;
  std::size_t n_subjects = 16;
  bool csi_phase = false;
  std::size_t test_every = 5;  // every n-th sequence goes to the test split

  void validate() const {
    if (n_sequences == 0) throw ConfigError("synth: n_sequences must be positive");
    if (n_classes == 0 || n_classes > kNumClasses) throw ConfigError("synth: n_classes must be in 1..30");
    if (!(duration_min_s > 0.0) || duration_max_s < duration_min_s) throw ConfigError("synth: duration range");
    if (actions_min == 0 || actions_max < actions_min) throw ConfigError("synth: actions range");
    if (noise_std < 0.0) throw ConfigError("synth: noise_std must be >= 0");
    if (n_subjects == 0) throw ConfigError("synth: n_subjects must be positive");
    if (test_every < 2) throw ConfigError("synth: test_every must be >= 2");
  }
};

inline double class_frequency_hz(int k) { return 0.8 + 0.35 * k; }
inline double class_envelope_hz(int k) { return 0.15 + 0.05 * (k % 5); }

/// Channels of a stream that carry class k's signature.
inline std::vector<std::size_t> class_channels(ModalityKind m, std::size_t channels, int k) {
  std::vector<std::size_t> out;
  if (m == ModalityKind::wifi_csi) {
    for (std::size_t c = 0; c < channels; ++c) {
      if ((7 * c + 13 * static_cast<std::size_t>(k)) % 9 == 0) out.push_back(c);
    }
  } else {
    const auto kk = static_cast<std::size_t>(k);
    out.push_back(kk % channels);
    const std::size_t second = (kk + channels / 2) % channels;
    if (second != out.front()) out.push_back(second);
  }
  return out;
}

inline double class_signal(int k, double tau, double amplitude) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  return amplitude * std::cos(two_pi * class_frequency_hz(k) * tau) *
         (1.0 + 0.25 * std::sin(two_pi * class_envelope_hz(k) * tau));
}

namespace detail {

inline double round_centi(double v) { return std::round(v * 100.0) / 100.0; }

/// Splits [0, duration] into equal slots and places one action inside each, so
/// actions never overlap and are separated by idle gaps.
inline std::vector<AnnotationTuple> plan_actions(std::mt19937_64& rng, const SynthConfig& cfg,
                                                 double duration) {
  std::uniform_int_distribution<std::size_t> count_dist(cfg.actions_min, cfg.actions_max);
  const std::size_t m = count_dist(rng);
  const double slot = duration / static_cast<double>(m);
  std::uniform_real_distribution<double> len_frac(0.45, 0.85);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> label_dist(0, static_cast<int>(cfg.n_classes) - 1);
  std::vector<AnnotationTuple> out;
  int previous = -1;
  for (std::size_t i = 0; i < m; ++i) {
    const double lo = slot * static_cast<double>(i);
    const double len = len_frac(rng) * slot;
    const double start = lo + unit(rng) * (slot - len);
    int label = label_dist(rng);
    if (cfg.n_classes > 1 && label == previous) label = (label + 1) % static_cast<int>(cfg.n_classes);
    previous = label;
    // Rounding inward keeps each action inside its slot.
    const double s = std::ceil(start * 100.0) / 100.0;
    const double e = std::floor((start + len) * 100.0) / 100.0;
    if (e > s) out.push_back({label, s, e});
  }
  return out;
}

inline std::string csi_layout(bool phase) {
  return std::string(phase ? kCsiAmplitudePhaseLayout : kCsiAmplitudeLayout);
}

inline std::string stream_file(ModalityKind m) { return std::string(modality_name(m)) + ".f32"; }

}  // namespace detail

/// Writes a complete dataset under out_dir and returns its manifest.
inline DatasetManifest synth_generate(const SynthConfig& cfg, const fs::path& out_dir) {
  cfg.validate();
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir)) throw IoError("cannot create output directory " + out_dir.string());

  std::mt19937_64 rng(cfg.seed);
  DatasetManifest m;
  m.root = out_dir;
  m.label_names = canonical_labels();
  std::uniform_real_distribution<double> dur_dist(cfg.duration_min_s, cfg.duration_max_s);

  char id_buf[32];
  for (std::size_t i = 0; i < cfg.n_sequences; ++i) {
    std::snprintf(id_buf, sizeof(id_buf), "seq_%04zu", i);
    SequenceHeader h;
    h.id = id_buf;
    h.scene = static_cast<Scene>(i % 3);
    std::snprintf(id_buf, sizeof(id_buf), "S%02zu", i % cfg.n_subjects + 1);
    h.subject = id_buf;
    h.duration_s = detail::round_centi(dur_dist(rng));
    h.annotations = detail::plan_actions(rng, cfg, h.duration_s);

    // Noise streams are seeded per (sequence, device) so each file depends on
    // the master seed only through a fixed derivation.
    const std::uint64_t seq_seed = rng();
    for (ModalityKind kind : kAllModalities) {
      StreamRef ref;
      ref.rate_hz = nominal_rate_hz(kind);
      ref.channel_layout = kind == ModalityKind::wifi_csi ? detail::csi_layout(cfg.csi_phase)
                                                          : std::string(kImuDefaultLayout);
      ref.channels = *layout_channels(kind, ref.channel_layout);
      ref.length = static_cast<std::size_t>(std::llround(ref.rate_hz * h.duration_s));
      ref.path = fs::path(h.id) / detail::stream_file(kind);

      std::vector<float> values(ref.length * ref.channels, 0.0f);
      if (cfg.noise_std > 0.0) {
        std::mt19937_64 noise_rng(seq_seed ^ (0x9E3779B97F4A7C15ull * (static_cast<std::uint64_t>(kind) + 1)));
        std::normal_distribution<float> noise(0.0f, static_cast<float>(cfg.noise_std));
        for (auto& v : values) v = noise(noise_rng);
      }
      for (const auto& a : h.annotations) {
        const auto chans = class_channels(kind, ref.channels, a.label);
        const auto t_lo = static_cast<std::size_t>(std::ceil(a.start_s * ref.rate_hz - 1e-9));
        for (std::size_t t = t_lo; t < ref.length; ++t) {
          const double time = static_cast<double>(t) / ref.rate_hz;
          if (time >= a.end_s) break;
          const auto v = static_cast<float>(class_signal(a.label, time - a.start_s, cfg.amplitude));
          for (std::size_t c : chans) values[t * ref.channels + c] += v;
        }
      }
      write_stream(out_dir / ref.path, ref, values);
      h.streams[kind] = ref;
    }
    (i % cfg.test_every == cfg.test_every - 1 ? m.test_ids : m.train_ids).push_back(h.id);
    m.sequences.push_back(std::move(h));
  }
  write_manifest(m, out_dir / "manifest.json");
  return m;
}

}  // namespace xrf::data
