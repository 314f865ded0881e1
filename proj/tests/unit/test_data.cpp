#include <gtest/gtest.h>

#include <complex>
#include <numbers>
#include <filesystem>
#include <fstream>
#include <random>

#include "../support/oracles.hpp"
#include "xrfmamba/data/datapipe.hpp"
#include "xrfmamba/data/synth.hpp"

using namespace xrf;
using namespace xrf::data;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("xrf_data_" + name);
  fs::remove_all(p);
  return p;
}

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

SynthConfig small_synth(std::uint64_t seed = 1) {
  SynthConfig c;
  c.n_sequences = 5;
  c.seed = seed;
  return c;
}

}  // namespace

// ------------------------------------------------------------------ resampling

TEST(Resample, ConstantStaysConstant) {
  for (std::size_t n : {2u, 750u, 6000u}) {
    std::vector<float> x(n * 2, 7.0f);
    const auto y = resample_rows(x, 2, 0, n, 2048);
    for (float v : y) EXPECT_EQ(v, 7.0f);
  }
}

TEST(Resample, RampEndpointsExact) {
  const std::size_t n = 750;
  std::vector<float> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = static_cast<float>(i) / static_cast<float>(n - 1);
  const auto y = resample_rows(x, 1, 0, n, 2048);
  EXPECT_EQ(y.front(), 0.0f);
  EXPECT_EQ(y.back(), 1.0f);
  for (std::size_t j = 0; j < 2048; ++j) EXPECT_NEAR(y[j], static_cast<double>(j) / 2047.0, 1e-6);
}

TEST(Resample, DownsampleMatchesInterpolantOracle) {
  std::mt19937_64 rng(4);
  std::normal_distribution<float> nd;
  const std::size_t n = 6000, C = 3;
  std::vector<float> x(n * C);
  for (auto& v : x) v = nd(rng);
  const auto y = resample_rows(x, C, 0, n, 2048);
  const auto ref = oracle::resample(x, n, C, 2048);
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], ref[i], 1e-6);
}

TEST(Resample, IdentityAtEqualLength) {
  std::mt19937_64 rng(5);
  std::normal_distribution<float> nd;
  std::vector<float> x(2048 * 2);
  for (auto& v : x) v = nd(rng);
  EXPECT_EQ(resample_rows(x, 2, 0, 2048, 2048), x);
}

TEST(Resample, BoxFilterSmoothsBeforeDecimation) {
  std::vector<float> x(4096);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = i % 2 ? 1.0f : -1.0f;  // Nyquist tone
  const auto plain = resample_rows(x, 1, 0, x.size(), 2048);
  const auto filt = resample_rows(x, 1, 0, x.size(), 2048, true);
  double e_plain = 0, e_filt = 0;
  for (std::size_t i = 0; i < 2048; ++i) {
    e_plain += plain[i] * plain[i];
    e_filt += filt[i] * filt[i];
  }
  EXPECT_LT(e_filt, 0.01 * e_plain);
}

TEST(Resample, Errors) {
  std::vector<float> x(10);
  EXPECT_THROW(resample_rows(x, 1, 0, 10, 1), ShapeError);
  EXPECT_THROW(resample_rows(x, 1, 0, 0, 16), ShapeError);
  EXPECT_THROW(resample_rows(x, 1, 5, 10, 16), ShapeError);
}

// ------------------------------------------------------------------ windows and truncation

TEST(Windows, SixtySecondsStrideThree) {
  const auto starts = window_starts(60.0, 30.0, 3.0);
  std::vector<double> expected;
  for (int k = 0; k <= 10; ++k) expected.push_back(3.0 * k);
  EXPECT_EQ(starts, expected);
}

TEST(Windows, ExactFitAndShortSequences) {
  EXPECT_EQ(window_starts(30.0, 30.0, 3.0), std::vector<double>{0.0});
  EXPECT_EQ(window_starts(12.5, 30.0, 3.0), std::vector<double>{0.0});
  const auto w = plan_windows(12.5, 30.0, 3.0);
  ASSERT_EQ(w.size(), 1u);
  EXPECT_EQ(w[0].len_s, 12.5);
}

TEST(Windows, TailWindowClampedToEnd) {
  const auto starts = window_starts(47.0, 30.0, 5.0);
  EXPECT_EQ(starts, (std::vector<double>{0.0, 5.0, 10.0, 15.0, 17.0}));
  EXPECT_THROW(window_starts(60.0, 30.0, 0.0), ConfigError);
}

TEST(Truncation, Fixtures) {
  const auto half = apply_truncation_rule({{3, 25.0, 35.0}}, 0.0, 30.0);
  ASSERT_EQ(half.entries.size(), 1u);
  EXPECT_TRUE(half.entries[0].masked);

  const auto inside = apply_truncation_rule({{3, 2.0, 10.0}}, 0.0, 30.0);
  ASSERT_EQ(inside.entries.size(), 1u);
  EXPECT_EQ(inside.entries[0], (ClipLabel{3, 2.0, 10.0, false}));

  // Window (0, 30) over an action starting before it: expressed with a
  // sequence offset so the action lies in valid sequence time.
  const auto cut = apply_truncation_rule({{4, 8.0, 24.0}}, 10.0, 30.0);
  ASSERT_EQ(cut.entries.size(), 1u);
  EXPECT_EQ(cut.entries[0], (ClipLabel{4, 0.0, 14.0, false}));

  EXPECT_TRUE(apply_truncation_rule({{1, 31.0, 35.0}}, 0.0, 30.0).entries.empty());
}

TEST(Truncation, CoverageInvariants) {
  std::mt19937_64 rng(12);
  SynthConfig cfg;
  for (int trial = 0; trial < 50; ++trial) {
    const double duration = 60.0 + 40.0 * std::uniform_real_distribution<double>()(rng);
    const auto anns = detail::plan_actions(rng, cfg, duration);
    const auto windows = plan_windows(duration, 30.0, 3.0);
    for (const auto& a : anns) {
      double unmasked = 0.0;
      std::size_t covering = 0;
      bool any_mostly_inside = false, any_unmasked = false;
      for (const auto& w : windows) {
        const double ov = std::min(a.end_s, w.start_s + w.len_s) - std::max(a.start_s, w.start_s);
        if (ov <= 0) continue;
        ++covering;
        any_mostly_inside |= ov >= 0.8 * a.duration();
        for (const auto& e : apply_truncation_rule({a}, w.start_s, w.len_s).entries) {
          if (!e.masked) {
            unmasked += e.end_s - e.start_s;
            any_unmasked = true;
          }
        }
      }
      EXPECT_LE(unmasked, static_cast<double>(covering) * a.duration() + 1e-9);
      if (any_mostly_inside) {
        EXPECT_TRUE(any_unmasked);
      }
    }
  }
}

TEST(Windows, LocalPlusOffsetRecoversGlobalExactly) {
  std::mt19937_64 rng(8);
  SynthConfig cfg;
  for (int trial = 0; trial < 200; ++trial) {
    const double duration = detail::round_centi(30.0 + 90.0 * std::uniform_real_distribution<double>()(rng));
    const auto anns = detail::plan_actions(rng, cfg, duration);
    for (double stride : {3.0, 5.0}) {
      for (const auto& w : plan_windows(duration, 30.0, stride)) {
        for (const auto& a : anns) {
          if (a.start_s < w.start_s || a.end_s > w.start_s + w.len_s) continue;
          const auto labels = apply_truncation_rule({a}, w.start_s, w.len_s);
          ASSERT_EQ(labels.entries.size(), 1u);
          EXPECT_EQ(labels.entries[0].start_s + w.start_s, a.start_s);
          EXPECT_EQ(labels.entries[0].end_s + w.start_s, a.end_s);
        }
      }
    }
  }
}

TEST(Clip, EveryModalityHas2048Steps) {
  const auto dir = scratch("clip");
  const auto m = synth_generate(small_synth(), dir);
  const auto rec = open_sequence(m, m.sequences[0].id);
  const auto clips = window_sequence(rec, 30.0, 3.0);
  EXPECT_EQ(clips.size(), 11u);
  for (const auto& [clip, labels] : clips) {
    EXPECT_EQ(clip.arrays.size(), 7u);
    for (const auto& [kind, arr] : clip.arrays) EXPECT_EQ(arr.size(), 2048 * clip.channels.at(kind));
    EXPECT_LE(clip.window_start_s + clip.window_len_s, rec.duration_s + 3.0);
    for (const auto& e : labels.entries) {
      if (e.masked) continue;
      EXPECT_GE(e.start_s, 0.0);
      EXPECT_LT(e.start_s, e.end_s);
      EXPECT_LE(e.end_s, clip.window_len_s);
    }
  }
  fs::remove_all(dir);
}

TEST(Clip, WindowRowsStayInsideStream) {
  auto s = SensorStream::from_values(ModalityKind::imu_earbuds, 25.0, 1, "acc1", std::vector<float>(100));
  const auto [first, n] = window_rows(s, 3.0, 30.0);
  EXPECT_EQ(n, 100u);
  EXPECT_EQ(first, 0u);
  const auto [f2, n2] = window_rows(s, 1.0, 2.0);
  EXPECT_EQ(f2, 25u);
  EXPECT_EQ(n2, 50u);
}

// ------------------------------------------------------------------ synthetic data and manifests

TEST(Synth, SameSeedIsByteIdentical) {
  const auto a = scratch("synth_a"), b = scratch("synth_b"), c = scratch("synth_c");
  synth_generate(small_synth(1), a);
  synth_generate(small_synth(1), b);
  synth_generate(small_synth(2), c);
  std::size_t files = 0;
  bool any_diff = false;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), a);
    EXPECT_EQ(file_bytes(e.path()), file_bytes(b / rel)) << rel;
    any_diff |= file_bytes(e.path()) != file_bytes(c / rel);
    ++files;
  }
  EXPECT_EQ(files, 1u + 5u * 7u * 2u);  // manifest + (stream + sidecar) per device
  EXPECT_TRUE(any_diff);
  for (const auto& p : {a, b, c}) fs::remove_all(p);
}

TEST(Synth, DefaultSplitIsEightyTwenty) {
  SynthConfig cfg;
  cfg.n_sequences = 200;
  cfg.duration_min_s = cfg.duration_max_s = 31.0;  // keep the test light
  const auto dir = scratch("split");
  const auto m = synth_generate(cfg, dir);
  EXPECT_EQ(m.sequences.size(), 200u);
  EXPECT_EQ(m.train_ids.size(), 160u);
  EXPECT_EQ(m.test_ids.size(), 40u);
  for (const auto& s : m.sequences) {
    for (const auto& a : s.annotations) EXPECT_LT(a.label, 5);
  }
  fs::remove_all(dir);
}

TEST(Synth, NoiselessActionCarriesClassFrequency) {
  SynthConfig cfg;
  cfg.n_sequences = 1;
  cfg.noise_std = 0.0;
  cfg.actions_min = cfg.actions_max = 1;
  cfg.seed = 3;
  const auto dir = scratch("spectrum");
  const auto m = synth_generate(cfg, dir);
  const auto rec = open_sequence(m, m.sequences[0].id);
  ASSERT_EQ(rec.annotations.size(), 1u);
  const auto a = rec.annotations[0];
  const auto& s = rec.streams.at(ModalityKind::imu_watch_right);
  const auto ch = class_channels(ModalityKind::imu_watch_right, s.channels(), a.label)[0];
  const auto lo = static_cast<std::size_t>(std::ceil(a.start_s * s.rate_hz()));
  const auto hi = static_cast<std::size_t>(std::floor(a.end_s * s.rate_hz()));
  // DFT magnitude over 0.1 Hz bins; the peak must sit at the class frequency.
  double best_f = 0, best = 0;
  for (double f = 0.1; f < 5.0; f += 0.05) {
    std::complex<double> acc = 0;
    for (std::size_t t = lo; t < hi; ++t) {
      acc += static_cast<double>(s.samples()[t * s.channels() + ch]) *
             std::polar(1.0, -2.0 * std::numbers::pi * f * static_cast<double>(t) / s.rate_hz());
    }
    if (std::abs(acc) > best) {
      best = std::abs(acc);
      best_f = f;
    }
  }
  EXPECT_NEAR(best_f, class_frequency_hz(a.label), 0.1);
  // Outside the action the channel is exactly flat.
  for (std::size_t t = 0; t + 1 < lo; ++t) EXPECT_EQ(s.samples()[t * s.channels() + ch], 0.0f);
  fs::remove_all(dir);
}

TEST(Manifest, WriteLoadRoundTripIsByteEquivalent) {
  const auto dir = scratch("manifest");
  synth_generate(small_synth(), dir);
  const auto m = load_manifest(dir / "manifest.json");
  EXPECT_EQ(m.sequences.size(), 5u);
  write_manifest(m, dir / "again.json");
  EXPECT_EQ(file_bytes(dir / "manifest.json"), file_bytes(dir / "again.json"));
  fs::remove_all(dir);
}

TEST(Manifest, SchemaErrorsNameTheField) {
  const auto dir = scratch("schema");
  synth_generate(small_synth(), dir);
  auto j = parse_json_file(dir / "manifest.json");
  auto expect_error = [&](const json& doc, const std::string& needle) {
    write_text(dir / "bad.json", doc.dump());
    try {
      load_manifest(dir / "bad.json");
      ADD_FAILURE() << "expected failure mentioning " << needle;
    } catch (const SchemaError& e) {
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
  };
  auto bad = j;
  bad["sequences"][1]["annotations"][0]["label"] = 99;
  expect_error(bad, "sequences[1]");
  bad = j;
  bad["sequences"][0].erase("duration_s");
  expect_error(bad, "duration_s");
  bad = j;
  bad["split"]["test"].push_back(bad["split"]["train"][0]);
  expect_error(bad, "both train and test");
  bad = j;
  bad["sequences"][2]["streams"]["imu_wristband"] = "x.f32";
  expect_error(bad, "unknown modality");
  EXPECT_THROW(load_manifest(dir / "missing.json"), IoError);
  fs::remove_all(dir);
}

TEST(Manifest, TruncatedStreamFileIsRejected) {
  const auto dir = scratch("trunc");
  const auto m = synth_generate(small_synth(), dir);
  const auto f = dir / m.sequences[0].streams.at(ModalityKind::wifi_csi).path;
  fs::resize_file(f, fs::file_size(f) - 4);
  EXPECT_THROW(load_manifest(dir / "manifest.json"), SchemaError);
  fs::remove_all(dir);
}

TEST(Labels, VocabularyAndScenes) {
  EXPECT_EQ(kLabelNames.size(), 30u);
  EXPECT_EQ(label_id("Walk"), 0);
  EXPECT_FALSE(label_id("Juggle").has_value());
  for (auto s : {Scene::dining, Scene::study, Scene::bedroom}) {
    EXPECT_EQ(parse_scene(scene_name(s)), s);
    for (int l : scene_actions(s)) EXPECT_TRUE(valid_label(l));
  }
  EXPECT_EQ(layout_channels(ModalityKind::wifi_csi, "csi_amp:3x3x30"), 270u);
  EXPECT_EQ(layout_channels(ModalityKind::wifi_csi, "csi_amp_phase:3x3x30"), 540u);
  EXPECT_EQ(layout_channels(ModalityKind::imu_glasses, "acc3+gyr3"), 6u);
  EXPECT_FALSE(layout_channels(ModalityKind::imu_glasses, "foo3").has_value());
}
