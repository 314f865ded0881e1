#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "../support/oracles.hpp"
#include "xrfmamba/inference/inference.hpp"

using namespace xrf;
using data::Segment;
using inference::DecodeConfig;

namespace {

/// One-level output of length L with all logits at `background` except the
/// listed (step, class, logit) entries.
struct Hot {
  std::size_t t;
  std::size_t k;
  float logit;
  float ds;
  float de;
};

model::ModelOutput<float> one_level(std::size_t L, std::size_t C, float background, const std::vector<Hot>& hot) {
  std::vector<float> lg(L * C, background), rg(L * 2, 1.0f);
  for (const auto& h : hot) {
    lg[h.t * C + h.k] = h.logit;
    rg[h.t * 2] = h.ds;
    rg[h.t * 2 + 1] = h.de;
  }
  model::ModelOutput<float> out;
  out.levels.push_back({ad::Tensor<float>::from({1, L, C}, std::move(lg)),
                        ad::Tensor<float>::from({1, L, 2}, std::move(rg))});
  return out;
}

std::vector<Segment> random_segments(std::mt19937_64& rng, std::size_t n) {
  // Half-second grid and a handful of score levels force exact ties.
  std::uniform_int_distribution<int> pos(0, 40), len(1, 16), label(0, 2), score(1, 4);
  std::vector<Segment> v;
  for (std::size_t i = 0; i < n; ++i) {
    const double s = 0.5 * pos(rng);
    v.push_back({label(rng), s, s + 0.5 * len(rng), 0.25 * score(rng)});
  }
  return v;
}

}  // namespace

TEST(Nms, SingleAndDuplicate) {
  const Segment a{0, 1.0, 3.0, 0.9};
  EXPECT_EQ(inference::nms({a}, 0.5), std::vector<Segment>{a});
  const Segment b{0, 1.0, 3.0, 0.8};
  EXPECT_EQ(inference::nms({b, a}, 0.5), std::vector<Segment>{a});
  EXPECT_TRUE(inference::nms({}, 0.5).empty());
}

TEST(Nms, MatchesGreedyOracleIncludingOrder) {
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<std::size_t> count(1, 10);
  for (int trial = 0; trial < 200; ++trial) {
    const auto segs = random_segments(rng, count(rng));
    for (bool per_class : {false, true}) {
      for (double thr : {0.3, 0.5}) {
        const auto lib = inference::nms(segs, thr, per_class);
        const auto ref = oracle::brute_nms(segs, thr, per_class);
        EXPECT_EQ(lib, ref) << "trial " << trial << " per_class " << per_class << " thr " << thr;
        for (std::size_t i = 1; i < lib.size(); ++i) EXPECT_GE(lib[i - 1].score, lib[i].score);
      }
    }
  }
}

TEST(Nms, ClassAgnosticSuppressesAcrossLabels) {
  const std::vector<Segment> segs = {{0, 0.0, 10.0, 0.9}, {1, 1.0, 10.0, 0.8}};
  EXPECT_EQ(inference::nms(segs, 0.5).size(), 1u);
  EXPECT_EQ(inference::nms(segs, 0.5, true).size(), 2u);
}

TEST(Decode, AllBelowThresholdIsEmpty) {
  const auto out = one_level(15, 3, -8.0f, {});
  EXPECT_TRUE(inference::decode_proposals(out, 0, 30.0, DecodeConfig{}).empty());
}

TEST(Decode, OffsetsScaleWithLevelStride) {
  // L = 15 over 30 s gives a 2 s stride; step 4 is centered at 9 s.
  const auto out = one_level(15, 3, -8.0f, {{4, 1, 4.0f, 0.5f, 1.5f}});
  const auto segs = inference::decode_proposals(out, 0, 30.0, DecodeConfig{});
  ASSERT_EQ(segs.size(), 1u);
  EXPECT_EQ(segs[0].label, 1);
  EXPECT_DOUBLE_EQ(segs[0].start_s, 8.0);
  EXPECT_DOUBLE_EQ(segs[0].end_s, 12.0);
  EXPECT_NEAR(segs[0].score, 1.0 / (1.0 + std::exp(-4.0)), 1e-12);

  const auto unit = inference::decode_proposals(one_level(15, 3, -8.0f, {{4, 0, 4.0f, 1.0f, 1.0f}}), 0, 30.0, {});
  ASSERT_EQ(unit.size(), 1u);
  EXPECT_DOUBLE_EQ(unit[0].start_s, 7.0);
  EXPECT_DOUBLE_EQ(unit[0].end_s, 11.0);
}

TEST(Decode, ClampsToClip) {
  const auto out = one_level(15, 2, -8.0f, {{0, 0, 4.0f, 5.0f, 1.0f}, {14, 1, 4.0f, 1.0f, 9.0f}});
  const auto segs = inference::decode_proposals(out, 0, 30.0, DecodeConfig{});
  ASSERT_EQ(segs.size(), 2u);
  EXPECT_EQ(segs[0].start_s, 0.0);
  EXPECT_EQ(segs[1].end_s, 30.0);
}

TEST(Decode, CapKeepsBestAfterNms) {
  std::vector<Hot> hot;
  for (std::size_t t = 0; t < 15; ++t) hot.push_back({t, 0, static_cast<float>(t) * 0.1f, 0.5f, 0.5f});
  DecodeConfig cfg;
  cfg.max_segments_per_clip = 3;
  const auto kept = inference::clip_detections(inference::decode_proposals(one_level(15, 1, -8.0f, hot), 0, 30.0, cfg), cfg);
  ASSERT_EQ(kept.size(), 3u);
  EXPECT_DOUBLE_EQ(kept[0].start_s, 28.0);
  EXPECT_DOUBLE_EQ(kept[2].start_s, 24.0);
}

TEST(Decode, ConfigValidation) {
  DecodeConfig cfg;
  cfg.nms_tiou_threshold = 1.5;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.infer_stride_s = 0.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Predictions, RoundTripSortedAndValidated) {
  const auto dir = std::filesystem::temp_directory_path() / "xrf_preds";
  std::filesystem::create_directories(dir);
  std::vector<inference::SequencePredictions> preds = {
      {"seq_b", {{1, 5.0, 7.0, 0.6}, {0, 0.125, 2.0, 0.9}}},
      {"seq_a", {{2, 1.0, 2.0, 0.3}}},
  };
  inference::write_predictions(dir / "p.json", preds);
  const auto back = inference::read_predictions(dir / "p.json");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].sequence_id, "seq_a");
  EXPECT_EQ(back[1].segments[0], (Segment{0, 0.125, 2.0, 0.9}));

  data::write_text(dir / "bad.json", R"([{"sequence_id":"x","segments":[{"label":0,"start_s":2,"end_s":1,"score":0.5}]}])");
  EXPECT_THROW(inference::read_predictions(dir / "bad.json"), SchemaError);
  data::write_text(dir / "dup.json", R"([{"sequence_id":"x","segments":[]},{"sequence_id":"x","segments":[]}])");
  EXPECT_THROW(inference::read_predictions(dir / "dup.json"), SchemaError);
  data::write_text(dir / "score.json", R"([{"sequence_id":"x","segments":[{"label":0,"start_s":0,"end_s":1,"score":2}]}])");
  EXPECT_THROW(inference::read_predictions(dir / "score.json"), SchemaError);
  std::filesystem::remove_all(dir);
}
