#include <gtest/gtest.h>

#include <random>

#include "../support/oracles.hpp"
#include "xrfmamba/eval/metrics.hpp"

using namespace xrf;
using data::AnnotationTuple;
using data::Segment;

namespace {

struct GridInstance {
  std::vector<oracle::GridSeg> gt, pred;
};

/// Non-overlapping ground truth and free-form predictions on an integer grid.
GridInstance random_instance(std::mt19937_64& rng, int classes) {
  GridInstance g;
  std::uniform_int_distribution<int> lab(0, classes - 1), gap(0, 4), len(1, 12), n_gt(1, 6), n_pred(0, 10);
  long cursor = 0;
  for (int i = n_gt(rng); i > 0; --i) {
    cursor += gap(rng);
    const long l = len(rng);
    g.gt.push_back({lab(rng), cursor, cursor + l, 0.0});
    cursor += l;
  }
  std::uniform_int_distribution<long> pos(0, cursor + 4);
  std::uniform_real_distribution<double> score(0.0, 1.0);
  for (int i = n_pred(rng); i > 0; --i) {
    const long s = pos(rng);
    g.pred.push_back({lab(rng), s, s + len(rng), score(rng)});
  }
  return g;
}

std::vector<AnnotationTuple> to_gt(const std::vector<oracle::GridSeg>& v) {
  std::vector<AnnotationTuple> out;
  for (const auto& s : v) out.push_back({s.label, double(s.start), double(s.end)});
  return out;
}

std::vector<Segment> to_pred(const std::vector<oracle::GridSeg>& v) {
  std::vector<Segment> out;
  for (const auto& s : v) out.push_back({s.label, double(s.start), double(s.end), s.score});
  return out;
}

}  // namespace

TEST(Tiou, Basics) {
  EXPECT_DOUBLE_EQ(eval::tiou(0, 10, 0, 10), 1.0);
  EXPECT_DOUBLE_EQ(eval::tiou(0, 10, 5, 15), 5.0 / 15.0);
  EXPECT_DOUBLE_EQ(eval::tiou(0, 10, 10, 20), 0.0);
  EXPECT_DOUBLE_EQ(eval::tiou(0, 10, 2, 4), 0.2);
}

TEST(Metrics, RandomInstancesMatchBruteForceExactly) {
  std::mt19937_64 rng(2024);
  const eval::MetricConfig cfg;
  for (int trial = 0; trial < 100; ++trial) {
    const auto inst = random_instance(rng, 3);
    const auto lib = eval::match_and_score(to_gt(inst.gt), to_pred(inst.pred));
    const auto ref = oracle::hit_ratio_match(inst.gt, inst.pred);
    ASSERT_EQ(lib.size(), ref.size());
    for (std::size_t i = 0; i < lib.size(); ++i) {
      EXPECT_EQ(lib[i], static_cast<double>(ref[i].num) / static_cast<double>(ref[i].den)) << trial << " gt " << i;
    }

    const auto report = eval::map_avg({{"s", to_gt(inst.gt), to_pred(inst.pred)}}, cfg);
    for (std::size_t k = 0; k < cfg.thresholds.size(); ++k) {
      const long pct = 50 + 5 * static_cast<long>(k);
      std::size_t hits = 0;
      for (const auto& r : ref) hits += oracle::ratio_at_least_pct(r, pct);
      EXPECT_EQ(report.ap[k], static_cast<double>(hits) / static_cast<double>(ref.size())) << trial << " t " << pct;
      if (k > 0) {
        EXPECT_LE(report.ap[k], report.ap[k - 1]);
      }
    }
    double s = 0.0;
    for (double a : report.ap) s += a;
    EXPECT_NEAR(report.map_avg, s / 10.0, 1e-12);
  }
}

TEST(Metrics, PerfectPredictionsScoreOne) {
  const std::vector<AnnotationTuple> gt = {{0, 1.0, 4.5}, {2, 6.0, 9.0}, {0, 12.25, 20.0}};
  std::vector<Segment> pred;
  for (const auto& a : gt) pred.push_back({a.label, a.start_s, a.end_s, 0.9});
  for (auto m : {eval::Matching::hit_ratio, eval::Matching::ranked_detection_ap}) {
    eval::MetricConfig cfg;
    cfg.matching = m;
    const auto r = eval::map_avg({{"a", gt, pred}}, cfg);
    EXPECT_DOUBLE_EQ(r.map_avg, 1.0);
    EXPECT_EQ(r.n_actions, 3u);
  }
}

TEST(Metrics, UnmatchedAndWrongLabelScoreZero) {
  const std::vector<AnnotationTuple> gt = {{0, 0.0, 10.0}, {1, 20.0, 30.0}};
  const std::vector<Segment> pred = {{1, 0.0, 10.0, 0.9}};
  const auto t = eval::match_and_score(gt, pred);
  EXPECT_EQ(t, (std::vector<double>{0.0, 0.0}));
  EXPECT_EQ(eval::ap_at_t({}, 0.5), 0.0);
}

TEST(Metrics, OnePredictionServesOneAction) {
  const std::vector<AnnotationTuple> gt = {{0, 0.0, 10.0}, {0, 10.0, 20.0}};
  const std::vector<Segment> pred = {{0, 0.0, 20.0, 0.9}};
  const auto t = eval::match_and_score(gt, pred);
  EXPECT_DOUBLE_EQ(t[0], 0.5);
  EXPECT_EQ(t[1], 0.0);
}

TEST(Metrics, RankedApHandComputed) {
  // Two actions; ranked predictions: TP, FP, TP -> precision 1, 1/2, 2/3 at
  // recall 1/2, 1/2, 1. Interpolated AP = 0.5 * 1 + 0.5 * 2/3.
  const std::vector<std::vector<AnnotationTuple>> gt = {{{0, 0.0, 10.0}, {0, 20.0, 30.0}}};
  std::vector<eval::RankedItem> preds = {
      {0, {0, 0.0, 10.0, 0.9}}, {0, {0, 40.0, 50.0, 0.8}}, {0, {0, 20.0, 30.0, 0.7}}, {0, {1, 20.0, 30.0, 0.95}}};
  EXPECT_NEAR(eval::ranked_ap(gt, preds, 0, 0.5), 0.5 + 0.5 * 2.0 / 3.0, 1e-12);
  EXPECT_EQ(eval::ranked_ap(gt, preds, 3, 0.5), 0.0);
}

TEST(Metrics, RejectsBadInput) {
  eval::MetricConfig cfg;
  cfg.thresholds = {0.5, 0.5};
  EXPECT_THROW(eval::map_avg({}, cfg), ConfigError);
  EXPECT_THROW(eval::map_avg({{"x", {{31, 0.0, 1.0}}, {}}}), SchemaError);
}

TEST(Metrics, ReportTableAndJson) {
  const auto r = eval::map_avg({{"s", {{0, 0.0, 10.0}}, {{0, 0.0, 10.0, 1.0}}}});
  const auto table = eval::format_table(r);
  EXPECT_NE(table.find("Walk"), std::string::npos);
  EXPECT_NE(table.find("Overall"), std::string::npos);
  const auto j = eval::to_json(r);
  EXPECT_DOUBLE_EQ(j.at("map_avg").get<double>(), 1.0);
  EXPECT_DOUBLE_EQ(r.ap_at(0.95), 1.0);
  EXPECT_THROW(r.ap_at(0.42), ConfigError);
}
