#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "oracles.hpp"
#include "slsmil/postproc.hpp"

using namespace slsmil;

namespace {

std::vector<ScoredSquare> random_candidates(std::mt19937_64& rng, std::size_t n, double lo = 0.0) {
  std::uniform_real_distribution<double> pos(0, 30), side(5, 15), ang(-kPi, kPi), score(lo, 1);
  std::vector<ScoredSquare> c;
  for (std::size_t i = 0; i < n; ++i) c.push_back({OrientedSquare({pos(rng), pos(rng)}, side(rng), ang(rng)), score(rng)});
  // Occasional exact ties exercise the input-order rule.
  if (n >= 2 && rng() % 4 == 0) c[1].score = c[0].score;
  return c;
}

std::vector<std::size_t> oracle_nms(const std::vector<ScoredSquare>& c, const NmsParams& p) {
  std::vector<double> scores;
  for (const auto& s : c) scores.push_back(s.score);
  return oracle::greedy_nms(
      scores, [&](std::size_t a, std::size_t b) { return iou(c[a].square, c[b].square); }, p.iou_threshold,
      p.score_threshold);
}

}  // namespace

TEST(Nms, HandTracedExample) {
  const OrientedSquare a({0, 0}, 10, 0);
  const OrientedSquare b({10.0 / 3.0, 0}, 10, 0);
  const OrientedSquare c({0, -(10 - 20.0 / 11.0)}, 10, 0);
  ASSERT_NEAR(iou(a, b), 0.5, 1e-9);
  ASSERT_NEAR(iou(a, c), 0.1, 1e-9);
  ASSERT_LT(iou(b, c), 0.4);
  const auto kept = nms({{a, 0.9}, {b, 0.8}, {c, 0.7}});
  ASSERT_EQ(kept.size(), 2u);
  EXPECT_EQ(kept[0].score, 0.9);
  EXPECT_EQ(kept[1].score, 0.7);
}

TEST(Nms, SingleAndEmpty) {
  const OrientedSquare a({5, 5}, 4, 0.3);
  const auto kept = nms({{a, 0.6}}, NmsParams{}, "img");
  ASSERT_EQ(kept.size(), 1u);
  EXPECT_EQ(kept[0].image_id, "img");
  EXPECT_EQ(kept[0].direction, a.theta);
  EXPECT_TRUE(nms({{a, 0.4}}).empty());
  EXPECT_TRUE(nms({}).empty());
}

TEST(Nms, MatchesBruteForceOracle) {
  std::mt19937_64 rng(101);
  for (int t = 0; t < 1000; ++t) {
    const auto c = random_candidates(rng, 1 + rng() % 10);
    EXPECT_EQ(nms_indices(c), oracle_nms(c, NmsParams{}));
  }
}

TEST(Nms, OutputIsSeparatedSortedSubset) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 300; ++t) {
    const auto c = random_candidates(rng, 1 + rng() % 25);
    const auto kept = nms(c);
    for (std::size_t i = 0; i < kept.size(); ++i) {
      EXPECT_GE(kept[i].score, 0.5);
      if (i > 0) {
        EXPECT_LE(kept[i].score, kept[i - 1].score);
      }
      for (std::size_t j = i + 1; j < kept.size(); ++j) EXPECT_LE(iou(kept[i].square, kept[j].square), 0.4);
    }
  }
}

TEST(Nms, MonotoneScoreTransformKeepsSet) {
  std::mt19937_64 rng(6);
  for (int t = 0; t < 300; ++t) {
    auto c = random_candidates(rng, 1 + rng() % 12, 0.5);
    const auto before = nms_indices(c);
    for (auto& s : c) s.score = 0.5 + 0.5 * std::pow((s.score - 0.5) / 0.5, 3);
    for (auto& s : c) s.score = std::max(s.score, 0.5);
    EXPECT_EQ(nms_indices(c), before);
  }
}

TEST(Nms, Idempotent) {
  std::mt19937_64 rng(8);
  for (int t = 0; t < 300; ++t) {
    const auto c = random_candidates(rng, 1 + rng() % 15);
    const auto once = nms(c);
    std::vector<ScoredSquare> again;
    for (const auto& d : once) again.push_back({d.square, d.score});
    const auto twice = nms(again);
    ASSERT_EQ(once.size(), twice.size());
    for (std::size_t i = 0; i < once.size(); ++i) EXPECT_EQ(once[i].score, twice[i].score);
  }
}

TEST(Nms, InvalidThresholds) {
  NmsParams p;
  p.iou_threshold = 1.0;
  EXPECT_THROW(nms({}, p), Error);
  p = NmsParams{};
  p.score_threshold = 0.0;
  EXPECT_THROW(nms({}, p), Error);
}

TEST(Scoring, ConstantModelAndBatchTransparency) {
  ScorerModel m{NetworkSpec{}};
  m.init(4, true);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd(0, 1);
  std::vector<std::vector<double>> inputs(5, std::vector<double>(m.input().size()));
  for (auto& x : inputs)
    for (double& v : x) v = nd(rng);
  for (double p : score_inputs(m, inputs)) EXPECT_EQ(p, 0.5);
  m.init(4);
  const auto scores = score_inputs(m, inputs);
  for (std::size_t i = 0; i < inputs.size(); ++i) EXPECT_EQ(scores[i], m.forward(inputs[i]));
  EXPECT_TRUE(score_inputs(m, {}).empty());
  EXPECT_THROW(score_inputs(m, {std::vector<double>(3)}), Error);
}
