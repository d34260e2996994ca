#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "slsmil/evalkit.hpp"

using namespace slsmil;

namespace {

Detection det(double cx, double cy, double side, double score, double theta = 0) {
  Detection d;
  d.square = OrientedSquare({cx, cy}, side, theta);
  d.score = score;
  d.direction = d.square.theta;
  return d;
}

}  // namespace

TEST(Match, DuplicateDetectionsCountAsFalsePositives) {
  const std::vector<Aabb> gts{Aabb(0, 0, 10, 10)};
  const auto r = match_detections({det(5, 5, 10, 0.9), det(5.5, 5, 10, 0.8)}, gts);
  EXPECT_EQ(r.tp, 1u);
  EXPECT_EQ(r.fp, 1u);
  EXPECT_EQ(r.fn, 0u);
  EXPECT_TRUE(r.det_matched[0]);
  EXPECT_FALSE(r.det_matched[1]);
}

TEST(Match, NoDetectionsAndPerfectDetections) {
  const std::vector<Aabb> gts{Aabb(0, 0, 10, 10), Aabb(20, 0, 30, 10), Aabb(40, 0, 50, 10)};
  const auto none = match_detections({}, gts);
  EXPECT_EQ(none.tp, 0u);
  EXPECT_EQ(none.fp, 0u);
  EXPECT_EQ(none.fn, 3u);
  const auto all = match_detections({det(5, 5, 10, 0.6), det(25, 5, 10, 0.7), det(45, 5, 10, 0.8)}, gts);
  EXPECT_EQ(all.tp, 3u);
  EXPECT_EQ(all.fp, 0u);
  EXPECT_EQ(all.fn, 0u);
}

TEST(Match, HighestScoreClaimsFirst) {
  const std::vector<Aabb> gts{Aabb(0, 0, 10, 10)};
  const auto r = match_detections({det(6, 5, 10, 0.6), det(5, 5, 10, 0.95)}, gts);
  EXPECT_FALSE(r.det_matched[0]);
  EXPECT_TRUE(r.det_matched[1]);
}

TEST(Match, AccountingIdentityOnRandomScenes) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 100), s(5, 20), sc(0, 1);
  for (int t = 0; t < 200; ++t) {
    std::vector<Aabb> gts;
    for (int i = 0; i < 5; ++i) {
      const double x = u(rng), y = u(rng);
      gts.emplace_back(x, y, x + s(rng), y + s(rng));
    }
    std::vector<Detection> dets;
    for (int i = 0; i < 12; ++i) dets.push_back(det(u(rng), u(rng), s(rng), sc(rng)));
    const auto r = match_detections(dets, gts);
    EXPECT_EQ(r.tp + r.fn, gts.size());
    EXPECT_EQ(r.tp + r.fp, dets.size());
  }
}

TEST(Prf, PublishedSummaryNumbers) {
  const Prf m = prf(744, 13, 8);
  EXPECT_NEAR(*m.recall, 0.983, 1e-3);
  EXPECT_NEAR(*m.precision, 0.989, 1e-3);
  EXPECT_NEAR(*m.f1, 0.986, 1e-3);
}

TEST(Prf, UndefinedAndPerfect) {
  const Prf z = prf(0, 5, 0);
  EXPECT_EQ(*z.recall, 0.0);
  EXPECT_FALSE(z.precision.has_value());
  EXPECT_FALSE(z.f1.has_value());
  const Prf p = prf(7, 0, 0);
  EXPECT_EQ(*p.recall, 1.0);
  EXPECT_EQ(*p.precision, 1.0);
  EXPECT_EQ(*p.f1, 1.0);
}

TEST(Ap, WorkedExamples) {
  EXPECT_NEAR(pr_curve({0.9, 0.8, 0.7, 0.6}, {true, false, true, false}, 2).ap, (1.0 + 2.0 / 3.0) / 2, 1e-12);
  EXPECT_NEAR(pr_curve({0.9, 0.8, 0.7, 0.6}, {true, false, true, false}, 2).ap, 0.8333, 1e-4);
  EXPECT_EQ(pr_curve({0.3, 0.9, 0.5}, {true, true, true}, 3).ap, 1.0);
  EXPECT_EQ(pr_curve({0.3, 0.9}, {false, false}, 3).ap, 0.0);
  EXPECT_EQ(pr_curve({}, {}, 0).ap, 0.0);
}

TEST(Ap, CurveRecallNonDecreasing) {
  const auto c = pr_curve({0.9, 0.1, 0.5, 0.5, 0.7}, {true, false, false, true, true}, 4);
  ASSERT_EQ(c.points.size(), 4u);
  for (std::size_t i = 1; i < c.points.size(); ++i) {
    EXPECT_GE(c.points[i].recall, c.points[i - 1].recall);
    EXPECT_LT(c.points[i].threshold, c.points[i - 1].threshold);
  }
}

TEST(Ap, MatchesFirstPrinciplesOracle) {
  std::mt19937_64 rng(44);
  std::uniform_real_distribution<double> u(0, 1);
  for (int t = 0; t < 2000; ++t) {
    const std::size_t n = rng() % 15;
    std::vector<double> scores(n);
    std::vector<bool> correct(n);
    std::vector<std::pair<double, bool>> pairs;
    std::size_t tp = 0;
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = std::round(u(rng) * 8) / 8;  // coarse grid forces ties
      correct[i] = rng() % 2;
      tp += correct[i];
      pairs.emplace_back(scores[i], correct[i]);
    }
    const std::size_t gt = std::max<std::size_t>(1, tp + rng() % 3);
    EXPECT_NEAR(pr_curve(scores, correct, gt).ap, oracle::average_precision(pairs, gt), 1e-12);
  }
}

TEST(Ap, FromDetections) {
  const std::vector<Aabb> gts{Aabb(0, 0, 10, 10), Aabb(20, 0, 30, 10)};
  const auto c = average_precision({det(5, 5, 10, 0.9), det(60, 60, 10, 0.8), det(25, 5, 10, 0.7), det(90, 0, 5, 0.6)}, gts);
  EXPECT_NEAR(c.ap, (1.0 + 2.0 / 3.0) / 2, 1e-12);
}

TEST(Direction, FoldedError) {
  EXPECT_NEAR(direction_error(0.7, 0.7), 0.0, 1e-12);
  EXPECT_NEAR(direction_error(0.7 + kPi, 0.7), 0.0, 1e-9);
  EXPECT_NEAR(direction_error(0.7 + kPi / 3, 0.7), 60.0, 1e-9);
  EXPECT_NEAR(direction_error(0.2 - kPi / 2, 0.2), 90.0, 1e-9);
  EXPECT_NEAR(direction_error(det(0, 0, 1, 1, 3.0), -3.0), direction_error(6.0, 0.0), 1e-9);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> a(-10, 10);
  for (int i = 0; i < 1000; ++i) {
    const double e = direction_error(a(rng), a(rng));
    EXPECT_GE(e, 0.0);
    EXPECT_LE(e, 90.0);
  }
}
