#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "bpa/error.hpp"
#include "bpa/metrics.hpp"
#include "bpa/nn/ops.hpp"
#include "bpa/rng.hpp"
#include "gradcheck.hpp"

using namespace bpa;
using namespace bpa::eval;

namespace {

double pairwise_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double wins = 0;
  int64_t pairs = 0;
  for (size_t i = 0; i < s.size(); ++i) {
    for (size_t j = 0; j < s.size(); ++j) {
      if (y[i] != 1 || y[j] != 0) continue;
      ++pairs;
      wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  }
  return wins / static_cast<double>(pairs);
}

double bce(double s, int y) { return y == 1 ? -std::log(s) : -std::log(1 - s); }

}  // namespace

TEST(Auc, Examples) {
  EXPECT_DOUBLE_EQ(auc(std::vector<double>{0.1, 0.4, 0.35, 0.8}, std::vector<int>{0, 0, 1, 1}), 0.75);
  EXPECT_DOUBLE_EQ(auc(std::vector<double>{0.1, 0.2, 0.8, 0.9}, std::vector<int>{0, 0, 1, 1}), 1.0);
  EXPECT_DOUBLE_EQ(auc(std::vector<double>{0.3, 0.3, 0.3, 0.3}, std::vector<int>{0, 1, 0, 1}), 0.5);
}

TEST(Auc, RequiresBothClasses) {
  EXPECT_THROW(auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}), DataError);
  EXPECT_THROW(auc(std::vector<double>{0.1}, std::vector<int>{1, 0}), DataError);
  EXPECT_THROW(auc(std::vector<double>{0.1, 0.2}, std::vector<int>{0, 2}), DataError);
}

TEST(Auc, MatchesPairwiseOracleWithTies) {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const auto n = static_cast<size_t>(2 + rng.below(49));
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng.below(8)) / 8.0;
      y[i] = static_cast<int>(rng.below(2));
    }
    y[0] = 0;
    y[1] = 1;
    const double a = auc(s, y);
    EXPECT_NEAR(a, pairwise_auc(s, y), 1e-9);
    EXPECT_NEAR(trapezoid_area(roc_curve(s, y)), a, 1e-12);
  }
}

TEST(Roc, ShapeAndSentinel) {
  const std::vector<double> s = {0.9, 0.8, 0.8, 0.3, 0.1};
  const std::vector<int> y = {1, 0, 1, 0, 1};
  const auto curve = roc_curve(s, y);
  ASSERT_EQ(curve.size(), 5u);  // sentinel + 4 distinct scores
  EXPECT_EQ(curve.front().fpr, 0.0);
  EXPECT_EQ(curve.front().tpr, 0.0);
  EXPECT_TRUE(std::isinf(curve.front().threshold));
  EXPECT_EQ(curve.back().fpr, 1.0);
  EXPECT_EQ(curve.back().tpr, 1.0);
  for (size_t i = 1; i < curve.size(); ++i) {
    EXPECT_GE(curve[i].fpr, curve[i - 1].fpr);
    EXPECT_GE(curve[i].tpr, curve[i - 1].tpr);
    EXPECT_LT(curve[i].threshold, curve[i - 1].threshold);
  }
}

TEST(Roc, PerfectSeparationPassesThroughTopLeft) {
  const auto curve = roc_curve(std::vector<double>{0.1, 0.2, 0.8, 0.9}, std::vector<int>{0, 0, 1, 1});
  bool corner = false;
  for (const auto& p : curve) corner = corner || (p.fpr == 0.0 && p.tpr == 1.0);
  EXPECT_TRUE(corner);
}

TEST(Roc, AllTiesGiveTwoPoints) {
  const std::vector<double> s = {0.5, 0.5, 0.5};
  const std::vector<int> y = {0, 1, 1};
  const auto curve = roc_curve(s, y);
  EXPECT_EQ(curve.size(), 2u);
  EXPECT_DOUBLE_EQ(trapezoid_area(curve), 0.5);
}

TEST(Confusion, Examples) {
  const std::vector<int> y = {1, 1, 0, 0};
  const auto perfect = confusion_metrics(std::vector<double>{0.9, 0.8, 0.1, 0.2}, y);
  EXPECT_DOUBLE_EQ(perfect.accuracy, 100.0);
  EXPECT_DOUBLE_EQ(perfect.recall, 100.0);
  EXPECT_DOUBLE_EQ(perfect.precision, 100.0);
  EXPECT_DOUBLE_EQ(perfect.f1, 100.0);
  EXPECT_FALSE(perfect.degenerate);

  const auto all_positive = confusion_metrics(std::vector<double>{0.9, 0.9, 0.9, 0.9}, y);
  EXPECT_DOUBLE_EQ(all_positive.accuracy, 50.0);
  EXPECT_DOUBLE_EQ(all_positive.recall, 100.0);
  EXPECT_DOUBLE_EQ(all_positive.precision, 50.0);
  EXPECT_NEAR(all_positive.f1, 66.7, 0.05);
  EXPECT_DOUBLE_EQ(all_positive.specificity, 0.0);

  const auto none = confusion_metrics(std::vector<double>{0.9, 0.8, 0.1, 0.2}, y, 1.0 + 1e-9);
  EXPECT_TRUE(none.degenerate);
  EXPECT_EQ(none.precision, 0.0);
  EXPECT_EQ(none.recall, 0.0);
}

TEST(Confusion, RaisingThresholdNeverRaisesRecall) {
  Rng rng(3);
  std::vector<double> s(60);
  std::vector<int> y(60);
  for (size_t i = 0; i < s.size(); ++i) {
    s[i] = rng.uniform();
    y[i] = i % 3 == 0 ? 1 : 0;
  }
  double previous = 101.0;
  for (double t = 0.0; t <= 1.0; t += 0.05) {
    const double r = confusion_metrics(s, y, t).recall;
    EXPECT_LE(r, previous);
    previous = r;
  }
}

TEST(Histogram, MassesAndEdges) {
  const auto h = score_histogram(std::vector<double>{0.999}, 10);
  EXPECT_DOUBLE_EQ(h.back(), 1.0);
  const auto edge = score_histogram(std::vector<double>{0.0, 1.0}, 50);
  EXPECT_DOUBLE_EQ(edge.front(), 0.5);
  EXPECT_DOUBLE_EQ(edge.back(), 0.5);
  Rng rng(5);
  std::vector<double> s(333);
  for (auto& v : s) v = rng.uniform();
  double total = 0;
  for (double v : score_histogram(s, 50)) total += v;
  EXPECT_NEAR(total, 1.0, 1e-9);
  EXPECT_THROW(score_histogram(std::vector<double>{1.5}, 10), DataError);
  EXPECT_DOUBLE_EQ(l1_distance(score_histogram(s, 50), score_histogram(s, 50)), 0.0);
}

TEST(ClassWeights, Examples) {
  const auto balanced = class_weights(100, 100);
  EXPECT_DOUBLE_EQ(balanced.negative, 1.0);
  EXPECT_DOUBLE_EQ(balanced.positive, 1.0);
  const auto ones = class_weights(1, 1);
  EXPECT_DOUBLE_EQ(ones.negative, 1.0);
  const auto full = class_weights(10000, 230);
  EXPECT_NEAR(full.negative, 0.5115, 5e-5);
  EXPECT_NEAR(full.positive, 22.2391, 5e-5);
  EXPECT_DOUBLE_EQ(full.negative * 10000, full.positive * 230);
  EXPECT_THROW(class_weights(0, 5), DataError);
}

TEST(WeightedLoss, Examples) {
  const std::vector<double> s = {0.8, 0.2};
  const std::vector<int> y = {1, 0};
  EXPECT_NEAR(weighted_loss(s, y, {2.0, 1.0}), 1.5 * -std::log(0.8), 1e-12);
  EXPECT_NEAR(weighted_loss(s, y, {2.0, 1.0}), 0.3347, 5e-5);

  Rng rng(9);
  std::vector<double> scores(20);
  std::vector<int> labels(20);
  double plain = 0;
  for (size_t i = 0; i < scores.size(); ++i) {
    scores[i] = rng.uniform(0.01, 0.99);
    labels[i] = static_cast<int>(rng.below(2));
    plain += bce(scores[i], labels[i]) / 20.0;
  }
  EXPECT_NEAR(weighted_loss(scores, labels, {1.0, 1.0}), plain, 1e-12);

  const double bound = 3.0 * bce(1.0 - kProbabilityClamp, 1);
  EXPECT_LE(weighted_loss(std::vector<double>{1.0, 0.0}, std::vector<int>{1, 0}, {3.0, 2.0}), bound + 1e-15);
  EXPECT_TRUE(std::isfinite(weighted_loss(std::vector<double>{0.0, 1.0}, std::vector<int>{1, 0}, {1.0, 1.0})));
}

TEST(WeightedLoss, RejectsBadInput) {
  EXPECT_THROW(weighted_loss(std::vector<double>{}, std::vector<int>{}, {1, 1}), DataError);
  EXPECT_THROW(weighted_loss(std::vector<double>{0.5}, std::vector<int>{1}, {0.0, 1.0}), ConfigError);
  EXPECT_THROW(weighted_loss(std::vector<double>{0.5}, std::vector<int>{1, 0}, {1.0, 1.0}), DataError);
}

TEST(WeightedLoss, GradientOfToyHeadMatchesFiniteDifferences) {
  Rng rng(21);
  const nn::Tensor x = bpa::testing::random_tensor({6, 4}, rng);
  const std::vector<int> y = {1, 0, 0, 1, 0, 0};
  const auto f = [&](const std::vector<nn::Var>& p) {
    const nn::Var h = nn::relu(nn::matmul(nn::Var::constant(x), p[0]));
    const nn::Var s = nn::sigmoid(nn::reshape(nn::matmul(h, p[1]), {6}));
    return weighted_loss(s, y, class_weights(4, 2));
  };
  const double err = bpa::testing::gradcheck(
      f, {bpa::testing::random_tensor({4, 5}, rng, 0.5), bpa::testing::random_tensor({5, 1}, rng, 0.5)});
  EXPECT_LT(err, 1e-5);
}
