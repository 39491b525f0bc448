#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "bpa/nn/autograd.hpp"

namespace bpa::eval {

// Area under the ROC curve as the rank statistic
// P(score_pos > score_neg) + P(tie) / 2. Throws DataError unless both classes
// are present. Labels are 0 or 1.
double auc(std::span<const double> scores, std::span<const int> labels);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;  // predictions are positive when score >= threshold
};

// One point per distinct score (descending) after a +inf sentinel at (0, 0).
std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const int> labels);
// Trapezoid area under the returned points.
double trapezoid_area(std::span<const RocPoint> curve);

struct ConfusionMetrics {
  int64_t tp = 0, fp = 0, tn = 0, fn = 0;
  // Percentages in [0, 100].
  double accuracy = 0.0;
  double recall = 0.0;
  double precision = 0.0;
  double specificity = 0.0;
  double f1 = 0.0;
  // No predicted positives: precision and F1 are reported as 0.
  bool degenerate = false;
};

ConfusionMetrics confusion_metrics(std::span<const double> scores, std::span<const int> labels,
                                   double threshold = 0.5);

// Normalized histogram over [0, 1] with `bins` equal bins; the last bin
// includes 1. Returns all zeros for empty input.
std::vector<double> score_histogram(std::span<const double> scores, int64_t bins = 50);
double l1_distance(std::span<const double> a, std::span<const double> b);

struct ClassWeights {
  double negative = 1.0;
  double positive = 1.0;
};

// w_c = (n_neg + n_pos) / (2 n_c). Throws DataError when either count is zero.
ClassWeights class_weights(int64_t n_negative, int64_t n_positive);

inline constexpr double kProbabilityClamp = 1e-7;

// Mean over the batch of w_label * BCE(score, label), scores clamped to
// [1e-7, 1 - 1e-7]. `scores` are sigmoid outputs of shape [N] or [N, 1].
nn::Var weighted_loss(const nn::Var& scores, std::span<const int> labels, ClassWeights weights);
double weighted_loss(std::span<const double> scores, std::span<const int> labels, ClassWeights weights);

}  // namespace bpa::eval
