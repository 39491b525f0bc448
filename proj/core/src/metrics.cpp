#include "bpa/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "bpa/error.hpp"
#include "bpa/nn/ops.hpp"

namespace bpa::eval {
namespace {

void check_inputs(std::span<const double> scores, std::span<const int> labels, bool need_both) {
  if (scores.size() != labels.size()) throw DataError("scores and labels differ in length");
  int64_t pos = 0;
  for (int y : labels) {
    if (y != 0 && y != 1) throw DataError("labels must be 0 or 1");
    pos += y;
  }
  const auto neg = static_cast<int64_t>(labels.size()) - pos;
  if (need_both && (pos == 0 || neg == 0)) throw DataError("both classes must be present");
}

double percent(int64_t num, int64_t den) { return den == 0 ? 0.0 : 100.0 * static_cast<double>(num) / den; }

}  // namespace

double auc(std::span<const double> scores, std::span<const int> labels) {
  check_inputs(scores, labels, true);
  // Midranks over ascending scores; the positive rank sum gives the statistic.
  std::vector<size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  int64_t pos = 0;
  for (size_t i = 0; i < order.size();) {
    size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (size_t k = i; k < j; ++k) {
      if (labels[order[k]] == 1) {
        rank_sum += midrank;
        ++pos;
      }
    }
    i = j;
  }
  const auto neg = static_cast<int64_t>(scores.size()) - pos;
  const double u = rank_sum - static_cast<double>(pos) * (pos + 1) / 2.0;
  return u / (static_cast<double>(pos) * static_cast<double>(neg));
}

std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const int> labels) {
  check_inputs(scores, labels, true);
  std::vector<size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return scores[a] > scores[b]; });
  const auto pos = static_cast<int64_t>(std::count(labels.begin(), labels.end(), 1));
  const auto neg = static_cast<int64_t>(labels.size()) - pos;
  std::vector<RocPoint> curve{{0.0, 0.0, std::numeric_limits<double>::infinity()}};
  int64_t tp = 0, fp = 0;
  for (size_t i = 0; i < order.size();) {
    const double t = scores[order[i]];
    while (i < order.size() && scores[order[i]] == t) {
      (labels[order[i]] == 1 ? tp : fp) += 1;
      ++i;
    }
    curve.push_back({static_cast<double>(fp) / neg, static_cast<double>(tp) / pos, t});
  }
  return curve;
}

double trapezoid_area(std::span<const RocPoint> curve) {
  double area = 0.0;
  for (size_t i = 1; i < curve.size(); ++i) {
    area += (curve[i].fpr - curve[i - 1].fpr) * (curve[i].tpr + curve[i - 1].tpr) / 2.0;
  }
  return area;
}

ConfusionMetrics confusion_metrics(std::span<const double> scores, std::span<const int> labels, double threshold) {
  check_inputs(scores, labels, true);
  ConfusionMetrics m;
  for (size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] >= threshold;
    if (labels[i] == 1) {
      (predicted ? m.tp : m.fn) += 1;
    } else {
      (predicted ? m.fp : m.tn) += 1;
    }
  }
  m.accuracy = percent(m.tp + m.tn, static_cast<int64_t>(scores.size()));
  m.recall = percent(m.tp, m.tp + m.fn);
  m.specificity = percent(m.tn, m.tn + m.fp);
  m.degenerate = m.tp + m.fp == 0;
  m.precision = percent(m.tp, m.tp + m.fp);
  m.f1 = m.precision + m.recall > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  return m;
}

std::vector<double> score_histogram(std::span<const double> scores, int64_t bins) {
  if (bins <= 0) throw ConfigError("bins", "must be positive");
  std::vector<double> h(static_cast<size_t>(bins), 0.0);
  if (scores.empty()) return h;
  for (double s : scores) {
    if (!(s >= 0.0 && s <= 1.0)) throw DataError("score outside [0, 1]");
    const auto b = std::min<int64_t>(bins - 1, static_cast<int64_t>(s * static_cast<double>(bins)));
    h[static_cast<size_t>(b)] += 1.0;
  }
  for (auto& v : h) v /= static_cast<double>(scores.size());
  return h;
}

double l1_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("l1_distance: length mismatch");
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s;
}

ClassWeights class_weights(int64_t n_negative, int64_t n_positive) {
  if (n_negative < 1 || n_positive < 1) throw DataError("class_weights: both classes need at least one sample");
  const double total = static_cast<double>(n_negative + n_positive);
  return {total / (2.0 * static_cast<double>(n_negative)), total / (2.0 * static_cast<double>(n_positive))};
}

nn::Var weighted_loss(const nn::Var& scores, std::span<const int> labels, ClassWeights weights) {
  const int64_t n = scores.numel();
  if (n == 0) throw DataError("weighted_loss: empty batch");
  if (static_cast<size_t>(n) != labels.size()) throw DataError("weighted_loss: scores and labels differ in length");
  if (!(weights.negative > 0 && weights.positive > 0)) throw ConfigError("class_weights", "must be positive");
  nn::Tensor pos_coef({n}), neg_coef({n});
  for (int64_t i = 0; i < n; ++i) {
    const int y = labels[static_cast<size_t>(i)];
    if (y != 0 && y != 1) throw DataError("labels must be 0 or 1");
    pos_coef[i] = y == 1 ? -weights.positive / static_cast<double>(n) : 0.0;
    neg_coef[i] = y == 0 ? -weights.negative / static_cast<double>(n) : 0.0;
  }
  nn::Var s = nn::clamp(nn::reshape(scores, {n}), kProbabilityClamp, 1.0 - kProbabilityClamp);
  nn::Var log_p = nn::log(s);
  nn::Var log_q = nn::log(nn::add_scalar(nn::scale(s, -1.0), 1.0));
  return nn::add(nn::sum(nn::mul_const(log_p, std::move(pos_coef))), nn::sum(nn::mul_const(log_q, std::move(neg_coef))));
}

double weighted_loss(std::span<const double> scores, std::span<const int> labels, ClassWeights weights) {
  nn::NoGradGuard guard;
  nn::Tensor t({static_cast<int64_t>(scores.size())}, std::vector<double>(scores.begin(), scores.end()));
  return weighted_loss(nn::Var::constant(std::move(t)), labels, weights).item();
}

}  // namespace bpa::eval
