#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "subtune/metrics.hpp"
#include "subtune/rng.hpp"

using namespace subtune;

namespace {

// Independent O(n^2) oracle: count positive-over-negative pairs, half credit
// for exact ties.
double brute_force_auc(const std::vector<int>& labels, const std::vector<double>& scores) {
  double wins = 0.0;
  std::size_t n_pos = 0, n_neg = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == 0) continue;
    ++n_pos;
    for (std::size_t j = 0; j < labels.size(); ++j) {
      if (labels[j] != 0) continue;
      if (scores[i] > scores[j]) wins += 1.0;
      else if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  n_neg = labels.size() - n_pos;
  return wins / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double brute_force_ovr(const std::vector<int>& labels, const std::vector<double>& matrix,
                       std::size_t n, std::size_t k) {
  double total = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    std::vector<int> binary(n);
    std::vector<double> column(n);
    std::size_t support = 0;
    for (std::size_t i = 0; i < n; ++i) {
      binary[i] = labels[i] == static_cast<int>(c) ? 1 : 0;
      support += static_cast<std::size_t>(binary[i]);
      column[i] = matrix[i * k + c];
    }
    total += (static_cast<double>(support) / static_cast<double>(n)) *
             brute_force_auc(binary, column);
  }
  return total;
}

}  // namespace

TEST_CASE("weighted_auc spec examples") {
  CHECK(weighted_auc(std::vector<int>{0, 0, 1, 1}, std::vector<double>{0.1, 0.2, 0.8, 0.9}).value ==
        doctest::Approx(1.0));
  CHECK(weighted_auc(std::vector<int>{0, 1}, std::vector<double>{0.5, 0.5}).value ==
        doctest::Approx(0.5));
  CHECK(weighted_auc(std::vector<int>{1, 0, 1, 0}, std::vector<double>{0.1, 0.9, 0.2, 0.8}).value ==
        doctest::Approx(0.0));
}

TEST_CASE("weighted_auc errors") {
  CHECK_THROWS_AS(weighted_auc(std::vector<int>{1, 1}, std::vector<double>{0.1, 0.2}),
                  std::invalid_argument);
  CHECK_THROWS_AS(weighted_auc(std::vector<int>{1}, std::vector<double>{0.1}),
                  std::invalid_argument);
  CHECK_THROWS_AS(weighted_auc(std::vector<int>{1, 0}, std::vector<double>{0.1, 0.2, 0.3}),
                  std::invalid_argument);
  CHECK_THROWS_AS(weighted_auc(std::vector<int>{1, 0}, std::vector<double>{0.1, NAN}),
                  std::invalid_argument);
}

TEST_CASE("weighted_auc matches the pairwise oracle on random instances") {
  Rng rng(123);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 10 + rng.below(140);
    std::vector<int> labels(n);
    std::vector<double> scores(n);
    bool has_pos = false, has_neg = false;
    for (std::size_t i = 0; i < n; ++i) {
      labels[i] = rng.uniform01() < 0.4 ? 1 : 0;
      (labels[i] ? has_pos : has_neg) = true;
      // Coarse grid forces plenty of ties.
      scores[i] = std::floor(rng.uniform01() * 12.0) / 12.0;
    }
    if (!has_pos || !has_neg) continue;
    const double fast = weighted_auc(labels, scores).value;
    const double slow = brute_force_auc(labels, scores);
    CHECK(fast == doctest::Approx(slow).epsilon(1e-12));
  }
}

TEST_CASE("auc is invariant under strictly increasing transforms") {
  Rng rng(77);
  std::vector<int> labels;
  std::vector<double> scores;
  for (int i = 0; i < 200; ++i) {
    labels.push_back(rng.uniform01() < 0.5 ? 1 : 0);
    scores.push_back(rng.uniform(-3.0, 3.0));
  }
  labels[0] = 1;
  labels[1] = 0;
  std::vector<double> transformed(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i)
    transformed[i] = std::exp(2.0 * scores[i]) + 5.0;
  CHECK(weighted_auc(labels, scores).value ==
        doctest::Approx(weighted_auc(labels, transformed).value).epsilon(1e-12));
}

TEST_CASE("auc of negated scores complements, absent ties") {
  Rng rng(88);
  std::vector<int> labels;
  std::vector<double> scores;
  for (int i = 0; i < 300; ++i) {
    labels.push_back(rng.uniform01() < 0.5 ? 1 : 0);
    scores.push_back(rng.uniform01());  // 53-bit draws, ties essentially impossible
  }
  labels[0] = 1;
  labels[1] = 0;
  std::vector<double> negated(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) negated[i] = -scores[i];
  CHECK(weighted_auc(labels, scores).value + weighted_auc(labels, negated).value ==
        doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("ovr_weighted_auc spec examples") {
  // One-hot of the true labels separates perfectly.
  const std::vector<int> labels{0, 1, 2, 1, 0, 2};
  std::vector<double> one_hot(labels.size() * 3, 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i)
    one_hot[i * 3 + static_cast<std::size_t>(labels[i])] = 1.0;
  CHECK(ovr_weighted_auc(labels, one_hot, labels.size(), 3).value == doctest::Approx(1.0));

  std::vector<double> constant(labels.size() * 3, 0.25);
  CHECK(ovr_weighted_auc(labels, constant, labels.size(), 3).value == doctest::Approx(0.5));
}

TEST_CASE("ovr_weighted_auc errors") {
  const std::vector<int> labels{0, 1, 0, 1};
  std::vector<double> matrix(labels.size() * 2, 0.5);
  CHECK_THROWS_AS(ovr_weighted_auc(labels, matrix, labels.size(), 2), std::invalid_argument);

  const std::vector<int> missing_class{0, 1, 0, 1};
  std::vector<double> m3(missing_class.size() * 3, 0.5);
  CHECK_THROWS_AS(ovr_weighted_auc(missing_class, m3, missing_class.size(), 3),
                  std::invalid_argument);

  const std::vector<int> ok{0, 1, 2};
  CHECK_THROWS_AS(ovr_weighted_auc(ok, m3, 4, 3), std::invalid_argument);
}

TEST_CASE("ovr_weighted_auc matches the per-class oracle on random instances") {
  Rng rng(321);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t k = 3 + rng.below(3);
    const std::size_t n = 30 + rng.below(170);
    std::vector<int> labels(n);
    std::vector<double> matrix(n * k);
    for (std::size_t c = 0; c < k; ++c) labels[c] = static_cast<int>(c);  // every class present
    for (std::size_t i = k; i < n; ++i) labels[i] = static_cast<int>(rng.below(k));
    for (auto& v : matrix) v = std::floor(rng.uniform01() * 8.0) / 8.0;

    const double fast = ovr_weighted_auc(labels, matrix, n, k).value;
    const double slow = brute_force_ovr(labels, matrix, n, k);
    CHECK(fast == doctest::Approx(slow).epsilon(1e-12));
  }
}

TEST_CASE("r2 definitional examples") {
  const std::vector<double> y{1.0, 2.0, 3.0};
  CHECK(r2(y, y).value == doctest::Approx(1.0));

  const std::vector<double> mean_pred{2.0, 2.0, 2.0};
  CHECK(r2(y, mean_pred).value == doctest::Approx(0.0));

  const std::vector<double> off{1.0, 2.0, 4.0};
  CHECK(r2(y, off).value == doctest::Approx(0.5));
}

TEST_CASE("r2 errors and affine invariance") {
  CHECK_THROWS_AS(r2(std::vector<double>{1.0, 1.0}, std::vector<double>{1.0, 2.0}),
                  std::invalid_argument);
  CHECK_THROWS_AS(r2(std::vector<double>{1.0}, std::vector<double>{1.0}), std::invalid_argument);

  Rng rng(9);
  std::vector<double> y_true, y_pred;
  for (int i = 0; i < 100; ++i) {
    y_true.push_back(rng.uniform(-2.0, 2.0));
    y_pred.push_back(y_true.back() + rng.uniform(-0.5, 0.5));
  }
  const double base = r2(y_true, y_pred).value;
  std::vector<double> ty(y_true.size()), tp(y_pred.size());
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    ty[i] = 3.0 * y_true[i] - 7.0;
    tp[i] = 3.0 * y_pred[i] - 7.0;
  }
  CHECK(r2(ty, tp).value == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("metric/task compatibility") {
  CHECK(default_metric_for(Task::kRegression) == MetricKind::kR2);
  CHECK(default_metric_for(Task::kBinary) == MetricKind::kWeightedAuc);
  CHECK(default_metric_for(Task::kMulticlass) == MetricKind::kOvrWeightedAuc);
  CHECK(metric_compatible(MetricKind::kR2, Task::kRegression));
  CHECK_FALSE(metric_compatible(MetricKind::kR2, Task::kBinary));
}
