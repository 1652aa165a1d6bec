#include "subtune/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace subtune {

std::string to_string(MetricKind m) {
  switch (m) {
    case MetricKind::kWeightedAuc: return "weighted_auc";
    case MetricKind::kOvrWeightedAuc: return "ovr_weighted_auc";
    case MetricKind::kR2: return "r2";
  }
  return "r2";
}

MetricKind metric_from_string(std::string_view s) {
  if (s == "weighted_auc") return MetricKind::kWeightedAuc;
  if (s == "ovr_weighted_auc") return MetricKind::kOvrWeightedAuc;
  if (s == "r2") return MetricKind::kR2;
  throw std::invalid_argument("unknown metric: " + std::string(s));
}

namespace {

// Midrank AUC: sum of positive ranks minus the minimum possible, over the
// number of positive/negative pairs. Equals (P - T/2)/(n_pos*n_neg) with P
// counting >= pairs and T exact ties.
double binary_auc(std::span<const int> labels, std::span<const double> scores) {
  const std::size_t n = labels.size();
  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0u);
  std::sort(order.begin(), order.end(),
            [&](std::uint32_t a, std::uint32_t b) { return scores[a] < scores[b]; });

  double rank_sum_pos = 0.0;
  std::size_t n_pos = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // ranks are 1-based
    for (std::size_t t = i; t < j; ++t) {
      if (labels[order[t]] != 0) {
        rank_sum_pos += midrank;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0)
    throw std::invalid_argument("AUC undefined: only one class present");
  const double min_sum = static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1.0) / 2.0;
  return (rank_sum_pos - min_sum) / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

void check_finite_scores(std::span<const double> scores) {
  for (double s : scores)
    if (!std::isfinite(s)) throw std::invalid_argument("scores must be finite");
}

}  // namespace

EvaluationScore weighted_auc(std::span<const int> labels, std::span<const double> scores) {
  if (labels.size() != scores.size()) throw std::invalid_argument("label/score length mismatch");
  if (labels.size() < 2) throw std::invalid_argument("need at least 2 samples");
  check_finite_scores(scores);
  return {binary_auc(labels, scores), MetricKind::kWeightedAuc, labels.size()};
}

EvaluationScore ovr_weighted_auc(std::span<const int> labels, std::span<const double> score_matrix,
                                 std::size_t n, std::size_t k) {
  if (k < 3) throw std::invalid_argument("one-vs-rest AUC requires k >= 3 classes");
  if (labels.size() != n || score_matrix.size() != n * k)
    throw std::invalid_argument("score matrix dimensions do not match labels");
  check_finite_scores(score_matrix);

  std::vector<std::size_t> support(k, 0);
  for (int label : labels) {
    if (label < 0 || static_cast<std::size_t>(label) >= k)
      throw std::invalid_argument("label out of range for k classes");
    ++support[static_cast<std::size_t>(label)];
  }

  double aggregate = 0.0;
  std::vector<int> binary(n);
  std::vector<double> column(n);
  for (std::size_t c = 0; c < k; ++c) {
    if (support[c] == 0)
      throw std::invalid_argument("class " + std::to_string(c) + " has zero support");
    for (std::size_t i = 0; i < n; ++i) {
      binary[i] = labels[i] == static_cast<int>(c) ? 1 : 0;
      column[i] = score_matrix[i * k + c];
    }
    const double auc_c = binary_auc(binary, column);
    aggregate += (static_cast<double>(support[c]) / static_cast<double>(n)) * auc_c;
  }
  return {aggregate, MetricKind::kOvrWeightedAuc, n};
}

EvaluationScore r2(std::span<const double> y_true, std::span<const double> y_pred) {
  if (y_true.size() != y_pred.size()) throw std::invalid_argument("length mismatch");
  const std::size_t n = y_true.size();
  if (n < 2) throw std::invalid_argument("need at least 2 samples");

  double mean = 0.0;
  for (double y : y_true) mean += y;
  mean /= static_cast<double>(n);

  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ss_res += (y_true[i] - y_pred[i]) * (y_true[i] - y_pred[i]);
    ss_tot += (y_true[i] - mean) * (y_true[i] - mean);
  }
  if (ss_tot == 0.0) throw std::invalid_argument("R2 undefined: y_true is constant");
  return {1.0 - ss_res / ss_tot, MetricKind::kR2, n};
}

MetricKind default_metric_for(Task task) {
  switch (task) {
    case Task::kRegression: return MetricKind::kR2;
    case Task::kBinary: return MetricKind::kWeightedAuc;
    case Task::kMulticlass: return MetricKind::kOvrWeightedAuc;
  }
  return MetricKind::kR2;
}

bool metric_compatible(MetricKind metric, Task task) {
  return metric == default_metric_for(task);
}

}  // namespace subtune
