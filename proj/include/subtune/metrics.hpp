#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>

#include "subtune/dataio.hpp"

namespace subtune {

enum class MetricKind { kWeightedAuc, kOvrWeightedAuc, kR2 };

std::string to_string(MetricKind m);
MetricKind metric_from_string(std::string_view s);

// All three metrics are maximize-is-better.
struct EvaluationScore {
  double value = 0.0;
  MetricKind kind = MetricKind::kR2;
  std::size_t n_evaluated = 0;
};

// Area under the ROC curve via rank statistics with midrank tie correction:
// (P - T/2) / (n_pos * n_neg) where P counts pairs scoring the positive at or
// above the negative and T counts exact ties. O(n log n).
EvaluationScore weighted_auc(std::span<const int> labels, std::span<const double> scores);

// One-vs-rest AUC per class, aggregated by class support. score_matrix is
// n x k row-major; requires k >= 3 and every class present.
EvaluationScore ovr_weighted_auc(std::span<const int> labels, std::span<const double> score_matrix,
                                 std::size_t n, std::size_t k);

// 1 - sum((y - yhat)^2) / sum((y - mean(y))^2)
EvaluationScore r2(std::span<const double> y_true, std::span<const double> y_pred);

MetricKind default_metric_for(Task task);
bool metric_compatible(MetricKind metric, Task task);

}  // namespace subtune
