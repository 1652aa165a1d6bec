#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "subtune/dataio.hpp"
#include "subtune/metrics.hpp"
#include "subtune/search_space.hpp"

namespace subtune {

// Flat node storage; feature == -1 marks a leaf. Internal nodes keep the
// split gain that justified them (always > 0).
struct TreeNode {
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
  double weight = 0.0;
  int left = -1;
  int right = -1;

  bool is_leaf() const { return feature < 0; }
};

struct Tree {
  std::vector<TreeNode> nodes;

  double predict_row(const double* row) const;
  int depth() const;
};

struct BoostedModel {
  Task task = Task::kRegression;
  int n_classes = 0;
  std::size_t n_features = 0;
  std::vector<double> base_scores;  // one entry, or one per class for multiclass
  int num_round = 0;
  Configuration config;
  std::vector<Tree> trees;  // round-major; multiclass stores round * k + class

  nlohmann::json to_json() const;
  static BoostedModel from_json(const nlohmann::json& j);
};

// Leaf weight with L1 soft-thresholding: -sign(G) * max(0, |G|-alpha) / (H+lambda).
double leaf_weight(double grad_sum, double hess_sum, double alpha, double lambda);

// Gain of splitting (GL,HL | GR,HR):
//   1/2 [ GL^2/(HL+lambda) + GR^2/(HR+lambda) - (GL+GR)^2/(HL+HR+lambda) ] - gamma
double split_gain(double grad_left, double hess_left, double grad_right, double hess_right,
                  double lambda, double gamma);

struct TrainOutput {
  BoostedModel model;
  double train_seconds = 0.0;
};

// Fits num_round boosted trees (one per class per round for multiclass) with
// exact greedy split search on second-order statistics. Per-round row/column
// subsets come from streams seeded by (seed, round), so extending num_round
// never perturbs earlier rounds. Deterministic per (config, block, seed).
TrainOutput train(const Configuration& config, const DataBlock& block, Task task, int n_classes,
                  std::uint64_t seed);

// Regression: raw additive prediction. Binary: sigmoid score in (0,1).
// Multiclass: n x k row-major softmax probabilities.
std::vector<double> predict(const BoostedModel& model, const DataBlock& block);
std::vector<double> predict_rows(const BoostedModel& model, std::span<const double> rows,
                                 std::size_t n, std::size_t d);

// Predict then score; the metric must be compatible with the model's task.
EvaluationScore evaluate(const BoostedModel& model, const DataBlock& block, MetricKind metric);

// The task's training loss averaged over a block, used by tests and sanity
// checks (squared error, logistic loss, or softmax cross-entropy).
double training_loss(const BoostedModel& model, const DataBlock& block);

}  // namespace subtune
