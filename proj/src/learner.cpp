#include "subtune/learner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "subtune/rng.hpp"

namespace subtune {

double Tree::predict_row(const double* row) const {
  int i = 0;
  while (!nodes[i].is_leaf())
    i = row[nodes[i].feature] < nodes[i].threshold ? nodes[i].left : nodes[i].right;
  return nodes[i].weight;
}

int Tree::depth() const {
  // Nodes are laid out level by level, so a single pass suffices.
  std::vector<int> level(nodes.size(), 0);
  int deepest = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].is_leaf()) continue;
    level[nodes[i].left] = level[i] + 1;
    level[nodes[i].right] = level[i] + 1;
    deepest = std::max(deepest, level[i] + 1);
  }
  return deepest;
}

double leaf_weight(double grad_sum, double hess_sum, double alpha, double lambda) {
  const double shrunk = std::max(0.0, std::abs(grad_sum) - alpha);
  const double sign = grad_sum > 0.0 ? 1.0 : (grad_sum < 0.0 ? -1.0 : 0.0);
  return -sign * shrunk / (hess_sum + lambda);
}

double split_gain(double grad_left, double hess_left, double grad_right, double hess_right,
                  double lambda, double gamma) {
  const double left = grad_left * grad_left / (hess_left + lambda);
  const double right = grad_right * grad_right / (hess_right + lambda);
  const double joint = (grad_left + grad_right) * (grad_left + grad_right) /
                       (hess_left + hess_right + lambda);
  return 0.5 * (left + right - joint) - gamma;
}

namespace {

struct TrainParams {
  double eta, alpha, lambda, gamma, subsample, col_subsample;
  int max_depth, num_round;
};

TrainParams read_params(const Configuration& config) {
  TrainParams p{};
  try {
    p.eta = config.at("eta");
    p.alpha = config.at("alpha");
    p.lambda = config.at("lambda");
    p.gamma = config.at("gamma");
    p.subsample = config.at("subsample");
    p.col_subsample = config.at("col_subsample");
    p.max_depth = static_cast<int>(config.at("max_depth"));
    p.num_round = static_cast<int>(config.at("num_round"));
  } catch (const std::out_of_range& e) {
    throw std::invalid_argument(std::string("invalid config: ") + e.what());
  }
  if (p.num_round < 1 || p.max_depth < 1)
    throw std::invalid_argument("invalid config: num_round and max_depth must be >= 1");
  if (!(p.subsample > 0.0) || p.subsample > 1.0 || !(p.col_subsample > 0.0) ||
      p.col_subsample > 1.0)
    throw std::invalid_argument("invalid config: subsample ratios must be in (0, 1]");
  return p;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Per-trial stream tags.
constexpr std::uint64_t kRowStream = 0xA11BEEF1;
constexpr std::uint64_t kColStream = 0xC011BEEF;

class TreeGrower {
 public:
  TreeGrower(const DataBlock& block, std::vector<std::vector<std::uint32_t>> const& sorted_order)
      : block_(block), sorted_(sorted_order), node_of_(block.n_rows, -1) {}

  // Grows one tree on (g, h) restricted to rows flagged in `in_round`, using
  // only `features`. Leaf weights are shrunk by eta before storage.
  Tree grow(std::span<const double> g, std::span<const double> h,
            const std::vector<std::uint8_t>& in_round, const std::vector<int>& features,
            const TrainParams& p) {
    const std::size_t n = block_.n_rows;
    Tree tree;
    tree.nodes.emplace_back();

    double g_root = 0.0, h_root = 0.0;
    std::size_t count_root = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (in_round[i]) {
        node_of_[i] = 0;
        g_root += g[i];
        h_root += h[i];
        ++count_root;
      } else {
        node_of_[i] = -1;
      }
    }

    node_grad_.assign(1, g_root);
    node_hess_.assign(1, h_root);
    node_count_.assign(1, count_root);

    int level_begin = 0;
    int level_end = 1;
    for (int depth = 0; depth < p.max_depth && level_begin < level_end; ++depth) {
      find_level_splits(g, h, features, p, level_begin, level_end);
      const int n_new = apply_level_splits(p, level_begin, level_end, tree);
      if (n_new == 0) break;
      reassign_rows(g, h, level_begin, level_end, tree);
      level_begin = level_end;
      level_end = level_end + n_new;
    }

    // Whatever remains unsplit becomes a leaf.
    for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
      if (tree.nodes[i].is_leaf() && tree.nodes[i].left < 0) {
        tree.nodes[i].weight =
            p.eta * leaf_weight(node_grad_[i], node_hess_[i], p.alpha, p.lambda);
      }
    }
    return tree;
  }

 private:
  struct Candidate {
    double gain = 0.0;
    int feature = -1;
    double threshold = 0.0;
    double g_left = 0.0, h_left = 0.0;
  };

  void find_level_splits(std::span<const double> g, std::span<const double> h,
                         const std::vector<int>& features, const TrainParams& p, int level_begin,
                         int level_end) {
    const int width = level_end - level_begin;
    best_.assign(width, Candidate{});
    scan_g_.assign(width, 0.0);
    scan_h_.assign(width, 0.0);
    scan_count_.assign(width, 0);
    scan_last_.assign(width, 0.0);

    for (int f : features) {
      std::fill(scan_g_.begin(), scan_g_.end(), 0.0);
      std::fill(scan_h_.begin(), scan_h_.end(), 0.0);
      std::fill(scan_count_.begin(), scan_count_.end(), std::size_t{0});
      const double* column = block_.columns.data() + static_cast<std::size_t>(f) * block_.n_rows;
      for (std::uint32_t idx : sorted_[static_cast<std::size_t>(f)]) {
        const int node = node_of_[idx];
        if (node < level_begin) continue;  // outside the round subset or already a leaf
        const int slot = node - level_begin;
        const double value = column[idx];
        if (scan_count_[slot] > 0 && value > scan_last_[slot]) {
          const double g_left = scan_g_[slot];
          const double h_left = scan_h_[slot];
          const double gain = split_gain(g_left, h_left, node_grad_[node] - g_left,
                                         node_hess_[node] - h_left, p.lambda, p.gamma);
          if (gain > best_[slot].gain) {
            best_[slot] = {gain, f, 0.5 * (scan_last_[slot] + value), g_left, h_left};
          }
        }
        scan_g_[slot] += g[idx];
        scan_h_[slot] += h[idx];
        scan_count_[slot] += 1;
        scan_last_[slot] = value;
      }
    }
  }

  // Turns winning candidates into internal nodes; returns the child count.
  int apply_level_splits(const TrainParams& p, int level_begin, int level_end, Tree& tree) {
    (void)p;
    int n_new = 0;
    for (int node = level_begin; node < level_end; ++node) {
      const Candidate& c = best_[node - level_begin];
      if (c.feature < 0 || !(c.gain > 0.0)) continue;
      TreeNode& parent = tree.nodes[static_cast<std::size_t>(node)];
      parent.feature = c.feature;
      parent.threshold = c.threshold;
      parent.gain = c.gain;
      parent.left = static_cast<int>(tree.nodes.size());
      parent.right = parent.left + 1;
      tree.nodes.emplace_back();
      tree.nodes.emplace_back();
      node_grad_.push_back(c.g_left);
      node_hess_.push_back(c.h_left);
      node_count_.push_back(0);
      node_grad_.push_back(node_grad_[node] - c.g_left);
      node_hess_.push_back(node_hess_[node] - c.h_left);
      node_count_.push_back(0);
      n_new += 2;
    }
    return n_new;
  }

  void reassign_rows(std::span<const double> g, std::span<const double> h, int level_begin,
                     int level_end, const Tree& tree) {
    (void)g;
    (void)h;
    for (std::size_t i = 0; i < block_.n_rows; ++i) {
      const int node = node_of_[i];
      if (node < level_begin || node >= level_end) continue;
      const TreeNode& parent = tree.nodes[static_cast<std::size_t>(node)];
      if (parent.is_leaf()) continue;  // stays put; no further splits below it
      const double value = block_.value(i, static_cast<std::size_t>(parent.feature));
      const int child = value < parent.threshold ? parent.left : parent.right;
      node_of_[i] = child;
      node_count_[static_cast<std::size_t>(child)] += 1;
    }
  }

  const DataBlock& block_;
  const std::vector<std::vector<std::uint32_t>>& sorted_;
  std::vector<int> node_of_;
  std::vector<double> node_grad_, node_hess_;
  std::vector<std::size_t> node_count_;
  std::vector<Candidate> best_;
  std::vector<double> scan_g_, scan_h_, scan_last_;
  std::vector<std::size_t> scan_count_;
};

std::vector<double> initial_base_scores(const DataBlock& block, Task task, int n_classes) {
  const std::size_t n = block.n_rows;
  if (task == Task::kRegression) {
    double mean = 0.0;
    for (double y : block.targets) mean += y;
    return {mean / static_cast<double>(n)};
  }
  const int k = task == Task::kBinary ? 2 : n_classes;
  std::vector<double> counts(static_cast<std::size_t>(k), 0.0);
  for (double y : block.targets) counts[static_cast<std::size_t>(y)] += 1.0;
  // Smoothed priors keep low-fidelity views with absent classes finite.
  std::vector<double> priors(counts.size());
  for (std::size_t c = 0; c < counts.size(); ++c)
    priors[c] = (counts[c] + 0.5) / (static_cast<double>(n) + 0.5 * k);
  if (task == Task::kBinary) return {std::log(priors[1] / priors[0])};
  std::vector<double> base(priors.size());
  for (std::size_t c = 0; c < priors.size(); ++c) base[c] = std::log(priors[c]);
  return base;
}

double predict_in_block(const Tree& tree, const DataBlock& block, std::size_t row) {
  int i = 0;
  while (!tree.nodes[static_cast<std::size_t>(i)].is_leaf()) {
    const TreeNode& node = tree.nodes[static_cast<std::size_t>(i)];
    i = block.value(row, static_cast<std::size_t>(node.feature)) < node.threshold ? node.left
                                                                                  : node.right;
  }
  return tree.nodes[static_cast<std::size_t>(i)].weight;
}

void softmax_row(const double* raw, double* out, std::size_t k) {
  double max_raw = raw[0];
  for (std::size_t c = 1; c < k; ++c) max_raw = std::max(max_raw, raw[c]);
  double sum = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    out[c] = std::exp(raw[c] - max_raw);
    sum += out[c];
  }
  for (std::size_t c = 0; c < k; ++c) out[c] /= sum;
}

}  // namespace

TrainOutput train(const Configuration& config, const DataBlock& block, Task task, int n_classes,
                  std::uint64_t seed) {
  const auto t_start = std::chrono::steady_clock::now();
  if (block.n_rows == 0) throw std::invalid_argument("cannot train on an empty view");
  const TrainParams p = read_params(config);
  const std::size_t n = block.n_rows;
  const std::size_t d = block.n_features;
  const std::size_t k = task == Task::kMulticlass ? static_cast<std::size_t>(n_classes) : 1;
  if (task == Task::kMulticlass && n_classes < 3)
    throw std::invalid_argument("multiclass training requires n_classes >= 3");

  BoostedModel model;
  model.task = task;
  model.n_classes = task == Task::kRegression ? 0 : (task == Task::kBinary ? 2 : n_classes);
  model.n_features = d;
  model.num_round = p.num_round;
  model.config = config;
  model.base_scores = initial_base_scores(block, task, n_classes);

  // One sort per feature per training call; every round scans in this order.
  std::vector<std::vector<std::uint32_t>> sorted(d);
  for (std::size_t f = 0; f < d; ++f) {
    auto& order = sorted[f];
    order.resize(n);
    std::iota(order.begin(), order.end(), 0u);
    const double* column = block.columns.data() + f * n;
    std::stable_sort(order.begin(), order.end(),
                     [column](std::uint32_t a, std::uint32_t b) { return column[a] < column[b]; });
  }

  // raw[c * n + i]: current additive prediction.
  std::vector<double> raw(n * k);
  for (std::size_t c = 0; c < k; ++c) {
    const double base = task == Task::kMulticlass ? model.base_scores[c] : model.base_scores[0];
    std::fill(raw.begin() + static_cast<std::ptrdiff_t>(c * n),
              raw.begin() + static_cast<std::ptrdiff_t>((c + 1) * n), base);
  }

  TreeGrower grower(block, sorted);
  std::vector<double> g(n), h(n), probs;
  if (task == Task::kMulticlass) probs.resize(n * k);
  std::vector<std::uint8_t> in_round(n);
  std::vector<std::uint32_t> row_scratch(n);
  std::vector<int> all_features(d);
  std::iota(all_features.begin(), all_features.end(), 0);

  const auto row_count = static_cast<std::size_t>(
      std::max<long long>(1, std::llround(p.subsample * static_cast<double>(n))));
  const auto col_count = static_cast<std::size_t>(
      std::max<long long>(1, std::llround(p.col_subsample * static_cast<double>(d))));

  for (int round = 0; round < p.num_round; ++round) {
    Rng row_rng(derive_seed(seed, kRowStream, static_cast<std::uint64_t>(round)));
    std::iota(row_scratch.begin(), row_scratch.end(), 0u);
    if (row_count < n) row_rng.shuffle(row_scratch);
    std::fill(in_round.begin(), in_round.end(), std::uint8_t{0});
    for (std::size_t i = 0; i < row_count; ++i) in_round[row_scratch[i]] = 1;

    Rng col_rng(derive_seed(seed, kColStream, static_cast<std::uint64_t>(round)));
    std::vector<int> features = all_features;
    if (col_count < d) {
      col_rng.shuffle(features);
      features.resize(col_count);
      std::sort(features.begin(), features.end());
    }

    if (task == Task::kMulticlass) {
      std::vector<double> raw_row(k);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < k; ++c) raw_row[c] = raw[c * n + i];
        softmax_row(raw_row.data(), probs.data() + i * k, k);
      }
    }

    for (std::size_t c = 0; c < k; ++c) {
      switch (task) {
        case Task::kRegression:
          for (std::size_t i = 0; i < n; ++i) {
            g[i] = raw[i] - block.targets[i];
            h[i] = 1.0;
          }
          break;
        case Task::kBinary:
          for (std::size_t i = 0; i < n; ++i) {
            const double prob = sigmoid(raw[i]);
            g[i] = prob - block.targets[i];
            h[i] = std::max(prob * (1.0 - prob), 1e-16);
          }
          break;
        case Task::kMulticlass:
          for (std::size_t i = 0; i < n; ++i) {
            const double prob = probs[i * k + c];
            const double y = block.targets[i] == static_cast<double>(c) ? 1.0 : 0.0;
            g[i] = prob - y;
            h[i] = std::max(prob * (1.0 - prob), 1e-16);
          }
          break;
      }

      Tree tree = grower.grow(g, h, in_round, features, p);
      for (std::size_t i = 0; i < n; ++i) raw[c * n + i] += predict_in_block(tree, block, i);
      model.trees.push_back(std::move(tree));
    }

    for (double v : raw)
      if (!std::isfinite(v))
        throw std::runtime_error("numeric overflow in boosting round " + std::to_string(round));
  }

  const auto t_end = std::chrono::steady_clock::now();
  TrainOutput out;
  out.model = std::move(model);
  out.train_seconds = std::chrono::duration<double>(t_end - t_start).count();
  return out;
}

namespace {

std::vector<double> raw_predictions(const BoostedModel& model, const double* rows, std::size_t n,
                                    std::size_t d, std::size_t row_stride) {
  const std::size_t k =
      model.task == Task::kMulticlass ? static_cast<std::size_t>(model.n_classes) : 1;
  std::vector<double> raw(n * k);
  for (std::size_t c = 0; c < k; ++c) {
    const double base =
        model.task == Task::kMulticlass ? model.base_scores[c] : model.base_scores[0];
    for (std::size_t i = 0; i < n; ++i) raw[i * k + c] = base;
  }
  (void)d;
  const std::size_t rounds = model.trees.size() / k;
  for (std::size_t t = 0; t < rounds; ++t) {
    for (std::size_t c = 0; c < k; ++c) {
      const Tree& tree = model.trees[t * k + c];
      for (std::size_t i = 0; i < n; ++i) raw[i * k + c] += tree.predict_row(rows + i * row_stride);
    }
  }
  return raw;
}

std::vector<double> finish_predictions(const BoostedModel& model, std::vector<double> raw,
                                       std::size_t n) {
  if (model.task == Task::kRegression) return raw;
  if (model.task == Task::kBinary) {
    for (double& v : raw) v = sigmoid(v);
    return raw;
  }
  const auto k = static_cast<std::size_t>(model.n_classes);
  std::vector<double> out(n * k);
  for (std::size_t i = 0; i < n; ++i) softmax_row(raw.data() + i * k, out.data() + i * k, k);
  return out;
}

}  // namespace

std::vector<double> predict_rows(const BoostedModel& model, std::span<const double> rows,
                                 std::size_t n, std::size_t d) {
  if (d != model.n_features)
    throw std::invalid_argument("feature count mismatch: model expects " +
                                std::to_string(model.n_features));
  if (rows.size() != n * d) throw std::invalid_argument("row buffer size mismatch");
  return finish_predictions(model, raw_predictions(model, rows.data(), n, d, d), n);
}

std::vector<double> predict(const BoostedModel& model, const DataBlock& block) {
  if (block.n_features != model.n_features)
    throw std::invalid_argument("feature count mismatch: model expects " +
                                std::to_string(model.n_features));
  // Column-major block: stage rows into a contiguous row-major buffer.
  std::vector<double> rows(block.n_rows * block.n_features);
  for (std::size_t i = 0; i < block.n_rows; ++i)
    for (std::size_t f = 0; f < block.n_features; ++f)
      rows[i * block.n_features + f] = block.value(i, f);
  return predict_rows(model, rows, block.n_rows, block.n_features);
}

EvaluationScore evaluate(const BoostedModel& model, const DataBlock& block, MetricKind metric) {
  if (!metric_compatible(metric, model.task))
    throw std::invalid_argument("metric " + to_string(metric) + " incompatible with task " +
                                to_string(model.task));
  const auto preds = predict(model, block);
  switch (metric) {
    case MetricKind::kR2:
      return r2(block.targets, preds);
    case MetricKind::kWeightedAuc: {
      std::vector<int> labels(block.n_rows);
      for (std::size_t i = 0; i < block.n_rows; ++i)
        labels[i] = static_cast<int>(block.targets[i]);
      return weighted_auc(labels, preds);
    }
    case MetricKind::kOvrWeightedAuc: {
      std::vector<int> labels(block.n_rows);
      for (std::size_t i = 0; i < block.n_rows; ++i)
        labels[i] = static_cast<int>(block.targets[i]);
      return ovr_weighted_auc(labels, preds, block.n_rows,
                              static_cast<std::size_t>(model.n_classes));
    }
  }
  throw std::logic_error("unreachable");
}

double training_loss(const BoostedModel& model, const DataBlock& block) {
  const std::size_t n = block.n_rows;
  const std::size_t k =
      model.task == Task::kMulticlass ? static_cast<std::size_t>(model.n_classes) : 1;
  std::vector<double> rows(n * block.n_features);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t f = 0; f < block.n_features; ++f)
      rows[i * block.n_features + f] = block.value(i, f);
  const auto raw = raw_predictions(model, rows.data(), n, block.n_features, block.n_features);

  double loss = 0.0;
  switch (model.task) {
    case Task::kRegression:
      for (std::size_t i = 0; i < n; ++i) {
        const double e = raw[i] - block.targets[i];
        loss += 0.5 * e * e;
      }
      break;
    case Task::kBinary:
      for (std::size_t i = 0; i < n; ++i) {
        const double z = raw[i];
        // log(1 + exp(-yz)) written stably
        const double margin = block.targets[i] > 0.5 ? z : -z;
        loss += margin > 0 ? std::log1p(std::exp(-margin)) : -margin + std::log1p(std::exp(margin));
      }
      break;
    case Task::kMulticlass: {
      std::vector<double> prob(k);
      for (std::size_t i = 0; i < n; ++i) {
        softmax_row(raw.data() + i * k, prob.data(), k);
        const auto y = static_cast<std::size_t>(block.targets[i]);
        loss += -std::log(std::max(prob[y], 1e-300));
      }
      break;
    }
  }
  return loss / static_cast<double>(n);
}

nlohmann::json BoostedModel::to_json() const {
  auto node_to_json = [](const Tree& tree, int idx, auto&& self) -> nlohmann::json {
    const TreeNode& node = tree.nodes[static_cast<std::size_t>(idx)];
    if (node.is_leaf()) return {{"weight", node.weight}};
    return {{"feature", node.feature},
            {"threshold", node.threshold},
            {"gain", node.gain},
            {"left", self(tree, node.left, self)},
            {"right", self(tree, node.right, self)}};
  };
  nlohmann::json trees_json = nlohmann::json::array();
  for (const auto& tree : trees) trees_json.push_back(node_to_json(tree, 0, node_to_json));
  return {{"task", subtune::to_string(task)},   {"n_classes", n_classes},
          {"n_features", n_features},           {"base_scores", base_scores},
          {"num_round", num_round},             {"config", config.to_json()},
          {"trees", std::move(trees_json)}};
}

namespace {

int parse_node(const nlohmann::json& j, Tree& tree) {
  const int idx = static_cast<int>(tree.nodes.size());
  tree.nodes.emplace_back();
  if (j.contains("weight")) {
    tree.nodes[static_cast<std::size_t>(idx)].weight = j.at("weight").get<double>();
    return idx;
  }
  TreeNode node;
  node.feature = j.at("feature").get<int>();
  node.threshold = j.at("threshold").get<double>();
  node.gain = j.at("gain").get<double>();
  tree.nodes[static_cast<std::size_t>(idx)] = node;
  tree.nodes[static_cast<std::size_t>(idx)].left = parse_node(j.at("left"), tree);
  tree.nodes[static_cast<std::size_t>(idx)].right = parse_node(j.at("right"), tree);
  return idx;
}

}  // namespace

BoostedModel BoostedModel::from_json(const nlohmann::json& j) {
  BoostedModel model;
  model.task = task_from_string(j.at("task").get<std::string>());
  model.n_classes = j.at("n_classes").get<int>();
  model.n_features = j.at("n_features").get<std::size_t>();
  model.base_scores = j.at("base_scores").get<std::vector<double>>();
  model.num_round = j.at("num_round").get<int>();
  model.config = Configuration::from_json(j.at("config"));
  for (const auto& tree_json : j.at("trees")) {
    Tree tree;
    parse_node(tree_json, tree);
    model.trees.push_back(std::move(tree));
  }
  return model;
}

}  // namespace subtune
