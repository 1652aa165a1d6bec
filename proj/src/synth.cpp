#include "subtune/synth.hpp"

#include <cmath>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "subtune/rng.hpp"

namespace subtune {

void SynthSpec::validate() const {
  if (n_rows < 10) throw std::invalid_argument("synthetic dataset needs n_rows >= 10");
  if (n_features < 2) throw std::invalid_argument("synthetic dataset needs n_features >= 2");
  if (noise < 0.0) throw std::invalid_argument("noise must be >= 0");
  if (task == Task::kMulticlass && n_classes < 3)
    throw std::invalid_argument("multiclass synthetic dataset needs n_classes >= 3");
}

SynthSpec SynthSpec::from_json(const nlohmann::json& j) {
  SynthSpec spec;
  spec.task = task_from_string(j.value("task", "regression"));
  spec.n_rows = j.value("n_rows", std::size_t{1000});
  spec.n_features = j.value("n_features", std::size_t{10});
  spec.noise = j.value("noise", 0.1);
  spec.seed = j.value("seed", std::uint64_t{0});
  spec.n_classes = j.value("n_classes", 3);
  spec.validate();
  return spec;
}

nlohmann::json SynthSpec::to_json() const {
  return {{"task", to_string(task)},   {"n_rows", n_rows}, {"n_features", n_features},
          {"noise", noise},            {"seed", seed},     {"n_classes", n_classes}};
}

namespace {

// Raw signal: a few strong linear terms plus pairwise interactions among the
// first features. Axis-aligned enough for trees, rich enough that tiny views
// cannot estimate it.
double signal(const double* x, std::size_t d, const std::vector<double>& lin_coef,
              const std::vector<double>& pair_coef) {
  const std::size_t n_lin = lin_coef.size();
  const std::size_t n_pair = pair_coef.size();
  double s = 0.0;
  for (std::size_t j = 0; j < n_lin && j < d; ++j) s += lin_coef[j] * x[j];
  std::size_t p = 0;
  for (std::size_t a = 0; a < d && p < n_pair; ++a)
    for (std::size_t b = a + 1; b < d && p < n_pair; ++b) s += pair_coef[p++] * x[a] * x[b];
  return s;
}

}  // namespace

Dataset make_synthetic(const SynthSpec& spec) {
  spec.validate();
  const std::size_t n = spec.n_rows;
  const std::size_t d = spec.n_features;
  const std::size_t k =
      spec.task == Task::kMulticlass ? static_cast<std::size_t>(spec.n_classes) : 1;

  Rng coef_rng(derive_seed(spec.seed, 0xC0EF));
  const std::size_t n_lin = std::max<std::size_t>(2, d / 2);
  const std::size_t n_pair = std::max<std::size_t>(2, d / 2);
  // One coefficient set per class for multiclass, shared otherwise.
  std::vector<std::vector<double>> lin(k), pair(k);
  for (std::size_t c = 0; c < k; ++c) {
    lin[c].resize(n_lin);
    pair[c].resize(n_pair);
    for (auto& v : lin[c]) v = coef_rng.uniform(-2.0, 2.0);
    for (auto& v : pair[c]) v = coef_rng.uniform(-3.0, 3.0);
  }

  Dataset ds;
  ds.task = spec.task;
  ds.n_classes = spec.task == Task::kRegression ? 0
                : spec.task == Task::kBinary    ? 2
                                                : spec.n_classes;
  for (std::size_t f = 0; f < d; ++f) ds.feature_names.push_back("x" + std::to_string(f));
  ds.features.resize(n * d);
  ds.targets.resize(n);

  Rng row_rng(derive_seed(spec.seed, 0xDA7A));
  std::vector<double> raw(k);
  for (std::size_t i = 0; i < n; ++i) {
    double* x = ds.features.data() + i * d;
    for (std::size_t f = 0; f < d; ++f) x[f] = row_rng.uniform(-1.0, 1.0);

    for (std::size_t c = 0; c < k; ++c) raw[c] = signal(x, d, lin[c], pair[c]);

    switch (spec.task) {
      case Task::kRegression:
        ds.targets[i] = raw[0] + spec.noise * row_rng.gaussian();
        break;
      case Task::kBinary: {
        // Noise acts as a logit temperature: more noise, flatter probabilities.
        const double p = 1.0 / (1.0 + std::exp(-raw[0] / (0.25 + spec.noise)));
        ds.targets[i] = row_rng.uniform01() < p ? 1.0 : 0.0;
        break;
      }
      case Task::kMulticlass: {
        double max_raw = raw[0];
        for (std::size_t c = 1; c < k; ++c) max_raw = std::max(max_raw, raw[c]);
        double sum = 0.0;
        std::vector<double> probs(k);
        for (std::size_t c = 0; c < k; ++c) {
          probs[c] = std::exp((raw[c] - max_raw) / (0.25 + spec.noise));
          sum += probs[c];
        }
        double u = row_rng.uniform01() * sum;
        std::size_t label = k - 1;
        for (std::size_t c = 0; c < k; ++c) {
          if (u < probs[c]) {
            label = c;
            break;
          }
          u -= probs[c];
        }
        ds.targets[i] = static_cast<double>(label);
        break;
      }
    }
  }

  // Guarantee every class shows up at least once so stratified-free splits
  // stay scoreable; deterministic placement at the front rows.
  if (spec.task != Task::kRegression) {
    const int kk = ds.n_classes;
    std::vector<std::size_t> counts(static_cast<std::size_t>(kk), 0);
    for (double y : ds.targets) counts[static_cast<std::size_t>(y)]++;
    std::size_t cursor = 0;
    for (int c = 0; c < kk; ++c) {
      if (counts[static_cast<std::size_t>(c)] == 0)
        ds.targets[cursor++] = static_cast<double>(c);
    }
  }
  return ds;
}

void write_synthetic_csv(const SynthSpec& spec, const std::filesystem::path& path) {
  const Dataset ds = make_synthetic(spec);
  DataBlock block;
  block.n_rows = ds.n_rows();
  block.n_features = ds.n_features();
  block.columns.resize(block.n_rows * block.n_features);
  for (std::size_t i = 0; i < block.n_rows; ++i)
    for (std::size_t f = 0; f < block.n_features; ++f)
      block.columns[f * block.n_rows + i] = ds.row(i)[f];
  block.targets = ds.targets;
  write_csv(path, ds.feature_names, "target", block);
}

}  // namespace subtune
