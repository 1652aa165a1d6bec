#pragma once

#include <cstdint>
#include <filesystem>

#include <nlohmann/json_fwd.hpp>

#include "subtune/dataio.hpp"

namespace subtune {

// Desk-scale stand-in for large tabular benchmarks: a sparse linear +
// pairwise-interaction target, with Gaussian noise for regression and
// logistic/softmax label sampling for classification. The interaction terms
// make very small fractional views underfit visibly, which the relative-
// performance experiments rely on.
struct SynthSpec {
  Task task = Task::kRegression;
  std::size_t n_rows = 1000;
  std::size_t n_features = 10;
  double noise = 0.1;
  std::uint64_t seed = 0;
  int n_classes = 3;  // multiclass only

  void validate() const;
  static SynthSpec from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

Dataset make_synthetic(const SynthSpec& spec);

// Generates and writes the dataset as CSV (deterministic bytes per spec).
void write_synthetic_csv(const SynthSpec& spec, const std::filesystem::path& path);

}  // namespace subtune
