#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace subtune {

enum class Task { kRegression, kBinary, kMulticlass };

std::string to_string(Task t);
Task task_from_string(std::string_view s);

// Raised by load_table with the offending row/column in the message.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An ingested numeric table: row-major features plus one target column.
struct Dataset {
  Task task = Task::kRegression;
  int n_classes = 0;  // k for classification tasks, 0 for regression
  std::vector<std::string> feature_names;
  std::vector<double> features;  // n_rows x n_features, row-major
  std::vector<double> targets;

  std::size_t n_rows() const { return targets.size(); }
  std::size_t n_features() const { return feature_names.size(); }
  const double* row(std::size_t i) const { return features.data() + i * n_features(); }
};

// Parses a headered numeric CSV ('.' decimal separator, UTF-8). Errors carry
// the 1-based row and the column name. Classification targets must be
// integers in [0, k); for binary tasks k = 2.
Dataset load_table(const std::filesystem::path& path, Task task,
                   const std::string& target_column);

struct SplitSpec {
  double train_frac = 0.8;
  double valid_frac = 0.1;
  double test_frac = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Split {
  std::vector<std::uint32_t> train;
  std::vector<std::uint32_t> valid;
  std::vector<std::uint32_t> test;
};

// Seeded uniform permutation of row indices partitioned by the fractions.
// Valid/test sizes are round(frac * N); the remainder goes to train. Depends
// only on (N, seed), never on feature values.
Split split(const Dataset& dataset, const SplitSpec& spec);

// A deterministic fractional view of a split: the first max(1, round(r * N))
// entries of one seeded permutation, so views at the same seed nest.
struct DataView {
  double fraction = 1.0;
  std::uint64_t seed = 0;
  std::vector<std::uint32_t> rows;
};

DataView subsample(const std::vector<std::uint32_t>& train, double r, std::uint64_t seed);

// Ordered set of allowed fidelity fractions; the last entry is exactly 1.
struct FidelityLadder {
  std::vector<double> fractions;

  void validate() const;
  double min() const { return fractions.front(); }

  // R = {1/100, 1/10, 1/4, 1/2, 3/4, 1}
  static FidelityLadder paper_default();
};

// Fractions used by the relative-performance stress analysis only; tuning
// schedulers never go below the ladder.
inline const std::vector<double> kStressFractions = {1e-3, 1e-4, 1e-5};

// Contiguous column-major buffer handed to trainers. Materialized lazily from
// index sets; the split/view machinery itself never copies row payloads.
struct DataBlock {
  std::size_t n_rows = 0;
  std::size_t n_features = 0;
  std::vector<double> columns;  // n_features x n_rows, column-major
  std::vector<double> targets;

  double value(std::size_t row, std::size_t col) const { return columns[col * n_rows + row]; }
  std::span<const double> column(std::size_t col) const {
    return {columns.data() + col * n_rows, n_rows};
  }
};

DataBlock materialize(const Dataset& dataset, std::span<const std::uint32_t> rows);

// Writes a DataBlock (or full dataset) back to CSV with the given header;
// used by the external-trainer path. Deterministic byte output.
void write_csv(const std::filesystem::path& path, const std::vector<std::string>& feature_names,
               const std::string& target_name, const DataBlock& block);

}  // namespace subtune
