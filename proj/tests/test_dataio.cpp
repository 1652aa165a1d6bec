#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "subtune/dataio.hpp"
#include "subtune/synth.hpp"

using namespace subtune;

namespace {

std::filesystem::path write_temp_csv(const std::string& name, const std::string& content) {
  const auto path = std::filesystem::temp_directory_path() / name;
  std::ofstream out(path, std::ios::trunc);
  out << content;
  return path;
}

Dataset tiny_dataset(std::size_t n) {
  Dataset ds;
  ds.task = Task::kRegression;
  ds.feature_names = {"a", "b"};
  for (std::size_t i = 0; i < n; ++i) {
    ds.features.push_back(static_cast<double>(i));
    ds.features.push_back(static_cast<double>(2 * i));
    ds.targets.push_back(static_cast<double>(i));
  }
  return ds;
}

}  // namespace

TEST_CASE("load_table parses a tiny regression csv") {
  const auto path = write_temp_csv("subtune_tiny.csv", "a,b,y\n1,2,3\n4,5,6\n7,8,9\n10,11,12\n");
  const Dataset ds = load_table(path, Task::kRegression, "y");
  CHECK(ds.n_rows() == 4);
  CHECK(ds.n_features() == 2);
  CHECK(ds.feature_names == std::vector<std::string>{"a", "b"});
  CHECK(ds.targets[2] == 9.0);
  CHECK(ds.row(1)[1] == 5.0);
}

TEST_CASE("load_table names the offending row and column") {
  const auto path = write_temp_csv("subtune_nan.csv", "a,b,y\n1,2,3\n4,NaN,6\n");
  try {
    load_table(path, Task::kRegression, "y");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    const std::string what = e.what();
    CHECK(what.find("row 3") != std::string::npos);
    CHECK(what.find("'b'") != std::string::npos);
  }
}

TEST_CASE("load_table rejects out-of-range binary labels") {
  const auto path = write_temp_csv("subtune_bin.csv", "a,y\n1,0\n2,1\n3,2\n");
  try {
    load_table(path, Task::kBinary, "y");
    FAIL("expected an error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("target out of range") != std::string::npos);
  }
}

TEST_CASE("load_table rejects unknown target column and non-integral labels") {
  const auto path = write_temp_csv("subtune_tgt.csv", "a,y\n1,0\n2,1\n");
  CHECK_THROWS_AS(load_table(path, Task::kRegression, "z"), ParseError);

  const auto frac = write_temp_csv("subtune_frac.csv", "a,y\n1,0.5\n2,1\n");
  CHECK_THROWS_AS(load_table(frac, Task::kBinary, "y"), ParseError);
}

TEST_CASE("split produces the documented sizes with remainder to train") {
  SplitSpec spec;
  spec.seed = 5;

  const Dataset d100 = tiny_dataset(100);
  const Split s100 = split(d100, spec);
  CHECK(s100.train.size() == 80);
  CHECK(s100.valid.size() == 10);
  CHECK(s100.test.size() == 10);

  const Dataset d101 = tiny_dataset(101);
  const Split s101 = split(d101, spec);
  CHECK(s101.train.size() == 81);
  CHECK(s101.valid.size() == 10);
  CHECK(s101.test.size() == 10);
}

TEST_CASE("split is deterministic, disjoint, exhaustive, and value-independent") {
  SplitSpec spec;
  spec.seed = 11;
  const Dataset ds = tiny_dataset(57);
  const Split a = split(ds, spec);
  const Split b = split(ds, spec);
  CHECK(a.train == b.train);
  CHECK(a.valid == b.valid);
  CHECK(a.test == b.test);

  std::set<std::uint32_t> all;
  for (auto i : a.train) all.insert(i);
  for (auto i : a.valid) all.insert(i);
  for (auto i : a.test) all.insert(i);
  CHECK(all.size() == 57);

  // Same N, different feature values: identical index partition.
  Dataset other = tiny_dataset(57);
  for (auto& v : other.features) v *= -3.5;
  const Split c = split(other, spec);
  CHECK(a.train == c.train);
  CHECK(a.valid == c.valid);
  CHECK(a.test == c.test);
}

TEST_CASE("subsample takes a nested prefix with a floor of one row") {
  std::vector<std::uint32_t> train(100);
  for (std::uint32_t i = 0; i < 100; ++i) train[i] = i + 1000;

  const DataView quarter = subsample(train, 0.25, 9);
  CHECK(quarter.rows.size() == 25);

  const DataView spec_min = subsample(train, 1e-5, 9);
  CHECK(spec_min.rows.size() == 1);

  const DataView small = subsample(train, 0.1, 9);
  const DataView large = subsample(train, 0.5, 9);
  const std::set<std::uint32_t> large_set(large.rows.begin(), large.rows.end());
  for (auto row : small.rows) CHECK(large_set.count(row) == 1);

  const DataView all = subsample(train, 1.0, 9);
  CHECK(all.rows.size() == 100);
  CHECK(std::set<std::uint32_t>(all.rows.begin(), all.rows.end()).size() == 100);

  CHECK_THROWS_AS(subsample(train, 0.0, 1), std::invalid_argument);
  CHECK_THROWS_AS(subsample(train, 1.5, 1), std::invalid_argument);
}

TEST_CASE("subsample selection is uniform across seeds") {
  // 1000 seeds, N = 1000, r = 0.1. Per-row inclusion is Binomial(1000, 0.1),
  // sigma ~ 0.0095, so the max deviation over 1000 rows concentrates slightly
  // above 0.03 for any fair sampler; the checks below bound the same
  // uniformity property at attainable levels: nearly all rows within 0.03,
  // every row within 0.05 (> 5 sigma), and the mean on target.
  const std::size_t n = 1000;
  std::vector<std::uint32_t> train(n);
  for (std::uint32_t i = 0; i < n; ++i) train[i] = i;

  std::vector<int> hits(n, 0);
  const int n_seeds = 1000;
  for (int seed = 0; seed < n_seeds; ++seed) {
    const DataView view = subsample(train, 0.1, static_cast<std::uint64_t>(seed));
    for (auto row : view.rows) hits[row]++;
  }
  std::size_t within_003 = 0;
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double freq = hits[i] / static_cast<double>(n_seeds);
    mean += freq;
    if (std::abs(freq - 0.1) <= 0.03) ++within_003;
    CHECK(freq > 0.05);
    CHECK(freq < 0.15);
  }
  mean /= static_cast<double>(n);
  CHECK(mean == doctest::Approx(0.1).epsilon(1e-9));  // exactly 100 rows per view
  CHECK(within_003 >= 990);
}

TEST_CASE("fidelity ladder validation") {
  CHECK_NOTHROW(FidelityLadder::paper_default().validate());
  CHECK(FidelityLadder::paper_default().fractions.size() == 6);
  CHECK(FidelityLadder::paper_default().min() == doctest::Approx(0.01));

  CHECK_THROWS_AS((FidelityLadder{{0.5, 0.2, 1.0}}.validate()), std::invalid_argument);
  CHECK_THROWS_AS((FidelityLadder{{0.5, 0.9}}.validate()), std::invalid_argument);
  CHECK_THROWS_AS((FidelityLadder{{}}.validate()), std::invalid_argument);
}

TEST_CASE("materialize stages the requested rows column-major") {
  const Dataset ds = tiny_dataset(10);
  const std::vector<std::uint32_t> rows = {3, 7, 1};
  const DataBlock block = materialize(ds, rows);
  CHECK(block.n_rows == 3);
  CHECK(block.n_features == 2);
  CHECK(block.value(0, 0) == 3.0);
  CHECK(block.value(1, 1) == 14.0);
  CHECK(block.targets[2] == 1.0);
}

TEST_CASE("csv write/load round-trip preserves values") {
  SynthSpec spec;
  spec.n_rows = 30;
  spec.n_features = 4;
  spec.seed = 3;
  const auto path = std::filesystem::temp_directory_path() / "subtune_roundtrip.csv";
  write_synthetic_csv(spec, path);
  const Dataset ds = load_table(path, Task::kRegression, "target");
  CHECK(ds.n_rows() == 30);
  CHECK(ds.n_features() == 4);

  const Dataset direct = make_synthetic(spec);
  for (std::size_t i = 0; i < ds.n_rows(); ++i) {
    CHECK(ds.targets[i] == direct.targets[i]);
    for (std::size_t f = 0; f < ds.n_features(); ++f) CHECK(ds.row(i)[f] == direct.row(i)[f]);
  }
}
