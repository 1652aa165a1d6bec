#include "subtune/dataio.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "subtune/rng.hpp"

namespace subtune {

std::string to_string(Task t) {
  switch (t) {
    case Task::kRegression: return "regression";
    case Task::kBinary: return "binary";
    case Task::kMulticlass: return "multiclass";
  }
  return "regression";
}

Task task_from_string(std::string_view s) {
  if (s == "regression") return Task::kRegression;
  if (s == "binary" || s == "binary-classification") return Task::kBinary;
  if (s == "multiclass" || s == "multiclass-classification") return Task::kMulticlass;
  throw std::invalid_argument("unknown task: " + std::string(s));
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  auto e = s.find_last_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, e - b + 1);
}

double parse_cell(const std::string& raw, std::size_t row, const std::string& column) {
  const std::string cell = trim(raw);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc{} || ptr != cell.data() + cell.size())
    throw ParseError("row " + std::to_string(row) + ", column '" + column +
                     "': cannot parse '" + cell + "' as a number");
  if (!std::isfinite(v))
    throw ParseError("row " + std::to_string(row) + ", column '" + column +
                     "': non-finite value '" + cell + "'");
  return v;
}

}  // namespace

Dataset load_table(const std::filesystem::path& path, Task task,
                   const std::string& target_column) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open file: " + path.string());

  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty file: " + path.string());
  auto header = split_line(line);
  for (auto& h : header) h = trim(h);

  std::size_t target_idx = header.size();
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == target_column) target_idx = i;
  if (target_idx == header.size())
    throw ParseError("unknown target column '" + target_column + "'");

  Dataset ds;
  ds.task = task;
  for (std::size_t i = 0; i < header.size(); ++i)
    if (i != target_idx) ds.feature_names.push_back(header[i]);

  std::size_t row_number = 1;  // header is row 1
  while (std::getline(in, line)) {
    ++row_number;
    if (trim(line).empty()) continue;
    auto cells = split_line(line);
    if (cells.size() != header.size())
      throw ParseError("row " + std::to_string(row_number) + ": expected " +
                       std::to_string(header.size()) + " cells, got " +
                       std::to_string(cells.size()));
    for (std::size_t i = 0; i < cells.size(); ++i) {
      const double v = parse_cell(cells[i], row_number, header[i]);
      if (i == target_idx)
        ds.targets.push_back(v);
      else
        ds.features.push_back(v);
    }
  }

  if (task != Task::kRegression) {
    double max_label = 0.0;
    for (std::size_t i = 0; i < ds.targets.size(); ++i) {
      const double y = ds.targets[i];
      if (y != std::floor(y))
        throw ParseError("row " + std::to_string(i + 2) +
                         ": classification target not integral: " + std::to_string(y));
      if (y < 0.0) throw ParseError("row " + std::to_string(i + 2) + ": target out of range");
      max_label = std::max(max_label, y);
    }
    if (task == Task::kBinary) {
      if (max_label > 1.0) throw ParseError("target out of range: binary labels must be in {0,1}");
      ds.n_classes = 2;
    } else {
      ds.n_classes = static_cast<int>(max_label) + 1;
    }
  }
  return ds;
}

void SplitSpec::validate() const {
  if (!(train_frac > 0.0 && valid_frac > 0.0 && test_frac > 0.0))
    throw std::invalid_argument("split fractions must be positive");
  if (std::abs(train_frac + valid_frac + test_frac - 1.0) > 1e-9)
    throw std::invalid_argument("split fractions must sum to 1");
}

Split split(const Dataset& dataset, const SplitSpec& spec) {
  spec.validate();
  const std::size_t n = dataset.n_rows();
  std::vector<std::uint32_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0u);
  Rng rng(derive_seed(spec.seed, 0x5B17));
  rng.shuffle(perm);

  const auto n_valid = static_cast<std::size_t>(std::llround(spec.valid_frac * n));
  const auto n_test = static_cast<std::size_t>(std::llround(spec.test_frac * n));
  if (n_valid + n_test >= n) throw std::invalid_argument("dataset too small for split");
  const std::size_t n_train = n - n_valid - n_test;

  Split s;
  s.train.assign(perm.begin(), perm.begin() + n_train);
  s.valid.assign(perm.begin() + n_train, perm.begin() + n_train + n_valid);
  s.test.assign(perm.begin() + n_train + n_valid, perm.end());
  return s;
}

DataView subsample(const std::vector<std::uint32_t>& train, double r, std::uint64_t seed) {
  if (!(r > 0.0) || r > 1.0) throw std::invalid_argument("fraction must be in (0, 1]");
  std::vector<std::uint32_t> perm = train;
  Rng rng(derive_seed(seed, 0x50B5));
  rng.shuffle(perm);

  const auto want = static_cast<std::size_t>(std::llround(r * static_cast<double>(train.size())));
  const std::size_t take = std::max<std::size_t>(1, std::min(want, perm.size()));
  perm.resize(take);

  DataView view;
  view.fraction = r;
  view.seed = seed;
  view.rows = std::move(perm);
  return view;
}

void FidelityLadder::validate() const {
  if (fractions.empty()) throw std::invalid_argument("fidelity ladder must be non-empty");
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    if (!(fractions[i] > 0.0) || fractions[i] > 1.0)
      throw std::invalid_argument("ladder fractions must be in (0, 1]");
    if (i > 0 && !(fractions[i] > fractions[i - 1]))
      throw std::invalid_argument("ladder fractions must be strictly increasing");
  }
  if (fractions.back() != 1.0) throw std::invalid_argument("ladder must end at exactly 1.0");
}

FidelityLadder FidelityLadder::paper_default() {
  return FidelityLadder{{1.0 / 100, 1.0 / 10, 1.0 / 4, 1.0 / 2, 3.0 / 4, 1.0}};
}

DataBlock materialize(const Dataset& dataset, std::span<const std::uint32_t> rows) {
  DataBlock block;
  block.n_rows = rows.size();
  block.n_features = dataset.n_features();
  block.columns.resize(block.n_rows * block.n_features);
  block.targets.resize(block.n_rows);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double* src = dataset.row(rows[i]);
    for (std::size_t f = 0; f < block.n_features; ++f) block.columns[f * block.n_rows + i] = src[f];
    block.targets[i] = dataset.targets[rows[i]];
  }
  return block;
}

namespace {

void append_number(std::string& out, double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  out.append(buf, ptr);
}

}  // namespace

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& feature_names,
               const std::string& target_name, const DataBlock& block) {
  std::string out;
  out.reserve(block.n_rows * (block.n_features + 1) * 8);
  for (const auto& name : feature_names) {
    out += name;
    out += ',';
  }
  out += target_name;
  out += '\n';
  for (std::size_t i = 0; i < block.n_rows; ++i) {
    for (std::size_t f = 0; f < block.n_features; ++f) {
      append_number(out, block.value(i, f));
      out += ',';
    }
    append_number(out, block.targets[i]);
    out += '\n';
  }
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw std::runtime_error("cannot write file: " + path.string());
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
}

}  // namespace subtune
