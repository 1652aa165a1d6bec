#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "subtune/analysis.hpp"
#include "subtune/dataio.hpp"
#include "subtune/executor.hpp"
#include "subtune/optimizers.hpp"
#include "subtune/synth.hpp"

namespace subtune {

// Manifest validation failures exit with code 2 and name the field.
class ManifestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// One reproducible tuning run: data source, protocol, optimizer, seeds, and
// where everything lands. Loaded from a JSON file; flags override fields.
struct RunManifest {
  std::optional<std::filesystem::path> dataset_path;
  std::optional<SynthSpec> synthetic;
  std::string target_column = "target";
  Task task = Task::kRegression;
  MetricKind metric = MetricKind::kR2;
  SplitSpec split;  // seed filled from the master seed unless given
  FidelityLadder ladder = FidelityLadder::paper_default();
  OptimizerOptions optimizer;
  std::uint64_t seed = 0;
  std::filesystem::path out_dir;
  TrainerBinding trainer;
  std::size_t parallelism = 1;

  static RunManifest from_json(const nlohmann::json& j);
  static RunManifest load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
  void validate() const;

  std::uint64_t split_seed() const;
  std::uint64_t subsample_seed() const;
  std::filesystem::path trial_log_path() const { return out_dir / "trials.jsonl"; }
  std::filesystem::path retrain_log_path() const { return out_dir / "retrained.jsonl"; }
};

// Loads or generates the manifest's dataset.
Dataset load_manifest_dataset(const RunManifest& manifest);

struct TuneOutcome {
  std::vector<TrialRecord> history;
  std::optional<TrialRecord> incumbent;
  std::filesystem::path log_path;
};

// Runs the manifest's optimizer end to end, persisting (and resuming from)
// out_dir/trials.jsonl, and writes out_dir/summary.json.
TuneOutcome cmd_tune(const RunManifest& manifest);

// Retrains each fidelity's best configuration at r = 1; records append to
// out_dir/retrained.jsonl, linked by source fidelity. Idempotent per log.
std::vector<TrialRecord> cmd_retrain(const RunManifest& manifest);

// Runs every applicable analysis over the given trial logs (with notices for
// the skipped ones) and emits reports to out_dir.
ReportSet cmd_analyze(const std::vector<std::filesystem::path>& log_paths,
                      const std::filesystem::path& out_dir);

void cmd_synth(const SynthSpec& spec, const std::filesystem::path& out_path);

// synth + tune x {random, hyperband, bohb} + analyze, one invocation.
ReportSet cmd_bench(const RunManifest& manifest);

}  // namespace subtune
