#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "subtune/dataio.hpp"
#include "subtune/learner.hpp"
#include "subtune/metrics.hpp"
#include "subtune/search_space.hpp"

namespace subtune {

enum class TrialStatus { kCompleted, kFailed };

struct TrialAnnotations {
  std::optional<int> bracket;
  std::optional<int> rung;
  std::string proposal_source;           // "random" | "model" | "" when n/a
  std::optional<double> source_fidelity; // set on retraining records
  std::int64_t config_ordinal = -1;      // sampling order, used for tie-breaks
};

// One evaluation f(x, r): everything needed to replay it plus what it cost.
struct TrialRecord {
  std::int64_t id = -1;
  Configuration config;
  double fraction = 1.0;
  std::uint64_t split_seed = 0;
  std::uint64_t subsample_seed = 0;
  std::uint64_t trial_seed = 0;
  std::optional<EvaluationScore> score;  // present iff completed
  double train_seconds = 0.0;
  double total_seconds = 0.0;
  TrialStatus status = TrialStatus::kCompleted;
  std::string failure_reason;
  TrialAnnotations annotations;
  std::string timestamp;  // ISO-8601 UTC, informational only

  bool completed() const { return status == TrialStatus::kCompleted; }
  double score_or(double fallback) const {
    return completed() && score ? score->value : fallback;
  }

  nlohmann::json to_json() const;
  static TrialRecord from_json(const nlohmann::json& j);
};

// Append-only JSON-lines store. Each append is flushed before returning, so a
// crash can lose at most a partially written final line, which load()
// tolerates.
class TrialLog {
 public:
  explicit TrialLog(std::filesystem::path path);

  void append(const TrialRecord& record);
  const std::filesystem::path& path() const { return path_; }

  static std::vector<TrialRecord> load(const std::filesystem::path& path);

 private:
  std::filesystem::path path_;
  std::mutex mutex_;
};

struct TrialSpec {
  Configuration config;
  double fraction = 1.0;
  std::uint64_t trial_seed = 0;
  TrialAnnotations annotations;
};

// What optimizers talk to. The production implementation (Executor) trains
// real models; tests and the optimizer benchmark use synthetic runners.
class TrialRunner {
 public:
  virtual ~TrialRunner() = default;
  virtual TrialRecord run_trial(const TrialSpec& spec) = 0;
  // Evaluates a rung of trials, possibly in parallel; results are returned
  // and persisted in submission order.
  virtual std::vector<TrialRecord> run_rung(const std::vector<TrialSpec>& specs) = 0;
  virtual std::size_t parallelism() const { return 1; }
};

struct TrainerBinding {
  enum class Kind { kBuiltin, kExternal };
  Kind kind = Kind::kBuiltin;
  std::string command;           // external only; run through /bin/sh -c
  double timeout_seconds = 60.0; // external only; <= 0 disables the timeout

  void validate(Task task, MetricKind metric) const;
};

class ExternalTrainerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Spawns the command, writes exactly one line-delimited JSON request to its
// stdin, reads exactly one JSON response line from its stdout, and enforces
// the timeout (the process is killed on expiry).
nlohmann::json external_trainer_roundtrip(const std::string& command,
                                          const nlohmann::json& request,
                                          double timeout_seconds);

// Everything a trial needs besides the configuration and the fraction.
struct DataContext {
  const Dataset* dataset = nullptr;
  Split split;
  std::uint64_t split_seed = 0;
  std::uint64_t subsample_seed = 0;
  Task task = Task::kRegression;
  MetricKind metric = MetricKind::kR2;
};

// Runs trials against the builtin learner or an external trainer process,
// appending every started trial (including failures) to the log before
// returning it. Supports replaying an existing log so interrupted runs
// resume without redoing completed work.
class Executor : public TrialRunner {
 public:
  Executor(DataContext context, TrainerBinding binding, TrialLog* log,
           std::size_t parallelism = 1);

  // Records from a previous run of the same manifest; consumed positionally
  // as long as (config, fraction, seeds) keep matching.
  void set_replay(std::vector<TrialRecord> records);

  TrialRecord run_trial(const TrialSpec& spec) override;
  std::vector<TrialRecord> run_rung(const std::vector<TrialSpec>& specs) override;
  std::size_t parallelism() const override { return parallelism_; }

  // Trains spec.config at r = 1, annotated with the fidelity it came from.
  TrialRecord retrain_at_full(const Configuration& config, std::uint64_t trial_seed,
                              double source_fidelity);

  const std::vector<TrialRecord>& history() const { return history_; }
  std::size_t replay_remaining() const { return replay_.size(); }

 private:
  TrialRecord execute(const TrialSpec& spec, std::int64_t id);
  TrialRecord execute_builtin(const TrialSpec& spec, std::int64_t id);
  TrialRecord execute_external(const TrialSpec& spec, std::int64_t id);
  std::optional<TrialRecord> try_replay(const TrialSpec& spec);
  void record(TrialRecord& rec);

  DataContext context_;
  TrainerBinding binding_;
  TrialLog* log_;
  std::size_t parallelism_;
  std::int64_t next_id_ = 0;
  std::deque<TrialRecord> replay_;
  std::vector<TrialRecord> history_;
  DataBlock valid_block_;
  std::filesystem::path scratch_dir_;
};

// Best completed record by score; ties go to the lower id. Empty when no
// completed trials exist.
std::optional<TrialRecord> incumbent(const std::vector<TrialRecord>& records);

}  // namespace subtune
