#include "subtune/cli.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include <nlohmann/json.hpp>

#include "subtune/log.hpp"
#include "subtune/rng.hpp"

namespace subtune {

namespace {

constexpr std::uint64_t kSplitSeedTag = 0x5917;
constexpr std::uint64_t kSubsampleSeedTag = 0x5AB5;

[[noreturn]] void manifest_fail(const std::string& field, const std::string& what) {
  throw ManifestError("manifest field '" + field + "': " + what);
}

}  // namespace

RunManifest RunManifest::from_json(const nlohmann::json& j) {
  RunManifest m;
  try {
    if (j.contains("dataset")) {
      const auto& ds = j["dataset"];
      if (ds.contains("path")) m.dataset_path = ds["path"].get<std::string>();
      if (ds.contains("synthetic")) m.synthetic = SynthSpec::from_json(ds["synthetic"]);
      if (ds.contains("target_column")) m.target_column = ds["target_column"].get<std::string>();
    }
  } catch (const ManifestError&) {
    throw;
  } catch (const std::exception& e) {
    manifest_fail("dataset", e.what());
  }

  try {
    if (j.contains("task")) m.task = task_from_string(j["task"].get<std::string>());
  } catch (const std::exception& e) {
    manifest_fail("task", e.what());
  }
  try {
    m.metric = j.contains("metric") ? metric_from_string(j["metric"].get<std::string>())
                                    : default_metric_for(m.task);
  } catch (const std::exception& e) {
    manifest_fail("metric", e.what());
  }

  try {
    if (j.contains("split")) {
      const auto& s = j["split"];
      m.split.train_frac = s.value("train", 0.8);
      m.split.valid_frac = s.value("valid", 0.1);
      m.split.test_frac = s.value("test", 0.1);
      if (s.contains("seed")) m.split.seed = s["seed"].get<std::uint64_t>();
    }
  } catch (const std::exception& e) {
    manifest_fail("split", e.what());
  }

  try {
    if (j.contains("ladder")) m.ladder.fractions = j["ladder"].get<std::vector<double>>();
  } catch (const std::exception& e) {
    manifest_fail("ladder", e.what());
  }

  try {
    if (j.contains("optimizer")) m.optimizer = OptimizerOptions::from_json(j["optimizer"]);
  } catch (const std::exception& e) {
    manifest_fail("optimizer", e.what());
  }

  try {
    if (j.contains("seed")) m.seed = j["seed"].get<std::uint64_t>();
  } catch (const std::exception& e) {
    manifest_fail("seed", e.what());
  }
  if (!j.contains("optimizer") || !j["optimizer"].contains("seed")) m.optimizer.seed = m.seed;

  try {
    if (j.contains("out_dir")) m.out_dir = j["out_dir"].get<std::string>();
  } catch (const std::exception& e) {
    manifest_fail("out_dir", e.what());
  }

  try {
    if (j.contains("trainer")) {
      const auto& t = j["trainer"];
      const std::string kind = t.value("kind", "builtin");
      if (kind == "builtin") {
        m.trainer.kind = TrainerBinding::Kind::kBuiltin;
      } else if (kind == "external") {
        m.trainer.kind = TrainerBinding::Kind::kExternal;
        m.trainer.command = t.value("command", "");
        m.trainer.timeout_seconds = t.value("timeout_seconds", 60.0);
      } else {
        manifest_fail("trainer.kind", "must be 'builtin' or 'external'");
      }
    }
  } catch (const ManifestError&) {
    throw;
  } catch (const std::exception& e) {
    manifest_fail("trainer", e.what());
  }

  try {
    if (j.contains("parallelism")) m.parallelism = j["parallelism"].get<std::size_t>();
  } catch (const std::exception& e) {
    manifest_fail("parallelism", e.what());
  }
  return m;
}

RunManifest RunManifest::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ManifestError("cannot open manifest file: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ManifestError("manifest is not valid JSON: " + std::string(e.what()));
  }
  return from_json(j);
}

nlohmann::json RunManifest::to_json() const {
  nlohmann::json dataset = nlohmann::json::object();
  if (dataset_path) dataset["path"] = dataset_path->string();
  if (synthetic) dataset["synthetic"] = synthetic->to_json();
  dataset["target_column"] = target_column;

  nlohmann::json trainer_json{{"kind", trainer.kind == TrainerBinding::Kind::kBuiltin
                                           ? "builtin"
                                           : "external"}};
  if (trainer.kind == TrainerBinding::Kind::kExternal) {
    trainer_json["command"] = trainer.command;
    trainer_json["timeout_seconds"] = trainer.timeout_seconds;
  }

  return {{"dataset", std::move(dataset)},
          {"task", to_string(task)},
          {"metric", to_string(metric)},
          {"split",
           {{"train", split.train_frac},
            {"valid", split.valid_frac},
            {"test", split.test_frac},
            {"seed", split_seed()}}},
          {"ladder", ladder.fractions},
          {"optimizer", optimizer.to_json()},
          {"seed", seed},
          {"out_dir", out_dir.string()},
          {"trainer", std::move(trainer_json)},
          {"parallelism", parallelism}};
}

void RunManifest::validate() const {
  if (!dataset_path && !synthetic)
    manifest_fail("dataset", "either a path or a synthetic spec is required");
  if (dataset_path && !std::filesystem::exists(*dataset_path))
    manifest_fail("dataset.path", "file does not exist: " + dataset_path->string());
  if (out_dir.empty()) manifest_fail("out_dir", "required");
  try {
    ladder.validate();
  } catch (const std::exception& e) {
    manifest_fail("ladder", e.what());
  }
  try {
    split.validate();
  } catch (const std::exception& e) {
    manifest_fail("split", e.what());
  }
  try {
    optimizer.budget.validate();
    optimizer.eta.validate();
  } catch (const std::exception& e) {
    manifest_fail("optimizer", e.what());
  }
  try {
    trainer.validate(task, metric);
  } catch (const std::exception& e) {
    manifest_fail("trainer", e.what());
  }
}

std::uint64_t RunManifest::split_seed() const {
  return split.seed != 0 ? split.seed : derive_seed(seed, kSplitSeedTag);
}

std::uint64_t RunManifest::subsample_seed() const {
  // One subsample permutation per tuning run: every configuration at a given
  // fidelity sees the same rows, so rung rankings compare like against like.
  return derive_seed(seed, kSubsampleSeedTag);
}

Dataset load_manifest_dataset(const RunManifest& manifest) {
  Dataset ds;
  if (manifest.dataset_path) {
    ds = load_table(*manifest.dataset_path, manifest.task, manifest.target_column);
  } else {
    SynthSpec spec = *manifest.synthetic;
    spec.task = manifest.task;
    ds = make_synthetic(spec);
  }
  if (ds.n_rows() < 10) throw ManifestError("manifest field 'dataset': needs at least 10 rows");
  return ds;
}

namespace {

Executor make_executor(const RunManifest& manifest, const Dataset& dataset, TrialLog* log) {
  DataContext context;
  context.dataset = &dataset;
  context.split_seed = manifest.split_seed();
  context.subsample_seed = manifest.subsample_seed();
  SplitSpec split_spec = manifest.split;
  split_spec.seed = context.split_seed;
  context.split = split(dataset, split_spec);
  context.task = manifest.task;
  context.metric = manifest.metric;
  return Executor(std::move(context), manifest.trainer, log, manifest.parallelism);
}

std::vector<TrialRecord> dispatch_optimizer(const RunManifest& manifest,
                                            const HyperparamSpace& space, Executor& executor) {
  const auto& opt = manifest.optimizer;
  switch (opt.kind) {
    case OptimizerKind::kRandom:
      return run_random_search(space, manifest.ladder, opt.budget, executor, opt.seed,
                               opt.full_fidelity_only);
    case OptimizerKind::kHyperband:
      return run_hyperband(space, manifest.ladder, opt.eta, opt.budget, executor, opt.seed);
    case OptimizerKind::kBohb:
      return run_model_based_hyperband(space, manifest.ladder, opt.eta, opt.rho,
                                       opt.candidate_pool_size, opt.budget, executor, opt.seed);
  }
  throw std::logic_error("unreachable");
}

}  // namespace

TuneOutcome cmd_tune(const RunManifest& manifest) {
  manifest.validate();
  std::filesystem::create_directories(manifest.out_dir);
  const Dataset dataset = load_manifest_dataset(manifest);

  TrialLog log(manifest.trial_log_path());
  Executor executor = make_executor(manifest, dataset, &log);

  auto previous = TrialLog::load(manifest.trial_log_path());
  if (!previous.empty()) {
    logging::info("resuming from " + std::to_string(previous.size()) + " logged trials");
    executor.set_replay(std::move(previous));
  }

  const HyperparamSpace space = default_xgboost_space();
  TuneOutcome outcome;
  outcome.history = dispatch_optimizer(manifest, space, executor);
  outcome.incumbent = incumbent(outcome.history);
  outcome.log_path = manifest.trial_log_path();

  nlohmann::json summary{{"optimizer", to_string(manifest.optimizer.kind)},
                         {"n_trials", outcome.history.size()},
                         {"log", outcome.log_path.string()}};
  double consumed = 0.0;
  for (const auto& r : outcome.history) consumed += r.total_seconds;
  summary["consumed_seconds"] = consumed;
  if (outcome.incumbent) {
    summary["incumbent"] = {{"config", outcome.incumbent->config.to_json()},
                            {"score", outcome.incumbent->score->value},
                            {"fraction", outcome.incumbent->fraction},
                            {"trial_id", outcome.incumbent->id}};
  }
  std::ofstream summary_out(manifest.out_dir / "summary.json", std::ios::trunc);
  summary_out << summary.dump(2) << "\n";

  if (outcome.incumbent) {
    std::cout << "incumbent score " << outcome.incumbent->score->value << " at fraction "
              << outcome.incumbent->fraction << "\n"
              << "incumbent config " << outcome.incumbent->config.to_json().dump() << "\n";
  } else {
    std::cout << "no completed trials\n";
  }
  return outcome;
}

std::vector<TrialRecord> cmd_retrain(const RunManifest& manifest) {
  manifest.validate();
  const auto records = TrialLog::load(manifest.trial_log_path());
  if (records.empty()) throw std::runtime_error("empty log: " + manifest.trial_log_path().string());

  // Best completed configuration per fidelity, lowest fraction first.
  std::map<double, const TrialRecord*> best_at;
  for (const auto& r : records) {
    if (!r.completed() || !r.score) continue;
    auto it = best_at.find(r.fraction);
    if (it == best_at.end() || r.score->value > it->second->score->value)
      best_at[r.fraction] = &r;
  }
  if (best_at.empty()) throw std::runtime_error("nothing to retrain: no completed trials in log");

  const Dataset dataset = load_manifest_dataset(manifest);
  TrialLog retrain_log(manifest.retrain_log_path());
  Executor executor = make_executor(manifest, dataset, &retrain_log);
  auto previous = TrialLog::load(manifest.retrain_log_path());
  if (!previous.empty()) executor.set_replay(std::move(previous));

  std::vector<TrialRecord> retrained;
  for (const auto& [fraction, source] : best_at) {
    retrained.push_back(
        executor.retrain_at_full(source->config, source->trial_seed, fraction));
  }
  return retrained;
}

ReportSet cmd_analyze(const std::vector<std::filesystem::path>& log_paths,
                      const std::filesystem::path& out_dir) {
  if (log_paths.empty()) throw std::invalid_argument("analyze needs at least one trial log");

  std::map<std::string, std::vector<TrialRecord>> logs;
  std::vector<TrialRecord> merged, retrained;
  for (const auto& path : log_paths) {
    auto records = TrialLog::load(path);
    if (records.empty()) {
      logging::warn("log " + path.string() + " is empty; skipping");
      continue;
    }
    for (const auto& r : records) {
      if (r.annotations.source_fidelity)
        retrained.push_back(r);
      else
        merged.push_back(r);
    }
    logs[path.stem().string()] = std::move(records);
  }
  if (merged.empty() && retrained.empty())
    throw std::invalid_argument("no trial records found in the given logs");

  ReportSet reports;
  try {
    reports.runtime_fit = fit_runtime_line(merged);
    for (const auto& r : merged)
      if (r.completed()) reports.runtime_points.emplace_back(r.fraction, r.train_seconds);
  } catch (const std::exception& e) {
    reports.notices.push_back(std::string("runtime fit skipped: ") + e.what());
  }
  try {
    reports.ranking = ranking_analysis(merged);
  } catch (const std::exception& e) {
    reports.notices.push_back(std::string("ranking analysis skipped: ") + e.what());
  }
  try {
    reports.relative = relative_performance(merged, retrained);
  } catch (const std::exception& e) {
    reports.notices.push_back(std::string("relative performance skipped: ") + e.what());
  }
  reports.wallclock = cumulative_wallclock(logs);

  for (const auto& notice : reports.notices) logging::info(notice);
  emit_report(reports, out_dir);
  return reports;
}

void cmd_synth(const SynthSpec& spec, const std::filesystem::path& out_path) {
  spec.validate();
  if (out_path.has_parent_path()) std::filesystem::create_directories(out_path.parent_path());
  write_synthetic_csv(spec, out_path);
}

ReportSet cmd_bench(const RunManifest& manifest) {
  manifest.validate();
  std::filesystem::create_directories(manifest.out_dir);

  std::vector<std::filesystem::path> logs;
  for (OptimizerKind kind :
       {OptimizerKind::kRandom, OptimizerKind::kHyperband, OptimizerKind::kBohb}) {
    RunManifest sub = manifest;
    sub.optimizer.kind = kind;
    sub.out_dir = manifest.out_dir / to_string(kind);
    logging::info("bench: tuning with " + to_string(kind));
    TuneOutcome outcome = cmd_tune(sub);
    logs.push_back(outcome.log_path);
  }
  return cmd_analyze(logs, manifest.out_dir / "reports");
}

}  // namespace subtune
