#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "subtune/cli.hpp"
#include "subtune/log.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitRuntime = 3;

struct GlobalFlags {
  std::string manifest_path;
  std::string out_dir;
  std::string log_level;
  std::string trainer_cmd;
  double trial_timeout_seconds = -1.0;
  long long seed = -1;
  long long parallelism = -1;
};

void add_common_flags(CLI::App* cmd, GlobalFlags& flags, bool needs_manifest) {
  auto* opt = cmd->add_option("--manifest", flags.manifest_path, "run manifest JSON file");
  if (needs_manifest) opt->required();
  cmd->add_option("--seed", flags.seed, "override the manifest master seed");
  cmd->add_option("--out-dir", flags.out_dir, "override the manifest output directory");
  cmd->add_option("--parallelism", flags.parallelism, "worker pool size");
  cmd->add_option("--log-level", flags.log_level, "debug|info|warn|error|off");
  cmd->add_option("--trainer-cmd", flags.trainer_cmd,
                  "external trainer command (line-delimited JSON protocol)");
  cmd->add_option("--trial-timeout-seconds", flags.trial_timeout_seconds,
                  "kill external trainers after this many seconds");
}

subtune::RunManifest load_with_overrides(const GlobalFlags& flags) {
  subtune::RunManifest manifest = subtune::RunManifest::load(flags.manifest_path);
  if (flags.seed >= 0) {
    manifest.seed = static_cast<std::uint64_t>(flags.seed);
    manifest.optimizer.seed = manifest.seed;
  }
  if (!flags.out_dir.empty()) manifest.out_dir = flags.out_dir;
  if (flags.parallelism > 0) manifest.parallelism = static_cast<std::size_t>(flags.parallelism);
  if (!flags.trainer_cmd.empty()) {
    manifest.trainer.kind = subtune::TrainerBinding::Kind::kExternal;
    manifest.trainer.command = flags.trainer_cmd;
  }
  if (flags.trial_timeout_seconds >= 0.0)
    manifest.trainer.timeout_seconds = flags.trial_timeout_seconds;
  return manifest;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-fidelity hyperparameter tuning with data-subset fidelities"};
  app.require_subcommand(1);

  GlobalFlags flags;

  auto* tune = app.add_subcommand("tune", "run a tuning run from a manifest");
  add_common_flags(tune, flags, true);

  auto* retrain = app.add_subcommand(
      "retrain", "retrain each fidelity's best configuration on the full training split");
  add_common_flags(retrain, flags, true);

  std::vector<std::string> analyze_logs;
  std::string analyze_out;
  auto* analyze = app.add_subcommand("analyze", "produce reports from trial logs");
  analyze->add_option("logs", analyze_logs, "trial log files (JSON lines)")->required();
  analyze->add_option("--out-dir", analyze_out, "report output directory")->required();
  analyze->add_option("--log-level", flags.log_level, "debug|info|warn|error|off");

  subtune::SynthSpec synth_spec;
  std::string synth_task = "regression";
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "generate a synthetic benchmark dataset");
  synth->add_option("--task", synth_task, "regression|binary|multiclass");
  synth->add_option("--rows", synth_spec.n_rows, "number of rows")->required();
  synth->add_option("--features", synth_spec.n_features, "number of features");
  synth->add_option("--noise", synth_spec.noise, "noise level");
  synth->add_option("--seed", synth_spec.seed, "generator seed");
  synth->add_option("--classes", synth_spec.n_classes, "class count (multiclass)");
  synth->add_option("--out", synth_out, "output CSV path")->required();

  auto* bench = app.add_subcommand(
      "bench", "synth + tune with random/hyperband/bohb + analyze, in one run");
  add_common_flags(bench, flags, true);

  CLI11_PARSE(app, argc, argv);

  try {
    if (!flags.log_level.empty()) subtune::logging::set_level(flags.log_level);

    if (tune->parsed()) {
      subtune::cmd_tune(load_with_overrides(flags));
      return kExitOk;
    }
    if (retrain->parsed()) {
      const auto records = subtune::cmd_retrain(load_with_overrides(flags));
      std::cout << "retrained " << records.size() << " configurations\n";
      return kExitOk;
    }
    if (analyze->parsed()) {
      std::vector<std::filesystem::path> paths(analyze_logs.begin(), analyze_logs.end());
      subtune::cmd_analyze(paths, analyze_out);
      std::cout << "reports written to " << analyze_out << "\n";
      return kExitOk;
    }
    if (synth->parsed()) {
      synth_spec.task = subtune::task_from_string(synth_task);
      synth_spec.validate();
      subtune::cmd_synth(synth_spec, synth_out);
      std::cout << "wrote " << synth_out << "\n";
      return kExitOk;
    }
    if (bench->parsed()) {
      subtune::cmd_bench(load_with_overrides(flags));
      return kExitOk;
    }
  } catch (const subtune::ManifestError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}
