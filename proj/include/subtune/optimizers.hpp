#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "subtune/dataio.hpp"
#include "subtune/executor.hpp"
#include "subtune/gp.hpp"
#include "subtune/search_space.hpp"

namespace subtune {

// Budget for one tuning run: cumulative trial wallclock and/or a trial cap.
// Wallclock accounting sums the recorded per-trial times, so resumed runs
// make identical stopping decisions.
struct BudgetSpec {
  double total_wallclock_seconds = 0.0;  // <= 0 means unlimited
  std::optional<std::size_t> max_trials;

  void validate() const;
  bool exhausted(double consumed_seconds, std::size_t trials) const;
};

struct EtaParam {
  int value = 3;
  void validate() const;
};

struct Rung {
  std::size_t n_configs = 0;
  double fraction = 1.0;
};

struct BracketPlan {
  int bracket_index = 0;  // s in the schedule
  std::vector<Rung> rungs;

  std::size_t total_trials() const;
};

// Hyperband's bracket table for a fidelity ladder: s_max = floor(log_eta(
// r_max / r_min)) brackets plus the s = 0 one. Each bracket's geometric rung
// fractions are mapped up to the nearest ladder fraction; equal mapped rungs
// deduplicate and the survivor counts n_{i+1} = floor(n_i / eta) follow the
// deduplicated list.
std::vector<BracketPlan> hyperband_schedule(const FidelityLadder& ladder, EtaParam eta);

enum class OptimizerKind { kRandom, kHyperband, kBohb };

std::string to_string(OptimizerKind k);
OptimizerKind optimizer_from_string(std::string_view s);

struct OptimizerOptions {
  OptimizerKind kind = OptimizerKind::kRandom;
  EtaParam eta;
  double rho = 1.0 / 3.0;  // BOHB random-interleave probability
  BudgetSpec budget;
  std::uint64_t seed = 0;
  std::size_t candidate_pool_size = 512;
  bool full_fidelity_only = false;  // random search at r = 1 only

  static OptimizerOptions from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

// Samples (configuration, fidelity) pairs until the budget runs out. The
// fidelity is uniform over the ladder unless full_fidelity_only is set.
std::vector<TrialRecord> run_random_search(const HyperparamSpace& space,
                                           const FidelityLadder& ladder,
                                           const BudgetSpec& budget, TrialRunner& runner,
                                           std::uint64_t seed, bool full_fidelity_only = false);

// Running totals against a BudgetSpec; shared across the brackets of one run.
class BudgetTracker {
 public:
  explicit BudgetTracker(const BudgetSpec& spec) : spec_(&spec) {}

  void add(const TrialRecord& record) {
    consumed_seconds_ += record.total_seconds;
    ++trials_;
  }
  bool exhausted() const { return spec_->exhausted(consumed_seconds_, trials_); }
  std::size_t remaining_trials() const;
  double consumed_seconds() const { return consumed_seconds_; }
  std::size_t trials() const { return trials_; }

 private:
  const BudgetSpec* spec_;
  double consumed_seconds_ = 0.0;
  std::size_t trials_ = 0;
};

// A configuration entering a bracket, with the provenance the trial log keeps.
struct BracketConfig {
  Configuration config;
  std::uint64_t trial_seed = 0;
  std::int64_t ordinal = 0;  // global sampling order; breaks ranking ties
  std::string proposal_source;
};

struct ShOutcome {
  std::vector<TrialRecord> history;
  std::optional<Configuration> survivor;  // absent when the budget cut the bracket short
};

class BracketAborted : public std::runtime_error {
 public:
  BracketAborted(const std::string& what, std::vector<TrialRecord> partial)
      : std::runtime_error(what), partial_history(std::move(partial)) {}

  // Trials the bracket ran before aborting; already persisted by the runner.
  std::vector<TrialRecord> partial_history;
};

// One Successive Halving bracket: evaluate every configuration at each rung,
// rank by score (failures rank as -inf), promote the top n_{i+1} with ties
// broken toward the earlier-sampled configuration. Throws BracketAborted when
// an entire rung fails. A budget tracker, when given, truncates work.
ShOutcome successive_halving(const std::vector<BracketConfig>& configs, const BracketPlan& plan,
                             TrialRunner& runner, BudgetTracker* budget = nullptr);

std::vector<TrialRecord> run_hyperband(const HyperparamSpace& space, const FidelityLadder& ladder,
                                       EtaParam eta, const BudgetSpec& budget, TrialRunner& runner,
                                       std::uint64_t seed);

// Hyperband with surrogate-guided bracket sampling: each new configuration is
// random with probability rho, otherwise the EI argmax of a GP fitted on
// completed trials at the highest fidelity that has >= d+2 of them. Batch
// proposals condition on already-proposed points at the incumbent value so
// one bracket does not collapse onto a single candidate.
std::vector<TrialRecord> run_model_based_hyperband(const HyperparamSpace& space,
                                                   const FidelityLadder& ladder, EtaParam eta,
                                                   double rho, std::size_t candidate_pool_size,
                                                   const BudgetSpec& budget, TrialRunner& runner,
                                                   std::uint64_t seed);

}  // namespace subtune
