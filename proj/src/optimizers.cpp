#include "subtune/optimizers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include <nlohmann/json.hpp>

#include "subtune/log.hpp"
#include "subtune/rng.hpp"

namespace subtune {

namespace {

// Stream tags for seed derivation; shared by the schedulers so that the
// model-based variant with rho = 1 reproduces plain Hyperband exactly.
constexpr std::uint64_t kConfigStream = 0xC0F1;
constexpr std::uint64_t kTrialStream = 0x7121;
constexpr std::uint64_t kFidelityStream = 0xF1DE;
constexpr std::uint64_t kCoinStream = 0xC011;
constexpr std::uint64_t kProposeStream = 0x9901;
constexpr std::uint64_t kGpFitStream = 0x6F17;

}  // namespace

void BudgetSpec::validate() const {
  const bool has_wallclock = total_wallclock_seconds > 0.0;
  const bool has_trials = max_trials.has_value() && *max_trials > 0;
  if (!has_wallclock && !has_trials)
    throw std::invalid_argument("budget must set a positive wallclock or trial limit");
  if (max_trials && *max_trials == 0)
    throw std::invalid_argument("max_trials must be positive when set");
}

bool BudgetSpec::exhausted(double consumed_seconds, std::size_t trials) const {
  if (total_wallclock_seconds > 0.0 && consumed_seconds >= total_wallclock_seconds) return true;
  if (max_trials && trials >= *max_trials) return true;
  return false;
}

void EtaParam::validate() const {
  if (value < 2) throw std::invalid_argument("eta must be >= 2");
}

std::size_t BracketPlan::total_trials() const {
  std::size_t total = 0;
  for (const auto& rung : rungs) total += rung.n_configs;
  return total;
}

std::size_t BudgetTracker::remaining_trials() const {
  if (!spec_->max_trials) return std::numeric_limits<std::size_t>::max();
  return *spec_->max_trials > trials_ ? *spec_->max_trials - trials_ : 0;
}

std::vector<BracketPlan> hyperband_schedule(const FidelityLadder& ladder, EtaParam eta) {
  ladder.validate();
  eta.validate();
  if (ladder.fractions.size() < 2)
    throw std::invalid_argument("hyperband needs a ladder with more than one fraction");

  const double r_min = ladder.min();
  const double r_max = 1.0;
  const int s_max = static_cast<int>(
      std::floor(std::log(r_max / r_min) / std::log(static_cast<double>(eta.value)) + 1e-9));

  auto pow_int = [](int base, int exp) {
    long long v = 1;
    for (int i = 0; i < exp; ++i) v *= base;
    return v;
  };
  auto map_up = [&](double fraction) {
    for (double f : ladder.fractions)
      if (f >= fraction - 1e-12) return f;
    return 1.0;
  };

  std::vector<BracketPlan> plans;
  for (int s = s_max; s >= 0; --s) {
    // n0 = ceil((s_max+1)/(s+1) * eta^s), kept in integer arithmetic.
    const long long numerator = static_cast<long long>(s_max + 1) * pow_int(eta.value, s);
    const long long n0 = (numerator + s) / (s + 1);

    std::vector<double> fractions;
    for (int i = 0; i <= s; ++i) {
      const double geometric = r_max * std::pow(static_cast<double>(eta.value), i - s);
      const double mapped = map_up(geometric);
      if (fractions.empty() || mapped > fractions.back()) fractions.push_back(mapped);
    }

    BracketPlan plan;
    plan.bracket_index = s;
    long long n = n0;
    for (double fraction : fractions) {
      if (n < 1) break;
      plan.rungs.push_back({static_cast<std::size_t>(n), fraction});
      n = n / eta.value;
    }
    plans.push_back(std::move(plan));
  }
  return plans;
}

std::string to_string(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::kRandom: return "random";
    case OptimizerKind::kHyperband: return "hyperband";
    case OptimizerKind::kBohb: return "bohb";
  }
  return "random";
}

OptimizerKind optimizer_from_string(std::string_view s) {
  if (s == "random") return OptimizerKind::kRandom;
  if (s == "hyperband") return OptimizerKind::kHyperband;
  if (s == "bohb") return OptimizerKind::kBohb;
  throw std::invalid_argument("unknown optimizer: " + std::string(s));
}

OptimizerOptions OptimizerOptions::from_json(const nlohmann::json& j) {
  OptimizerOptions opts;
  opts.kind = optimizer_from_string(j.value("optimizer", "random"));
  opts.eta.value = j.value("eta", 3);
  opts.rho = j.value("rho", 1.0 / 3.0);
  opts.budget.total_wallclock_seconds = j.value("budget_seconds", 0.0);
  if (j.contains("max_trials")) opts.budget.max_trials = j["max_trials"].get<std::size_t>();
  opts.seed = j.value("seed", std::uint64_t{0});
  opts.candidate_pool_size = j.value("candidate_pool_size", std::size_t{512});
  opts.full_fidelity_only = j.value("full_fidelity_only", false);
  opts.eta.validate();
  opts.budget.validate();
  if (opts.rho < 0.0 || opts.rho > 1.0)
    throw std::invalid_argument("rho must be in [0, 1]");
  return opts;
}

nlohmann::json OptimizerOptions::to_json() const {
  nlohmann::json j{{"optimizer", to_string(kind)},
                   {"eta", eta.value},
                   {"rho", rho},
                   {"seed", seed},
                   {"candidate_pool_size", candidate_pool_size},
                   {"full_fidelity_only", full_fidelity_only}};
  if (budget.total_wallclock_seconds > 0.0) j["budget_seconds"] = budget.total_wallclock_seconds;
  if (budget.max_trials) j["max_trials"] = *budget.max_trials;
  return j;
}

std::vector<TrialRecord> run_random_search(const HyperparamSpace& space,
                                           const FidelityLadder& ladder,
                                           const BudgetSpec& budget, TrialRunner& runner,
                                           std::uint64_t seed, bool full_fidelity_only) {
  budget.validate();
  ladder.validate();
  BudgetTracker tracker(budget);
  std::vector<TrialRecord> history;
  std::int64_t ordinal = 0;

  while (!tracker.exhausted()) {
    const std::size_t wave =
        std::max<std::size_t>(1, std::min(runner.parallelism(), tracker.remaining_trials()));
    std::vector<TrialSpec> specs;
    specs.reserve(wave);
    for (std::size_t w = 0; w < wave; ++w, ++ordinal) {
      TrialSpec spec;
      spec.config = sample_config(
          space, derive_seed(seed, kConfigStream, static_cast<std::uint64_t>(ordinal)));
      if (full_fidelity_only) {
        spec.fraction = 1.0;
      } else {
        Rng fid_rng(derive_seed(seed, kFidelityStream, static_cast<std::uint64_t>(ordinal)));
        spec.fraction = ladder.fractions[fid_rng.below(ladder.fractions.size())];
      }
      spec.trial_seed = derive_seed(seed, kTrialStream, static_cast<std::uint64_t>(ordinal));
      spec.annotations.config_ordinal = ordinal;
      spec.annotations.proposal_source = "random";
      specs.push_back(std::move(spec));
    }
    for (auto& record : runner.run_rung(specs)) {
      tracker.add(record);
      history.push_back(std::move(record));
    }
  }
  return history;
}

ShOutcome successive_halving(const std::vector<BracketConfig>& configs, const BracketPlan& plan,
                             TrialRunner& runner, BudgetTracker* budget) {
  if (plan.rungs.empty()) throw std::invalid_argument("bracket plan has no rungs");
  if (configs.size() != plan.rungs.front().n_configs)
    throw std::invalid_argument("expected " + std::to_string(plan.rungs.front().n_configs) +
                                " configurations for this bracket, got " +
                                std::to_string(configs.size()));

  ShOutcome outcome;
  std::vector<std::size_t> current(configs.size());
  std::iota(current.begin(), current.end(), std::size_t{0});

  for (std::size_t rung_idx = 0; rung_idx < plan.rungs.size(); ++rung_idx) {
    const Rung& rung = plan.rungs[rung_idx];
    if (budget != nullptr && budget->exhausted()) return outcome;

    std::vector<std::size_t> evaluating(current.begin(),
                                        current.begin() + std::min(current.size(), rung.n_configs));
    // A trial cap can cut a rung short; promotion then stops with it.
    bool truncated = false;
    if (budget != nullptr && evaluating.size() > budget->remaining_trials()) {
      evaluating.resize(budget->remaining_trials());
      truncated = true;
    }
    if (evaluating.empty()) return outcome;

    std::vector<TrialSpec> specs;
    specs.reserve(evaluating.size());
    for (std::size_t idx : evaluating) {
      TrialSpec spec;
      spec.config = configs[idx].config;
      spec.fraction = rung.fraction;
      spec.trial_seed = configs[idx].trial_seed;
      spec.annotations.bracket = plan.bracket_index;
      spec.annotations.rung = static_cast<int>(rung_idx);
      spec.annotations.config_ordinal = configs[idx].ordinal;
      spec.annotations.proposal_source = configs[idx].proposal_source;
      specs.push_back(std::move(spec));
    }

    std::vector<TrialRecord> records = runner.run_rung(specs);
    std::vector<double> scores(records.size());
    std::size_t n_failed = 0;
    for (std::size_t i = 0; i < records.size(); ++i) {
      scores[i] = records[i].score_or(-std::numeric_limits<double>::infinity());
      if (!records[i].completed()) ++n_failed;
      if (budget != nullptr) budget->add(records[i]);
      outcome.history.push_back(std::move(records[i]));
    }
    if (truncated) return outcome;

    if (n_failed == evaluating.size())
      throw BracketAborted("bracket " + std::to_string(plan.bracket_index) + " rung " +
                               std::to_string(rung_idx) + ": all " +
                               std::to_string(evaluating.size()) + " trials failed",
                           std::move(outcome.history));

    // Rank by score descending, earlier-sampled configuration first on ties.
    std::vector<std::size_t> order(evaluating.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (scores[a] != scores[b]) return scores[a] > scores[b];
      return configs[evaluating[a]].ordinal < configs[evaluating[b]].ordinal;
    });

    const std::size_t keep = rung_idx + 1 < plan.rungs.size()
                                 ? plan.rungs[rung_idx + 1].n_configs
                                 : 1;
    std::vector<std::size_t> promoted;
    for (std::size_t i = 0; i < std::min(keep, order.size()); ++i)
      promoted.push_back(evaluating[order[i]]);
    current = std::move(promoted);

    if (rung_idx + 1 == plan.rungs.size() && !current.empty())
      outcome.survivor = configs[current.front()].config;
  }
  return outcome;
}

namespace {

struct HyperbandLoop {
  const HyperparamSpace& space;
  const std::vector<BracketPlan>& plans;
  TrialRunner& runner;
  BudgetTracker tracker;
  std::uint64_t seed;
  std::int64_t next_ordinal = 0;
  std::vector<TrialRecord> history;

  // sample_fn(ordinal) -> BracketConfig provides the per-scheduler sampling.
  template <class SampleFn>
  void run(SampleFn&& sample_fn) {
    while (!tracker.exhausted()) {
      const std::size_t trials_before_cycle = tracker.trials();
      for (const auto& plan : plans) {
        if (tracker.exhausted()) break;
        std::vector<BracketConfig> configs;
        configs.reserve(plan.rungs.front().n_configs);
        for (std::size_t i = 0; i < plan.rungs.front().n_configs; ++i)
          configs.push_back(sample_fn(next_ordinal++));
        try {
          ShOutcome outcome = successive_halving(configs, plan, runner, &tracker);
          std::move(outcome.history.begin(), outcome.history.end(), std::back_inserter(history));
        } catch (BracketAborted& e) {
          logging::warn(std::string("bracket aborted: ") + e.what());
          std::move(e.partial_history.begin(), e.partial_history.end(),
                    std::back_inserter(history));
        }
      }
      if (tracker.trials() == trials_before_cycle) break;  // nothing ran; avoid spinning
    }
  }
};

BracketConfig random_bracket_config(const HyperparamSpace& space, std::uint64_t seed,
                                    std::int64_t ordinal) {
  BracketConfig bc;
  bc.config =
      sample_config(space, derive_seed(seed, kConfigStream, static_cast<std::uint64_t>(ordinal)));
  bc.trial_seed = derive_seed(seed, kTrialStream, static_cast<std::uint64_t>(ordinal));
  bc.ordinal = ordinal;
  bc.proposal_source = "random";
  return bc;
}

}  // namespace

std::vector<TrialRecord> run_hyperband(const HyperparamSpace& space, const FidelityLadder& ladder,
                                       EtaParam eta, const BudgetSpec& budget, TrialRunner& runner,
                                       std::uint64_t seed) {
  budget.validate();
  const auto plans = hyperband_schedule(ladder, eta);
  HyperbandLoop loop{space, plans, runner, BudgetTracker(budget), seed};
  loop.run([&](std::int64_t ordinal) { return random_bracket_config(space, seed, ordinal); });
  return std::move(loop.history);
}

std::vector<TrialRecord> run_model_based_hyperband(const HyperparamSpace& space,
                                                   const FidelityLadder& ladder, EtaParam eta,
                                                   double rho, std::size_t candidate_pool_size,
                                                   const BudgetSpec& budget, TrialRunner& runner,
                                                   std::uint64_t seed) {
  budget.validate();
  if (rho < 0.0 || rho > 1.0) throw std::invalid_argument("rho must be in [0, 1]");
  const auto plans = hyperband_schedule(ladder, eta);
  const std::size_t dim = space.size();
  const std::size_t min_observations = dim + 2;

  HyperbandLoop loop{space, plans, runner, BudgetTracker(budget), seed};
  std::int64_t bracket_counter = 0;

  // Each bracket fits one surrogate on the history collected so far, then
  // proposals within the bracket condition on constant-liar pseudo-points.
  SurrogateState bracket_state;
  bool bracket_state_ready = false;

  auto prepare_bracket_state = [&]() {
    bracket_state = SurrogateState();
    bracket_state_ready = false;
    std::map<double, std::vector<const TrialRecord*>> by_fraction;
    for (const auto& rec : loop.history)
      if (rec.completed() && rec.score) by_fraction[rec.fraction].push_back(&rec);
    for (auto it = by_fraction.rbegin(); it != by_fraction.rend(); ++it) {
      if (it->second.size() < min_observations) continue;
      const auto& recs = it->second;
      // Cap at the most recent 512 observations to bound the fit cost.
      const std::size_t start = recs.size() > 512 ? recs.size() - 512 : 0;
      for (std::size_t i = start; i < recs.size(); ++i)
        bracket_state.add(to_unit_cube(space, recs[i]->config), recs[i]->score->value);
      try {
        fit_hyperparameters(bracket_state,
                            derive_seed(seed, kGpFitStream,
                                        static_cast<std::uint64_t>(bracket_counter)));
        bracket_state_ready = true;
      } catch (const std::exception& e) {
        logging::warn(std::string("surrogate fit failed; bracket falls back to random: ") +
                      e.what());
      }
      return;
    }
  };

  std::size_t configs_left_in_bracket = 0;
  loop.run([&](std::int64_t ordinal) {
    if (configs_left_in_bracket == 0) {
      // New bracket starts: refresh the surrogate and the countdown.
      std::size_t bracket_n0 =
          plans[static_cast<std::size_t>(bracket_counter % static_cast<std::int64_t>(plans.size()))]
              .rungs.front()
              .n_configs;
      configs_left_in_bracket = bracket_n0;
      prepare_bracket_state();
      ++bracket_counter;
    }
    --configs_left_in_bracket;

    Rng coin(derive_seed(seed, kCoinStream, static_cast<std::uint64_t>(ordinal)));
    if (!bracket_state_ready || coin.uniform01() < rho)
      return random_bracket_config(space, seed, ordinal);

    ProposeResult proposal =
        gp_ei_propose(bracket_state, space, candidate_pool_size,
                      derive_seed(seed, kProposeStream, static_cast<std::uint64_t>(ordinal)));
    BracketConfig bc;
    bc.config = proposal.config;
    bc.trial_seed = derive_seed(seed, kTrialStream, static_cast<std::uint64_t>(ordinal));
    bc.ordinal = ordinal;
    bc.proposal_source = proposal.used_model ? "model" : "random";

    // Constant-liar update: pretend the proposal scored the incumbent so the
    // next proposal in this bracket explores elsewhere. Hyperparameters are
    // kept, only the conditioning set grows.
    const double liar =
        *std::max_element(bracket_state.scores.begin(), bracket_state.scores.end());
    bracket_state.add(to_unit_cube(space, bc.config), liar);
    bracket_state.hyperparameters_fitted = true;
    return bc;
  });

  return std::move(loop.history);
}

}  // namespace subtune
