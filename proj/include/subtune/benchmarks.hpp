#pragma once

#include <algorithm>
#include <cmath>

#include "subtune/executor.hpp"
#include "subtune/rng.hpp"
#include "subtune/search_space.hpp"

namespace subtune {

// Instant in-memory trial runner with a unimodal quadratic objective over the
// unit-cube encoding of the configuration. Trial times are simulated as
// linear in the fraction, so scheduler behavior and wallclock analyses can be
// tested without training anything.
//
//   score(x, r) = 1 - sum_d w_d (z_d - c_d)^2 / d  -  gap * (1 - r)
//                 + noise_scale(r) * pseudo_noise(x, r)
//
// Lower fidelities are biased down and noisier, which is the regime the
// schedulers are designed for.
class QuadraticBenchmarkRunner : public TrialRunner {
 public:
  explicit QuadraticBenchmarkRunner(const HyperparamSpace& space, std::uint64_t seed,
                                    double fidelity_gap = 0.05, double noise_at_min = 0.02,
                                    double unit_cost_seconds = 1.0)
      : space_(&space), seed_(seed), fidelity_gap_(fidelity_gap), noise_at_min_(noise_at_min),
        unit_cost_seconds_(unit_cost_seconds) {
    Rng rng(derive_seed(seed, 0xBE9C));
    optimum_.resize(space.size());
    weights_.resize(space.size());
    for (std::size_t d = 0; d < space.size(); ++d) {
      optimum_[d] = rng.uniform(0.2, 0.8);
      weights_[d] = rng.uniform(0.5, 1.5);
    }
  }

  double true_score(const Configuration& config) const {
    const auto z = to_unit_cube(*space_, config);
    double penalty = 0.0;
    for (std::size_t d = 0; d < z.size(); ++d)
      penalty += weights_[d] * (z[d] - optimum_[d]) * (z[d] - optimum_[d]);
    return 1.0 - penalty / static_cast<double>(z.size());
  }

  TrialRecord run_trial(const TrialSpec& spec) override {
    TrialRecord rec;
    rec.id = next_id_++;
    rec.config = spec.config;
    rec.fraction = spec.fraction;
    rec.trial_seed = spec.trial_seed;
    rec.annotations = spec.annotations;
    rec.status = TrialStatus::kCompleted;

    const double noise_scale =
        noise_at_min_ * (1.0 - spec.fraction) / (1.0 - 0.009);  // ~noise_at_min at r=0.01, 0 at r=1
    // Deterministic pseudo-noise tied to (config, fraction, runner seed).
    Rng noise_rng(derive_seed(seed_, spec.trial_seed,
                              static_cast<std::uint64_t>(spec.fraction * 1e9)));
    const double noise = noise_scale * noise_rng.gaussian();

    EvaluationScore score;
    score.value = true_score(spec.config) - fidelity_gap_ * (1.0 - spec.fraction) + noise;
    score.kind = MetricKind::kR2;
    score.n_evaluated = 1;
    rec.score = score;
    rec.train_seconds = std::max(1e-9, unit_cost_seconds_ * spec.fraction);
    rec.total_seconds = rec.train_seconds + 1e-6;
    history_.push_back(rec);
    return rec;
  }

  std::vector<TrialRecord> run_rung(const std::vector<TrialSpec>& specs) override {
    std::vector<TrialRecord> records;
    records.reserve(specs.size());
    for (const auto& spec : specs) records.push_back(run_trial(spec));
    return records;
  }

  const std::vector<TrialRecord>& history() const { return history_; }

 private:
  const HyperparamSpace* space_;
  std::uint64_t seed_;
  double fidelity_gap_;
  double noise_at_min_;
  double unit_cost_seconds_;
  std::vector<double> optimum_;
  std::vector<double> weights_;
  std::int64_t next_id_ = 0;
  std::vector<TrialRecord> history_;
};

}  // namespace subtune
