#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "subtune/search_space.hpp"

namespace subtune {

// Gaussian-process surrogate over unit-hypercube-encoded configurations with
// a squared-exponential kernel. Observations are raw scores; fitting
// standardizes them internally.
struct SurrogateState {
  std::vector<std::vector<double>> points;  // unit-cube coordinates
  std::vector<double> scores;
  std::vector<double> length_scales;  // per dimension, positive
  double signal_variance = 1.0;
  double noise_variance = 1e-6;
  bool hyperparameters_fitted = false;

  std::size_t size() const { return scores.size(); }
  void add(std::vector<double> point, double score);
};

// Maximizes the marginal likelihood over (length scales, signal variance,
// noise variance) with a multi-start bounded Nelder-Mead search in log space.
// On numerical failure the state falls back to median-heuristic length
// scales; the function always leaves usable hyperparameters behind.
void fit_hyperparameters(SurrogateState& state, std::uint64_t seed);

struct GpPrediction {
  double mean = 0.0;
  double variance = 0.0;
};

// Factorized posterior. Construction runs a Cholesky with jitter escalation
// and throws GpNumericalError if even the largest jitter fails.
class GpPosterior {
 public:
  explicit GpPosterior(const SurrogateState& state);
  GpPrediction predict(const std::vector<double>& point) const;
  double best_observed() const { return best_observed_; }

 private:
  std::vector<std::vector<double>> points_;
  std::vector<double> length_scales_;
  double signal_variance_;
  std::vector<double> alpha_;          // K^{-1} (y - mean)
  std::vector<double> chol_;           // lower-triangular factor, row-major
  double y_mean_ = 0.0;
  double best_observed_ = 0.0;
};

class GpNumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Closed-form Expected Improvement for a maximization problem:
// (mu - best) * Phi(z) + sigma * phi(z), z = (mu - best) / sigma.
double expected_improvement(double mean, double stddev, double best);

double normal_cdf(double z);
double normal_pdf(double z);

// Evaluates EI at candidate_pool_size random configurations and returns the
// argmax. With fewer than two observations (or after Cholesky escalation
// failure) falls back to a plain random sample and reports it via
// used_model=false.
struct ProposeResult {
  Configuration config;
  bool used_model = false;
};

ProposeResult gp_ei_propose(const SurrogateState& state, const HyperparamSpace& space,
                            std::size_t candidate_pool_size, std::uint64_t seed);

}  // namespace subtune
