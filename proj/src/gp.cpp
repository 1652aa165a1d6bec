#include "subtune/gp.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>

#include <Eigen/Dense>

#include "subtune/log.hpp"
#include "subtune/rng.hpp"

namespace subtune {

void SurrogateState::add(std::vector<double> point, double score) {
  if (!points.empty() && point.size() != points.front().size())
    throw std::invalid_argument("surrogate point dimension mismatch");
  points.push_back(std::move(point));
  scores.push_back(score);
  hyperparameters_fitted = false;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double normal_pdf(double z) {
  return std::exp(-0.5 * z * z) / std::sqrt(2.0 * 3.14159265358979323846);
}

double expected_improvement(double mean, double stddev, double best) {
  const double delta = mean - best;
  if (stddev <= 0.0) return std::max(0.0, delta);
  const double z = delta / stddev;
  return delta * normal_cdf(z) + stddev * normal_pdf(z);
}

namespace {

double sq_exp_kernel(const std::vector<double>& a, const std::vector<double>& b,
                     const std::vector<double>& ls, double signal_variance) {
  double sum = 0.0;
  for (std::size_t d = 0; d < a.size(); ++d) {
    const double t = (a[d] - b[d]) / ls[d];
    sum += t * t;
  }
  return signal_variance * std::exp(-0.5 * sum);
}

Eigen::MatrixXd kernel_matrix(const std::vector<std::vector<double>>& points,
                              const std::vector<double>& ls, double signal_variance,
                              double noise_variance) {
  const auto n = static_cast<Eigen::Index>(points.size());
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      const double v = sq_exp_kernel(points[static_cast<std::size_t>(i)],
                                     points[static_cast<std::size_t>(j)], ls, signal_variance);
      k(i, j) = v;
      k(j, i) = v;
    }
    k(i, i) += noise_variance;
  }
  return k;
}

// Escalating-jitter Cholesky; returns false when even the largest jitter
// leaves the matrix indefinite.
bool cholesky_with_jitter(const Eigen::MatrixXd& k, Eigen::LLT<Eigen::MatrixXd>& llt,
                          double* jitter_used = nullptr) {
  double jitter = 0.0;
  for (int attempt = 0; attempt < 8; ++attempt) {
    Eigen::MatrixXd kj = k;
    if (jitter > 0.0) kj.diagonal().array() += jitter;
    llt.compute(kj);
    if (llt.info() == Eigen::Success) {
      if (jitter_used) *jitter_used = jitter;
      return true;
    }
    jitter = jitter == 0.0 ? 1e-10 : jitter * 100.0;
  }
  return false;
}

struct Standardized {
  std::vector<double> y;
  double mean = 0.0;
  double sd = 1.0;
};

Standardized standardize(const std::vector<double>& scores) {
  Standardized s;
  const auto n = static_cast<double>(scores.size());
  for (double v : scores) s.mean += v;
  s.mean /= n;
  double var = 0.0;
  for (double v : scores) var += (v - s.mean) * (v - s.mean);
  s.sd = std::sqrt(var / n);
  if (s.sd < 1e-12) s.sd = 1.0;  // constant scores: keep the scale finite
  s.y.resize(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) s.y[i] = (scores[i] - s.mean) / s.sd;
  return s;
}

std::vector<double> median_heuristic_scales(const std::vector<std::vector<double>>& points) {
  const std::size_t dim = points.front().size();
  std::vector<double> scales(dim, 0.25);
  std::vector<double> dists;
  for (std::size_t d = 0; d < dim; ++d) {
    dists.clear();
    for (std::size_t i = 0; i < points.size(); ++i)
      for (std::size_t j = i + 1; j < points.size(); ++j)
        dists.push_back(std::abs(points[i][d] - points[j][d]));
    if (dists.empty()) continue;
    std::nth_element(dists.begin(), dists.begin() + static_cast<std::ptrdiff_t>(dists.size() / 2),
                     dists.end());
    const double med = dists[dists.size() / 2];
    scales[d] = std::max(med, 0.05);
  }
  return scales;
}

// Negative log marginal likelihood of standardized targets; +inf on failure.
double neg_log_marginal_likelihood(const std::vector<std::vector<double>>& points,
                                   const std::vector<double>& y, const std::vector<double>& ls,
                                   double signal_variance, double noise_variance) {
  const auto n = static_cast<Eigen::Index>(points.size());
  Eigen::MatrixXd k = kernel_matrix(points, ls, signal_variance, noise_variance);
  Eigen::LLT<Eigen::MatrixXd> llt;
  if (!cholesky_with_jitter(k, llt)) return std::numeric_limits<double>::infinity();
  Eigen::VectorXd yv = Eigen::Map<const Eigen::VectorXd>(y.data(), n);
  Eigen::VectorXd alpha = llt.solve(yv);
  double log_det = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) log_det += std::log(llt.matrixL()(i, i));
  return 0.5 * yv.dot(alpha) + log_det + 0.5 * static_cast<double>(n) * std::log(2.0 * M_PI);
}

struct Bounds {
  double lo, hi;
};

// Simple bounded Nelder-Mead in log-parameter space.
std::vector<double> nelder_mead(const std::vector<double>& start, const std::vector<Bounds>& box,
                                int max_evals, const std::function<double(const std::vector<double>&)>& f) {
  const std::size_t dim = start.size();
  auto clamp_point = [&](std::vector<double> p) {
    for (std::size_t i = 0; i < dim; ++i) p[i] = std::clamp(p[i], box[i].lo, box[i].hi);
    return p;
  };

  std::vector<std::vector<double>> simplex;
  std::vector<double> values;
  simplex.push_back(clamp_point(start));
  for (std::size_t i = 0; i < dim; ++i) {
    auto p = start;
    p[i] += 0.5;
    simplex.push_back(clamp_point(p));
  }
  int evals = 0;
  for (auto& p : simplex) {
    values.push_back(f(p));
    ++evals;
  }

  while (evals < max_evals) {
    std::vector<std::size_t> order(simplex.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });

    const std::size_t best = order[0], worst = order[dim], second_worst = order[dim - 1];
    std::vector<double> centroid(dim, 0.0);
    for (std::size_t i = 0; i < simplex.size(); ++i) {
      if (i == worst) continue;
      for (std::size_t d = 0; d < dim; ++d) centroid[d] += simplex[i][d];
    }
    for (double& c : centroid) c /= static_cast<double>(dim);

    auto blend = [&](double t) {
      std::vector<double> p(dim);
      for (std::size_t d = 0; d < dim; ++d) p[d] = centroid[d] + t * (centroid[d] - simplex[worst][d]);
      return clamp_point(p);
    };

    auto reflected = blend(1.0);
    double fr = f(reflected);
    ++evals;
    if (fr < values[best]) {
      auto expanded = blend(2.0);
      double fe = f(expanded);
      ++evals;
      if (fe < fr) {
        simplex[worst] = expanded;
        values[worst] = fe;
      } else {
        simplex[worst] = reflected;
        values[worst] = fr;
      }
    } else if (fr < values[second_worst]) {
      simplex[worst] = reflected;
      values[worst] = fr;
    } else {
      auto contracted = blend(-0.5);
      double fc = f(contracted);
      ++evals;
      if (fc < values[worst]) {
        simplex[worst] = contracted;
        values[worst] = fc;
      } else {
        for (std::size_t i = 0; i < simplex.size(); ++i) {
          if (i == best) continue;
          for (std::size_t d = 0; d < dim; ++d)
            simplex[i][d] = 0.5 * (simplex[i][d] + simplex[best][d]);
          values[i] = f(simplex[i]);
          ++evals;
        }
      }
    }
  }

  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] < values[best]) best = i;
  return simplex[best];
}

}  // namespace

void fit_hyperparameters(SurrogateState& state, std::uint64_t seed) {
  (void)seed;
  if (state.size() < 2) throw std::invalid_argument("need >= 2 observations to fit a surrogate");
  const std::size_t dim = state.points.front().size();
  const Standardized std_y = standardize(state.scores);
  const std::vector<double> median_ls = median_heuristic_scales(state.points);

  // theta = (log ls_1..d, log signal_var, log noise_var)
  std::vector<Bounds> box(dim, Bounds{std::log(1e-2), std::log(1e2)});
  box.push_back(Bounds{std::log(1e-4), std::log(1e2)});   // signal variance
  box.push_back(Bounds{std::log(1e-8), std::log(1e1)});   // noise variance

  auto objective = [&](const std::vector<double>& theta) {
    std::vector<double> ls(dim);
    for (std::size_t d = 0; d < dim; ++d) ls[d] = std::exp(theta[d]);
    return neg_log_marginal_likelihood(state.points, std_y.y, ls, std::exp(theta[dim]),
                                       std::exp(theta[dim + 1]));
  };

  std::vector<std::vector<double>> starts;
  for (double scale : {1.0, 0.3, 3.0}) {
    std::vector<double> theta(dim + 2);
    for (std::size_t d = 0; d < dim; ++d) theta[d] = std::log(median_ls[d] * scale);
    theta[dim] = std::log(1.0);
    theta[dim + 1] = std::log(1e-2);
    starts.push_back(std::move(theta));
  }

  double best_value = std::numeric_limits<double>::infinity();
  std::vector<double> best_theta;
  for (const auto& start : starts) {
    auto theta = nelder_mead(start, box, 220, objective);
    const double value = objective(theta);
    if (value < best_value) {
      best_value = value;
      best_theta = theta;
    }
  }

  if (!std::isfinite(best_value)) {
    logging::warn("marginal-likelihood fit failed; using median-heuristic length scales");
    state.length_scales = median_ls;
    state.signal_variance = 1.0;
    state.noise_variance = 1e-2;
  } else {
    state.length_scales.resize(dim);
    for (std::size_t d = 0; d < dim; ++d) state.length_scales[d] = std::exp(best_theta[d]);
    state.signal_variance = std::exp(best_theta[dim]);
    state.noise_variance = std::exp(best_theta[dim + 1]);
  }
  state.hyperparameters_fitted = true;
}

GpPosterior::GpPosterior(const SurrogateState& state)
    : points_(state.points), length_scales_(state.length_scales),
      signal_variance_(state.signal_variance) {
  if (state.size() < 1) throw std::invalid_argument("empty surrogate state");
  if (length_scales_.size() != points_.front().size())
    throw std::invalid_argument("surrogate state has unfitted length scales");

  const auto n = static_cast<Eigen::Index>(state.size());
  y_mean_ = 0.0;
  for (double v : state.scores) y_mean_ += v;
  y_mean_ /= static_cast<double>(n);
  best_observed_ = *std::max_element(state.scores.begin(), state.scores.end());

  Eigen::MatrixXd k =
      kernel_matrix(points_, length_scales_, signal_variance_, state.noise_variance);
  Eigen::LLT<Eigen::MatrixXd> llt;
  double jitter = 0.0;
  if (!cholesky_with_jitter(k, llt, &jitter))
    throw GpNumericalError("kernel matrix not positive definite after jitter escalation");
  if (jitter > 0.0)
    logging::debug("gp posterior required jitter " + std::to_string(jitter));

  Eigen::VectorXd centered(n);
  for (Eigen::Index i = 0; i < n; ++i) centered(i) = state.scores[static_cast<std::size_t>(i)] - y_mean_;
  Eigen::VectorXd alpha = llt.solve(centered);
  alpha_.assign(alpha.data(), alpha.data() + n);

  Eigen::MatrixXd l = llt.matrixL();
  chol_.resize(static_cast<std::size_t>(n * n));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      chol_[static_cast<std::size_t>(i * n + j)] = l(i, j);
}

GpPrediction GpPosterior::predict(const std::vector<double>& point) const {
  const std::size_t n = points_.size();
  Eigen::VectorXd k_star(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i)
    k_star(static_cast<Eigen::Index>(i)) =
        sq_exp_kernel(point, points_[i], length_scales_, signal_variance_);

  double mean = y_mean_;
  for (std::size_t i = 0; i < n; ++i) mean += k_star(static_cast<Eigen::Index>(i)) * alpha_[i];

  // v = L^{-1} k*, variance = k(x,x) - v'v
  Eigen::Map<const Eigen::MatrixXd> l(chol_.data(), static_cast<Eigen::Index>(n),
                                      static_cast<Eigen::Index>(n));
  Eigen::VectorXd v =
      l.triangularView<Eigen::Lower>().solve(k_star);
  const double variance = std::max(0.0, signal_variance_ - v.squaredNorm());
  return {mean, variance};
}

ProposeResult gp_ei_propose(const SurrogateState& state, const HyperparamSpace& space,
                            std::size_t candidate_pool_size, std::uint64_t seed) {
  if (candidate_pool_size == 0) throw std::invalid_argument("candidate pool must be non-empty");
  Rng rng(derive_seed(seed, 0xE1));
  if (state.size() < 2) {
    return {sample_config(space, rng.next_u64()), false};
  }

  SurrogateState working = state;
  if (!working.hyperparameters_fitted) fit_hyperparameters(working, seed);

  try {
    const GpPosterior posterior(working);
    const double best = posterior.best_observed();
    Configuration best_config;
    double best_ei = -1.0;
    double best_mean = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < candidate_pool_size; ++i) {
      Configuration candidate = sample_config(space, rng.next_u64());
      const auto z = to_unit_cube(space, candidate);
      const GpPrediction pred = posterior.predict(z);
      const double ei = expected_improvement(pred.mean, std::sqrt(pred.variance), best);
      // EI ties (notably the all-zero case of a confident posterior) break
      // toward the best posterior mean.
      if (ei > best_ei || (ei == best_ei && pred.mean > best_mean)) {
        best_ei = ei;
        best_mean = pred.mean;
        best_config = std::move(candidate);
      }
    }
    return {std::move(best_config), true};
  } catch (const GpNumericalError& e) {
    logging::warn(std::string("surrogate proposal fell back to random sampling: ") + e.what());
    return {sample_config(space, rng.next_u64()), false};
  }
}

}  // namespace subtune
