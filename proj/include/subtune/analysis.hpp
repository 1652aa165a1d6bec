#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "subtune/executor.hpp"

namespace subtune {

// OLS of train-only wallclock on the fraction r.
struct LinearFit {
  double slope = 0.0;       // seconds per unit fraction
  double intercept = 0.0;   // seconds
  double r_squared = 0.0;   // quality of the fit, in [0, 1]
  std::size_t n_points = 0;
};

LinearFit fit_runtime_line(const std::vector<TrialRecord>& records);

// Spearman rank correlations between every fidelity pair, plus the score
// trajectory of each fidelity's best configuration across all fidelities.
struct RankingReport {
  std::vector<double> fidelities;
  std::vector<std::vector<double>> spearman;  // symmetric, unit diagonal
  std::vector<std::size_t> configs_per_fidelity;

  struct Trajectory {
    double best_at_fidelity = 0.0;  // which fidelity picked this configuration
    std::string config_key;
    std::vector<std::optional<double>> scores;  // one per fidelity, absent if unevaluated
  };
  std::vector<Trajectory> trajectories;

  double spearman_between(double fid_a, double fid_b) const;
};

// rho = 1 - 6 sum d^2 / (n (n^2 - 1)) over midranks.
double spearman_rho(const std::vector<double>& a, const std::vector<double>& b);

RankingReport ranking_analysis(const std::vector<TrialRecord>& records);

// Best score per fraction against the r = 1 reference, without and (when
// retrained records are given) with full-data retraining.
struct RelativePerformanceReport {
  struct Row {
    double fraction = 1.0;
    double best_score = 0.0;
    double delta_without = 0.0;
    std::optional<double> retrained_score;
    std::optional<double> delta_with;
  };
  std::vector<Row> rows;  // ascending fraction
  double reference_score = 0.0;

  // Headline numbers reported by the original large-scale study, carried in
  // the report schema for side-by-side display. Desk-scale runs are not
  // expected to reproduce them.
  static constexpr double kReferenceMeanDropAtOnePercent = 0.033;
  static constexpr double kReferenceMeanDropRetrained = 0.014;
  static constexpr double kReferenceHighFidelityDrop = 0.005;
};

RelativePerformanceReport relative_performance(const std::vector<TrialRecord>& records,
                                               const std::vector<TrialRecord>& retrained);

// Incumbent score as a step function of cumulative trial wallclock, plus the
// total time spent per fidelity level.
struct WallclockCurve {
  std::string optimizer;
  std::vector<std::pair<double, double>> points;  // (cumulative seconds, incumbent score)
  std::map<double, double> seconds_by_fidelity;
  double total_seconds = 0.0;
};

std::vector<WallclockCurve> cumulative_wallclock(
    const std::map<std::string, std::vector<TrialRecord>>& logs);

// Everything one analyze invocation produced; absent members were skipped.
struct ReportSet {
  std::optional<LinearFit> runtime_fit;
  std::vector<std::pair<double, double>> runtime_points;  // (r, train seconds) behind the fit
  std::optional<RankingReport> ranking;
  std::optional<RelativePerformanceReport> relative;
  std::vector<WallclockCurve> wallclock;
  std::vector<std::string> notices;
};

// Writes one JSON document per report plus CSV tables and static SVG plots,
// then an index manifest with a content hash per emitted file. Byte-identical
// across reruns on the same inputs.
std::vector<std::filesystem::path> emit_report(const ReportSet& reports,
                                               const std::filesystem::path& out_dir);

// FNV-1a, used for the manifest content hashes.
std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace subtune
