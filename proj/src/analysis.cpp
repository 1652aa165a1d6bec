#include "subtune/analysis.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "subtune/svg.hpp"

namespace subtune {

namespace {

std::vector<const TrialRecord*> completed_only(const std::vector<TrialRecord>& records) {
  std::vector<const TrialRecord*> out;
  for (const auto& r : records)
    if (r.completed() && r.score) out.push_back(&r);
  return out;
}

}  // namespace

LinearFit fit_runtime_line(const std::vector<TrialRecord>& records) {
  const auto completed = completed_only(records);
  std::set<double> distinct;
  for (const auto* r : completed) distinct.insert(r->fraction);
  if (completed.size() < 3 || distinct.size() < 2)
    throw std::invalid_argument("insufficient data: need >= 3 completed records spanning >= 2 "
                                "distinct fractions");

  const auto n = static_cast<double>(completed.size());
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (const auto* r : completed) {
    sx += r->fraction;
    sy += r->train_seconds;
    sxx += r->fraction * r->fraction;
    sxy += r->fraction * r->train_seconds;
  }
  const double denom = n * sxx - sx * sx;
  const double slope = (n * sxy - sx * sy) / denom;
  const double intercept = (sy - slope * sx) / n;

  const double y_mean = sy / n;
  double ss_res = 0.0, ss_tot = 0.0;
  for (const auto* r : completed) {
    const double fitted = slope * r->fraction + intercept;
    ss_res += (r->train_seconds - fitted) * (r->train_seconds - fitted);
    ss_tot += (r->train_seconds - y_mean) * (r->train_seconds - y_mean);
  }
  LinearFit fit;
  fit.slope = slope;
  fit.intercept = intercept;
  fit.r_squared = ss_tot > 0.0 ? std::max(0.0, 1.0 - ss_res / ss_tot) : 1.0;
  fit.n_points = completed.size();
  return fit;
}

namespace {

std::vector<double> midranks(const std::vector<double>& values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && values[order[j]] == values[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t) ranks[order[t]] = midrank;
    i = j;
  }
  return ranks;
}

}  // namespace

double spearman_rho(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2)
    throw std::invalid_argument("spearman needs two equal-length vectors of size >= 2");
  const auto ra = midranks(a);
  const auto rb = midranks(b);
  const auto n = static_cast<double>(a.size());
  double sum_d2 = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum_d2 += (ra[i] - rb[i]) * (ra[i] - rb[i]);
  return 1.0 - 6.0 * sum_d2 / (n * (n * n - 1.0));
}

RankingReport ranking_analysis(const std::vector<TrialRecord>& records) {
  // Group mean scores by (fidelity, configuration key).
  std::map<double, std::map<std::string, std::pair<double, std::size_t>>> grouped;
  for (const auto& r : records) {
    if (!r.completed() || !r.score) continue;
    auto& cell = grouped[r.fraction][r.config.key()];
    cell.first += r.score->value;
    cell.second += 1;
  }
  if (grouped.size() < 2)
    throw std::invalid_argument("ranking analysis needs records at >= 2 fidelities");

  RankingReport report;
  std::map<double, std::map<std::string, double>> means;
  for (const auto& [fraction, configs] : grouped) {
    report.fidelities.push_back(fraction);
    report.configs_per_fidelity.push_back(configs.size());
    for (const auto& [key, cell] : configs)
      means[fraction][key] = cell.first / static_cast<double>(cell.second);
  }

  const std::size_t m = report.fidelities.size();
  report.spearman.assign(m, std::vector<double>(m, 1.0));
  for (std::size_t a = 0; a < m; ++a) {
    for (std::size_t b = a + 1; b < m; ++b) {
      const auto& ma = means[report.fidelities[a]];
      const auto& mb = means[report.fidelities[b]];
      std::vector<double> va, vb;
      for (const auto& [key, score] : ma) {
        auto it = mb.find(key);
        if (it == mb.end()) continue;
        va.push_back(score);
        vb.push_back(it->second);
      }
      if (va.size() < 2)
        throw std::invalid_argument("disjoint configuration sets between fidelities");
      const double rho = spearman_rho(va, vb);
      report.spearman[a][b] = rho;
      report.spearman[b][a] = rho;
    }
  }

  // Best configuration at each fidelity, followed across all fidelities.
  for (std::size_t a = 0; a < m; ++a) {
    const auto& ma = means[report.fidelities[a]];
    std::string best_key;
    double best_score = -std::numeric_limits<double>::infinity();
    for (const auto& [key, score] : ma) {
      if (score > best_score) {
        best_score = score;
        best_key = key;
      }
    }
    RankingReport::Trajectory traj;
    traj.best_at_fidelity = report.fidelities[a];
    traj.config_key = best_key;
    for (std::size_t b = 0; b < m; ++b) {
      const auto& mb = means[report.fidelities[b]];
      auto it = mb.find(best_key);
      if (it == mb.end())
        traj.scores.emplace_back();
      else
        traj.scores.emplace_back(it->second);
    }
    report.trajectories.push_back(std::move(traj));
  }
  return report;
}

double RankingReport::spearman_between(double fid_a, double fid_b) const {
  auto index_of = [&](double f) {
    for (std::size_t i = 0; i < fidelities.size(); ++i)
      if (std::abs(fidelities[i] - f) < 1e-12) return i;
    throw std::invalid_argument("fidelity not present in ranking report");
  };
  return spearman[index_of(fid_a)][index_of(fid_b)];
}

RelativePerformanceReport relative_performance(const std::vector<TrialRecord>& records,
                                               const std::vector<TrialRecord>& retrained) {
  std::map<double, const TrialRecord*> best_at;
  for (const auto& r : records) {
    if (!r.completed() || !r.score) continue;
    auto it = best_at.find(r.fraction);
    if (it == best_at.end() || r.score->value > it->second->score->value)
      best_at[r.fraction] = &r;
  }
  auto full = best_at.find(1.0);
  if (full == best_at.end())
    throw std::invalid_argument("no r=1 reference present in the trial records");

  RelativePerformanceReport report;
  report.reference_score = full->second->score->value;

  for (const auto& [fraction, best] : best_at) {
    RelativePerformanceReport::Row row;
    row.fraction = fraction;
    row.best_score = best->score->value;
    row.delta_without = best->score->value - report.reference_score;

    // A retraining record is linked to its source fidelity by annotation.
    const TrialRecord* retrain_best = nullptr;
    for (const auto& r : retrained) {
      if (!r.completed() || !r.score || !r.annotations.source_fidelity) continue;
      if (std::abs(*r.annotations.source_fidelity - fraction) > 1e-12) continue;
      if (retrain_best == nullptr || r.score->value > retrain_best->score->value)
        retrain_best = &r;
    }
    if (retrain_best != nullptr) {
      row.retrained_score = retrain_best->score->value;
      row.delta_with = *row.retrained_score - report.reference_score;
    }
    report.rows.push_back(row);
  }
  return report;
}

std::vector<WallclockCurve> cumulative_wallclock(
    const std::map<std::string, std::vector<TrialRecord>>& logs) {
  std::vector<WallclockCurve> curves;
  for (const auto& [name, records] : logs) {
    if (records.empty()) continue;
    std::vector<const TrialRecord*> ordered;
    ordered.reserve(records.size());
    for (const auto& r : records) ordered.push_back(&r);
    std::sort(ordered.begin(), ordered.end(),
              [](const TrialRecord* a, const TrialRecord* b) { return a->id < b->id; });

    WallclockCurve curve;
    curve.optimizer = name;
    double cumulative = 0.0;
    double best = -std::numeric_limits<double>::infinity();
    for (const auto* r : ordered) {
      cumulative += r->total_seconds;
      curve.seconds_by_fidelity[r->fraction] += r->total_seconds;
      if (r->completed() && r->score) {
        best = std::max(best, r->score->value);
        curve.points.emplace_back(cumulative, best);
      }
    }
    curve.total_seconds = cumulative;
    curves.push_back(std::move(curve));
  }
  return curves;
}

// ---------------------------------------------------------------------------
// Report emission

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t hash = 0xCBF29CE484222325ULL;
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 0x100000001B3ULL;
  }
  return hash;
}

namespace {

std::string format_number(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

void write_file(const std::filesystem::path& path, const std::string& content,
                std::vector<std::pair<std::filesystem::path, std::uint64_t>>& manifest) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write report file: " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  manifest.emplace_back(path, fnv1a64(content));
}

std::string curve_color(std::size_t i) {
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                  "#ff7f0e", "#8c564b", "#17becf"};
  return palette[i % 7];
}

std::string render_runtime_svg(const LinearFit& fit,
                               const std::vector<std::pair<double, double>>& points) {
  const int w = 520, h = 360;
  svg::Canvas canvas(w, h);
  double x_max = 1.0, y_max = 0.0;
  for (const auto& [x, y] : points) {
    x_max = std::max(x_max, x);
    y_max = std::max(y_max, y);
  }
  svg::Scale sx(0.0, x_max, 60, w - 20);
  svg::Scale sy(0.0, y_max * 1.05, h - 40, 20);
  canvas.line(60, h - 40, w - 20, h - 40);
  canvas.line(60, 20, 60, h - 40);
  canvas.text(w / 2, h - 8, "fraction r", 12, "middle");
  canvas.text(12, 14, "train seconds", 11);
  for (const auto& [x, y] : points) canvas.circle(sx(x), sy(y), 3.0, "#1f77b4");
  canvas.line(sx(0.0), sy(fit.intercept), sx(x_max), sy(fit.intercept + fit.slope * x_max),
              "#d62728", 1.5);
  canvas.text(70, 32, "slope " + format_number(fit.slope) + " s, fit R^2 " +
                          format_number(fit.r_squared), 11);
  return canvas.str();
}

std::string render_ranking_svg(const RankingReport& report) {
  const int w = 520, h = 360;
  svg::Canvas canvas(w, h);
  // Bottom-quantile crop (lowest 25% of trajectory scores) applied here only;
  // the statistics upstream are computed on everything.
  std::vector<double> all_scores;
  for (const auto& traj : report.trajectories)
    for (const auto& s : traj.scores)
      if (s) all_scores.push_back(*s);
  if (all_scores.empty()) return canvas.str();
  std::sort(all_scores.begin(), all_scores.end());
  const double y_lo = all_scores[all_scores.size() / 4];
  const double y_hi = all_scores.back();

  svg::Scale sx(0.0, static_cast<double>(report.fidelities.size() - 1), 60, w - 20);
  svg::Scale sy(y_lo, y_hi, h - 40, 20);
  canvas.line(60, h - 40, w - 20, h - 40);
  canvas.line(60, 20, 60, h - 40);
  for (std::size_t i = 0; i < report.fidelities.size(); ++i)
    canvas.text(sx(static_cast<double>(i)), h - 24, format_number(report.fidelities[i]), 10,
                "middle");
  canvas.text(w / 2, h - 8, "fraction r", 12, "middle");
  canvas.text(12, 14, "score", 11);

  for (std::size_t t = 0; t < report.trajectories.size(); ++t) {
    std::vector<std::pair<double, double>> pts;
    for (std::size_t i = 0; i < report.trajectories[t].scores.size(); ++i) {
      const auto& s = report.trajectories[t].scores[i];
      if (s && *s >= y_lo) pts.emplace_back(sx(static_cast<double>(i)), sy(*s));
    }
    canvas.polyline(pts, curve_color(t));
    for (const auto& [px, py] : pts) canvas.circle(px, py, 2.5, curve_color(t));
  }
  return canvas.str();
}

std::string render_relative_svg(const RelativePerformanceReport& report) {
  const int w = 520, h = 360;
  svg::Canvas canvas(w, h);
  double min_delta = 0.0, max_delta = 0.0;
  for (const auto& row : report.rows) {
    min_delta = std::min({min_delta, row.delta_without, row.delta_with.value_or(0.0)});
    max_delta = std::max({max_delta, row.delta_without, row.delta_with.value_or(0.0)});
  }
  svg::Scale sy(min_delta * 1.1 - 1e-12, max_delta * 1.1 + 1e-12, h - 40, 20);
  const double band = (w - 90.0) / static_cast<double>(report.rows.size());
  canvas.line(60, sy(0.0), w - 20, sy(0.0), "#444");
  canvas.text(12, 14, "delta vs r=1", 11);
  for (std::size_t i = 0; i < report.rows.size(); ++i) {
    const auto& row = report.rows[i];
    const double x0 = 70 + band * static_cast<double>(i);
    const double y0 = sy(0.0);
    const double yw = sy(row.delta_without);
    canvas.rect(x0, std::min(y0, yw), band * 0.35, std::abs(yw - y0), "#1f77b4");
    if (row.delta_with) {
      const double yr = sy(*row.delta_with);
      canvas.rect(x0 + band * 0.4, std::min(y0, yr), band * 0.35, std::abs(yr - y0), "#2ca02c");
    }
    canvas.text(x0 + band * 0.35, h - 8, format_number(row.fraction), 10, "middle");
  }
  return canvas.str();
}

std::string render_wallclock_svg(const std::vector<WallclockCurve>& curves) {
  const int w = 520, h = 360;
  svg::Canvas canvas(w, h);
  double x_max = 0.0;
  double y_lo = std::numeric_limits<double>::infinity(), y_hi = -y_lo;
  for (const auto& c : curves) {
    for (const auto& [x, y] : c.points) {
      x_max = std::max(x_max, x);
      y_lo = std::min(y_lo, y);
      y_hi = std::max(y_hi, y);
    }
  }
  if (!std::isfinite(y_lo)) return canvas.str();
  svg::Scale sx(0.0, x_max * 1.02, 60, w - 20);
  svg::Scale sy(y_lo, y_hi, h - 40, 20);
  canvas.line(60, h - 40, w - 20, h - 40);
  canvas.line(60, 20, 60, h - 40);
  canvas.text(w / 2, h - 8, "cumulative wallclock seconds", 12, "middle");
  canvas.text(12, 14, "incumbent score", 11);
  for (std::size_t i = 0; i < curves.size(); ++i) {
    std::vector<std::pair<double, double>> pts;
    double last_y = 0.0;
    for (std::size_t p = 0; p < curves[i].points.size(); ++p) {
      const auto& [x, y] = curves[i].points[p];
      if (p > 0) pts.emplace_back(sx(x), sy(last_y));  // step
      pts.emplace_back(sx(x), sy(y));
      last_y = y;
    }
    canvas.polyline(pts, curve_color(i));
    canvas.text(w - 150, 32 + 16 * static_cast<double>(i), curves[i].optimizer, 11);
    canvas.rect(w - 166, 24 + 16 * static_cast<double>(i), 10, 10, curve_color(i));
  }
  return canvas.str();
}

nlohmann::json ranking_to_json(const RankingReport& r) {
  nlohmann::json trajectories = nlohmann::json::array();
  for (const auto& t : r.trajectories) {
    nlohmann::json scores = nlohmann::json::array();
    for (const auto& s : t.scores)
      scores.push_back(s ? nlohmann::json(*s) : nlohmann::json(nullptr));
    trajectories.push_back({{"best_at_fidelity", t.best_at_fidelity},
                            {"config_key", t.config_key},
                            {"scores", std::move(scores)}});
  }
  return {{"fidelities", r.fidelities},
          {"spearman", r.spearman},
          {"configs_per_fidelity", r.configs_per_fidelity},
          {"trajectories", std::move(trajectories)}};
}

nlohmann::json relative_to_json(const RelativePerformanceReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows) {
    nlohmann::json jr{{"fraction", row.fraction},
                      {"best_score", row.best_score},
                      {"delta_without_retraining", row.delta_without}};
    if (row.retrained_score) jr["retrained_score"] = *row.retrained_score;
    if (row.delta_with) jr["delta_with_retraining"] = *row.delta_with;
    rows.push_back(std::move(jr));
  }
  return {{"reference_score", r.reference_score},
          {"rows", std::move(rows)},
          {"paper_reference",
           {{"mean_drop_at_r_0.01", RelativePerformanceReport::kReferenceMeanDropAtOnePercent},
            {"mean_drop_retrained", RelativePerformanceReport::kReferenceMeanDropRetrained},
            {"high_fidelity_drop", RelativePerformanceReport::kReferenceHighFidelityDrop},
            {"note", "reference values from the original large-scale study; "
                     "not reproduced at desk scale"}}}};
}

}  // namespace

std::vector<std::filesystem::path> emit_report(const ReportSet& reports,
                                               const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::vector<std::pair<std::filesystem::path, std::uint64_t>> manifest;

  if (reports.runtime_fit) {
    const auto& fit = *reports.runtime_fit;
    nlohmann::json j{{"slope_seconds_per_unit_fraction", fit.slope},
                     {"intercept_seconds", fit.intercept},
                     {"fit_r_squared", fit.r_squared},
                     {"n_points", fit.n_points}};
    write_file(out_dir / "runtime_fit.json", j.dump(2) + "\n", manifest);
    std::string csv = "fraction,train_seconds\n";
    for (const auto& [x, y] : reports.runtime_points)
      csv += format_number(x) + "," + format_number(y) + "\n";
    write_file(out_dir / "runtime_fit.csv", csv, manifest);
    write_file(out_dir / "runtime_fit.svg", render_runtime_svg(fit, reports.runtime_points),
               manifest);
  }

  if (reports.ranking) {
    write_file(out_dir / "ranking.json", ranking_to_json(*reports.ranking).dump(2) + "\n",
               manifest);
    std::string csv = "fidelity_a,fidelity_b,spearman_rho\n";
    const auto& r = *reports.ranking;
    for (std::size_t a = 0; a < r.fidelities.size(); ++a)
      for (std::size_t b = 0; b < r.fidelities.size(); ++b)
        csv += format_number(r.fidelities[a]) + "," + format_number(r.fidelities[b]) + "," +
               format_number(r.spearman[a][b]) + "\n";
    write_file(out_dir / "ranking.csv", csv, manifest);
    write_file(out_dir / "ranking.svg", render_ranking_svg(r), manifest);
  }

  if (reports.relative) {
    write_file(out_dir / "relative_performance.json",
               relative_to_json(*reports.relative).dump(2) + "\n", manifest);
    std::string csv = "fraction,best_score,delta_without,retrained_score,delta_with\n";
    for (const auto& row : reports.relative->rows) {
      csv += format_number(row.fraction) + "," + format_number(row.best_score) + "," +
             format_number(row.delta_without) + ",";
      csv += row.retrained_score ? format_number(*row.retrained_score) : "";
      csv += ",";
      csv += row.delta_with ? format_number(*row.delta_with) : "";
      csv += "\n";
    }
    write_file(out_dir / "relative_performance.csv", csv, manifest);
    write_file(out_dir / "relative_performance.svg", render_relative_svg(*reports.relative),
               manifest);
  }

  if (!reports.wallclock.empty()) {
    nlohmann::json curves = nlohmann::json::array();
    for (const auto& c : reports.wallclock) {
      nlohmann::json pts = nlohmann::json::array();
      for (const auto& [x, y] : c.points) pts.push_back({x, y});
      nlohmann::json by_fid = nlohmann::json::object();
      for (const auto& [fraction, secs] : c.seconds_by_fidelity)
        by_fid[format_number(fraction)] = secs;
      curves.push_back({{"optimizer", c.optimizer},
                        {"points", std::move(pts)},
                        {"seconds_by_fidelity", std::move(by_fid)},
                        {"total_seconds", c.total_seconds}});
    }
    write_file(out_dir / "wallclock.json", curves.dump(2) + "\n", manifest);
    std::string csv = "optimizer,cumulative_seconds,incumbent_score\n";
    for (const auto& c : reports.wallclock)
      for (const auto& [x, y] : c.points)
        csv += c.optimizer + "," + format_number(x) + "," + format_number(y) + "\n";
    write_file(out_dir / "wallclock.csv", csv, manifest);
    write_file(out_dir / "wallclock.svg", render_wallclock_svg(reports.wallclock), manifest);
  }

  nlohmann::json index = nlohmann::json::array();
  std::vector<std::filesystem::path> emitted;
  for (const auto& [path, hash] : manifest) {
    char hex[32];
    std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(hash));
    index.push_back({{"file", path.filename().string()}, {"fnv1a64", hex}});
    emitted.push_back(path);
  }
  nlohmann::json manifest_json{{"artifacts", std::move(index)}, {"notices", reports.notices}};
  {
    std::ofstream out(out_dir / "manifest.json", std::ios::binary | std::ios::trunc);
    out << manifest_json.dump(2) << "\n";
  }
  emitted.push_back(out_dir / "manifest.json");
  return emitted;
}

}  // namespace subtune
