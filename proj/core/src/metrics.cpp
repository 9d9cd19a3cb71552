#include "topotrack/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "topotrack/error.hpp"

namespace topotrack {

double trajectory_timespan(const Trajectory& traj, double interval_minutes) {
  return static_cast<double>(traj.entries.size()) * interval_minutes;
}

double population_sd(std::span<const double> values) {
  if (values.size() < 2) return 0.0;
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / n);
}

double linearity_loss(std::span<const KmPoint> points) {
  if (points.size() < 2) return 0.0;
  const double n = static_cast<double>(points.size());
  double mx = 0.0, my = 0.0;
  for (const auto& p : points) {
    mx += p.x;
    my += p.y;
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (const auto& p : points) {
    const double dx = p.x - mx;
    const double dy = p.y - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  // Project onto the normal of the principal axis; the closed-form eigenvalue cancels badly.
  const double theta = 0.5 * std::atan2(2.0 * sxy, sxx - syy);
  const double nx = -std::sin(theta), ny = std::cos(theta);
  double residual = 0.0;
  for (const auto& p : points) {
    const double r = (p.x - mx) * nx + (p.y - my) * ny;
    residual += r * r;
  }
  return std::sqrt(residual / n);
}

bool passes_long_filter(const Trajectory& traj, double interval_minutes, double median_timespan) {
  return traj.entries.size() >= 3 && trajectory_timespan(traj, interval_minutes) > median_timespan;
}

namespace {

const CloudSystem& lookup(const std::vector<std::vector<CloudSystem>>& systems_by_frame,
                          const TrajectoryEntry& e) {
  if (e.time_index < 0 || static_cast<std::size_t>(e.time_index) >= systems_by_frame.size()) {
    throw InvalidArgument(fmt::format("trajectory entry at unknown frame {}", e.time_index));
  }
  const auto& frame = systems_by_frame[static_cast<std::size_t>(e.time_index)];
  if (e.system == 0 || e.system > frame.size() || frame[e.system - 1].system_id != e.system) {
    throw InvalidArgument(fmt::format("unknown system {} at frame {}", e.system, e.time_index));
  }
  return frame[e.system - 1];
}

}  // namespace

std::optional<double> trajectory_mean_value_sd(const Trajectory& traj,
                                               const std::vector<std::vector<CloudSystem>>& systems_by_frame,
                                               double interval_minutes, double median_timespan) {
  if (!passes_long_filter(traj, interval_minutes, median_timespan)) return std::nullopt;
  std::vector<double> means;
  for (const auto& e : traj.entries) means.push_back(lookup(systems_by_frame, e).mean_value);
  return population_sd(means);
}

std::optional<double> trajectory_linearity_loss(const Trajectory& traj,
                                                const std::vector<std::vector<CloudSystem>>& systems_by_frame,
                                                double interval_minutes, double median_timespan) {
  if (!passes_long_filter(traj, interval_minutes, median_timespan)) return std::nullopt;
  std::vector<KmPoint> centroids;
  for (const auto& e : traj.entries) centroids.push_back(lookup(systems_by_frame, e).centroid_km);
  return linearity_loss(centroids);
}

Summary summarize(std::vector<double> values) {
  Summary s;
  s.count = values.size();
  if (values.empty()) return s;
  std::sort(values.begin(), values.end());
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
  };
  s.median = quantile(0.5);
  s.q1 = quantile(0.25);
  s.q3 = quantile(0.75);
  s.iqr = s.q3 - s.q1;
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  return s;
}

StatsReport summarize_run(const TrajectorySet& trajectories,
                          const std::vector<std::vector<CloudSystem>>& systems_by_frame,
                          double interval_minutes) {
  if (!(interval_minutes > 0.0)) throw InvalidArgument("interval_minutes must be positive");
  StatsReport report;
  report.interval_minutes = interval_minutes;

  std::vector<const Trajectory*> mains;
  for (const auto& t : trajectories.trajectories) {
    if (t.kind == TrajectoryKind::main) {
      mains.push_back(&t);
    } else {
      ++report.secondary_links;
    }
  }
  for (const auto& ev : trajectories.events) ++report.event_counts[static_cast<int>(ev.kind)];

  std::vector<double> spans;
  for (const auto* t : mains) spans.push_back(trajectory_timespan(*t, interval_minutes));
  report.timespan = summarize(spans);
  report.median_timespan_minutes = report.timespan.median;

  std::vector<double> sds, losses;
  for (const auto* t : mains) {
    TrajectoryRecord rec;
    rec.trajectory_id = t->id;
    rec.entries = t->entries.size();
    rec.timespan_minutes = trajectory_timespan(*t, interval_minutes);
    rec.sd_mean_value = trajectory_mean_value_sd(*t, systems_by_frame, interval_minutes,
                                                 report.median_timespan_minutes);
    rec.linearity_loss_km = trajectory_linearity_loss(*t, systems_by_frame, interval_minutes,
                                                      report.median_timespan_minutes);
    if (rec.sd_mean_value) sds.push_back(*rec.sd_mean_value);
    if (rec.linearity_loss_km) losses.push_back(*rec.linearity_loss_km);
    report.records.push_back(rec);
  }
  report.sd_mean_value = summarize(sds);
  report.linearity_loss = summarize(losses);

  if (!spans.empty()) {
    const double longest = *std::max_element(spans.begin(), spans.end());
    for (double lower = interval_minutes; lower <= longest; lower *= 2.0) {
      HistogramBin bin{lower, 2.0 * lower, 0};
      for (double s : spans) {
        if (s >= bin.lower_minutes && s < bin.upper_minutes) ++bin.count;
      }
      report.timespan_histogram.push_back(bin);
    }
  }
  return report;
}

namespace {

nlohmann::json summary_json(const Summary& s) {
  return {{"count", s.count}, {"median", s.median}, {"mean", s.mean},
          {"q1", s.q1},       {"q3", s.q3},         {"iqr", s.iqr}};
}

}  // namespace

nlohmann::json to_json(const StatsReport& report) {
  nlohmann::json doc;
  doc["interval_minutes"] = report.interval_minutes;
  doc["main_trajectories"] = report.records.size();
  doc["secondary_links"] = report.secondary_links;
  doc["median_timespan_minutes"] = report.median_timespan_minutes;
  doc["filter"] = {{"min_entries", 3}, {"timespan_above_minutes", report.median_timespan_minutes}};
  doc["timespan_minutes"] = summary_json(report.timespan);
  doc["sd_mean_value"] = summary_json(report.sd_mean_value);
  doc["linearity_loss_km"] = summary_json(report.linearity_loss);
  doc["events"] = {{"birth", report.event_counts[0]},
                   {"termination", report.event_counts[1]},
                   {"merge", report.event_counts[2]},
                   {"split", report.event_counts[3]}};
  return doc;
}

void write_per_trajectory_csv(const StatsReport& report, std::ostream& out) {
  out << "trajectory_id,entries,timespan_minutes,sd_mean_value,linearity_loss_km\n";
  for (const auto& r : report.records) {
    fmt::print(out, "{},{},{},{},{}\n", r.trajectory_id, r.entries, r.timespan_minutes,
               r.sd_mean_value ? fmt::format("{}", *r.sd_mean_value) : std::string(),
               r.linearity_loss_km ? fmt::format("{}", *r.linearity_loss_km) : std::string());
  }
}

void write_histogram_csv(const StatsReport& report, std::ostream& out) {
  out << "lower_minutes,upper_minutes,count\n";
  for (const auto& b : report.timespan_histogram) {
    fmt::print(out, "{},{},{}\n", b.lower_minutes, b.upper_minutes, b.count);
  }
}

}  // namespace topotrack
