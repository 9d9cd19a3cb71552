#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "topotrack/cloud_objects.hpp"
#include "topotrack/tracker.hpp"

namespace topotrack {

/// Number of entries times the frame interval.
double trajectory_timespan(const Trajectory& traj, double interval_minutes);

/// Population standard deviation; 0 for fewer than two values.
double population_sd(std::span<const double> values);

/// RMSE of orthogonal distances to the total-least-squares line through
/// the points (first principal axis). 0 when all points coincide.
double linearity_loss(std::span<const KmPoint> points);

/// Trajectories eligible for the SD and linearity metrics: at least three
/// entries and a timespan strictly above the run median.
bool passes_long_filter(const Trajectory& traj, double interval_minutes, double median_timespan);

/// `systems_by_frame[t]` holds frame t's systems with system_id == index + 1.
std::optional<double> trajectory_mean_value_sd(const Trajectory& traj,
                                               const std::vector<std::vector<CloudSystem>>& systems_by_frame,
                                               double interval_minutes, double median_timespan);
std::optional<double> trajectory_linearity_loss(const Trajectory& traj,
                                                const std::vector<std::vector<CloudSystem>>& systems_by_frame,
                                                double interval_minutes, double median_timespan);

struct Summary {
  std::size_t count = 0;
  double median = 0.0;
  double mean = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  double iqr = 0.0;
};

/// Quartiles by linear interpolation between order statistics.
Summary summarize(std::vector<double> values);

struct TrajectoryRecord {
  int trajectory_id = 0;
  std::size_t entries = 0;
  double timespan_minutes = 0.0;
  std::optional<double> sd_mean_value;
  std::optional<double> linearity_loss_km;
};

struct HistogramBin {
  double lower_minutes = 0.0;  // inclusive
  double upper_minutes = 0.0;  // exclusive
  std::size_t count = 0;
};

struct StatsReport {
  double interval_minutes = 0.0;
  double median_timespan_minutes = 0.0;
  std::vector<TrajectoryRecord> records;  // main trajectories only
  Summary timespan;
  Summary sd_mean_value;
  Summary linearity_loss;
  std::vector<HistogramBin> timespan_histogram;  // bins [dt * 2^k, dt * 2^(k+1))
  std::size_t secondary_links = 0;
  std::size_t event_counts[4] = {0, 0, 0, 0};  // indexed by EventKind
};

StatsReport summarize_run(const TrajectorySet& trajectories,
                          const std::vector<std::vector<CloudSystem>>& systems_by_frame,
                          double interval_minutes);

nlohmann::json to_json(const StatsReport& report);

/// `trajectory_id,entries,timespan_minutes,sd_mean_value,linearity_loss_km`; absent metrics are empty.
void write_per_trajectory_csv(const StatsReport& report, std::ostream& out);
/// `lower_minutes,upper_minutes,count`.
void write_histogram_csv(const StatsReport& report, std::ostream& out);

}  // namespace topotrack
