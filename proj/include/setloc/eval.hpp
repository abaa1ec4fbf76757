// Copyright 2026 The setloc Authors
// SPDX-License-Identifier: Apache-2.0
//
// Metrics, robustness sweeps, timing and report output.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "setloc/infer.hpp"
#include "setloc/train.hpp"

namespace setloc {

/// Heading RMSE is reported in degrees; everything else is SI.
struct RmseReport {
  double rmse_x = 0;
  double rmse_y = 0;
  double rmse_phi_deg = 0;
  std::size_t n_samples = 0;
  double mean_ms = 0;
  /// Standard error of the mean squared positional error, propagated to RMSE.
  double position_se = 0;

  double rmse_position() const;
};

RmseReport rmse(std::span<const Pose> estimates, std::span<const Pose> truths);

/// RMSE over offset residuals (prediction minus target, heading wrapped).
RmseReport rmse(std::span<const PoseOffset> predictions, std::span<const PoseOffset> targets);

struct SyntheticEvalConfig {
  OffsetRange offset_range;
  /// Field of view and impairments applied to the map-derived measurements.
  SensorConfig sensor;
  int trials = 500;
  std::uint64_t seed = 1;
  double load_radius = kMapLoadRadius;
};

/// Held-out synthetic-offset task: clean field-of-view landmarks (then the
/// configured impairments) at random trajectory poses, a sampled offset, and
/// the residual of the model's prediction in the prior's frame.
RmseReport evaluate_synthetic(const OffsetModel& model, const LandmarkMap& map, const Trajectory& trajectory,
                              const SyntheticEvalConfig& config);

/// Same trials as evaluate_synthetic, summarized as a per-axis gain and
/// residual spread for the filter's network measurement.
NetCalibration calibrate_synthetic(const OffsetModel& model, const LandmarkMap& map, const Trajectory& trajectory,
                                   const SyntheticEvalConfig& config);

enum class SweepVariable { clutter, miss, noise, combined };

std::string to_string(SweepVariable v);
SweepVariable parse_sweep_variable(const std::string& s);

struct SweepSpec {
  SweepVariable variable = SweepVariable::clutter;
  std::vector<double> grid;
  int trials = 500;
  std::uint64_t seed = 1;

  static std::vector<double> default_grid(SweepVariable v);
  void validate() const;
};

/// Sensor settings for one grid value. The combined sweep treats the value as
/// an iteration index i: lambda_clutter = lambda_miss = i, sigma = 0.027 i.
SensorConfig sweep_sensor(SweepVariable variable, double value, const SensorConfig& base);

struct SweepRow {
  double value = 0;
  RmseReport report;
};

/// Rows sorted by grid value. Trial randomness depends only on (seed, trial),
/// so all grid points share their poses and offsets.
std::vector<SweepRow> run_sweep(const SweepSpec& spec, const OffsetModel& model, const LandmarkMap& map,
                                const Trajectory& trajectory, const SyntheticEvalConfig& base);

/// Least-squares slope of y against x.
double fitted_slope(std::span<const double> x, std::span<const double> y);

struct TimingStats {
  double mean_ms = 0;
  double p95_ms = 0;
  int repetitions = 0;
};

TimingStats summarize_timings(std::vector<double> ms);

/// Random inputs for the timing harness: `n_meas` vehicle-frame points and a
/// map holding `n_map` landmarks within the load radius of `pose`.
struct BenchInputs {
  Pose pose;
  std::vector<Point2> meas;
  LandmarkMap map;
};

BenchInputs make_bench_inputs(int n_meas, int n_map, std::uint64_t seed);

/// Wall-clock per network correction (map loading and transform included).
TimingStats bench_inference(const SetNetwork& net, const BenchInputs& inputs, int repetitions, int warmup = 5);

/// Wall-clock per particle-filter step on the same inputs.
TimingStats bench_mcl(const BenchInputs& inputs, std::size_t n_particles, int repetitions, int warmup = 2,
                      std::uint64_t seed = 1);

enum class ReportFormat { csv, svg };

/// CSV `value,rmse_x,rmse_y,rmse_phi`, or an SVG with a position panel and a
/// heading panel. Output is byte-deterministic.
void emit_report(std::span<const SweepRow> rows, const std::string& variable, const std::filesystem::path& path,
                 ReportFormat format);

void save_rmse_report(const RmseReport& report, const std::filesystem::path& path);

}  // namespace setloc
