// Copyright 2026 The setloc Authors
// SPDX-License-Identifier: Apache-2.0
//
// Inference pipelines: per-step GPS correction, chained network steps, an
// EKF with a CTRV motion model, and a simple particle-filter baseline.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "setloc/net.hpp"
#include "setloc/sensors.hpp"
#include "setloc/world.hpp"

namespace setloc {

using Vector5 = Eigen::Matrix<double, 5, 1>;
using Matrix5 = Eigen::Matrix<double, 5, 5>;
using Matrix3 = Eigen::Matrix3d;
using Matrix2 = Eigen::Matrix2d;

// Network corrections -------------------------------------------------------

/// The model's offset for the measurements against the map loaded around
/// `anchor`. Same errors as network_correct.
PoseOffset network_offset(const OffsetModel& model, const Pose& anchor, std::span<const Point2> meas,
                          const LandmarkMap& map, double load_radius = 100.0);

/// Corrects `anchor` with the model's offset for the measurements and the map
/// loaded around `anchor`. Throws ErrorCode::no_landmarks when either point
/// list is empty.
Pose network_correct(const OffsetModel& model, const Pose& anchor, std::span<const Point2> meas,
                     const LandmarkMap& map, double load_radius = 100.0);

Pose gps_infer(const OffsetModel& model, const GpsReading& gps, const MeasurementSet& meas, const LandmarkMap& map,
               double load_radius = 100.0);

Pose step_network(const OffsetModel& model, const Pose& prev_pose, const MeasurementSet& meas,
                  const LandmarkMap& map, double load_radius = 100.0);

/// Stand-in model that registers the two point lists exactly (no learning):
/// finds the rigid transform carrying every measurement onto a map point
/// within `tolerance`. Returns a zero offset when no such transform exists.
OffsetModel exact_registration_model(double tolerance = 1e-6);

// EKF -----------------------------------------------------------------------

/// State (x, y, phi, v, omega).
struct EkfState {
  Vector5 mean = Vector5::Zero();
  Matrix5 cov = Matrix5::Identity();

  Pose pose() const { return {mean(0), mean(1), mean(2)}; }
};

/// Per-axis linear fit of a model's predicted offsets against the true ones,
/// prediction ~ gain * target + noise. An axis the model cannot resolve has
/// gain near zero.
struct NetCalibration {
  Eigen::Vector3d gain = Eigen::Vector3d::Ones();
  /// Residual standard deviation around the fit (meters, meters, radians).
  Eigen::Vector3d sigma = Eigen::Vector3d::Zero();
};

/// Least-squares gain through the origin and residual spread, per axis.
NetCalibration fit_calibration(std::span<const PoseOffset> predictions, std::span<const PoseOffset> targets);

struct EkfConfig {
  /// Process noise per second; multiplied by dt in the prediction.
  Matrix5 q_per_second;
  /// Noise of the gain-corrected network offset, in the anchor's frame.
  Matrix3 r_net;
  /// Network offsets are divided by this before the update.
  Eigen::Vector3d net_gain = Eigen::Vector3d::Ones();
  /// GPS position noise.
  Matrix2 r_gps;
  Matrix5 p0;
  double initial_speed = 10.0;
  double straight_eps = 1e-6;

  EkfConfig();
  /// R_net from validation RMSE values (meters, meters, radians).
  void set_r_net_from_rmse(double rmse_x, double rmse_y, double rmse_phi);
  /// Gain and R_net from a calibration. Spreads are floored at 0.05 m and
  /// 0.1 degrees. An axis with gain below `min_gain` is unresolved and gets a
  /// variance of at least 1 / min_gain^2.
  void set_net_calibration(const NetCalibration& cal, double min_gain = 1e-6);
  void validate() const;
};

/// CTRV transition of the full state.
Vector5 ctrv_transition(const Vector5& state, double dt, double straight_eps = 1e-6);
/// Analytic Jacobian of ctrv_transition with respect to the state.
Matrix5 ctrv_jacobian(const Vector5& state, double dt, double straight_eps = 1e-6);

EkfState ekf_predict(const EkfState& state, double dt, const Matrix5& q_per_second, double straight_eps = 1e-6);

/// Update with a full pose observation (heading innovation wrapped, Joseph form).
EkfState ekf_update(const EkfState& state, const Pose& z, const Matrix3& r);

/// Update with a network offset measured from `anchor`, which must be the
/// state's current pose. The offset is divided by `config.net_gain` and
/// `config.r_net` is rotated into the world frame.
EkfState ekf_update_offset(const EkfState& state, const PoseOffset& offset, const EkfConfig& config);

/// Update with a position-only observation.
EkfState ekf_update_position(const EkfState& state, const Point2& z, const Matrix2& r);

// Sequences -------------------------------------------------------------------

enum class InferMode { gps_only, gps_net, net_only, net_ekf, net_ekf_gps };

std::string to_string(InferMode mode);
InferMode parse_infer_mode(const std::string& s);

enum class StepFlag { normal, dead_reckoned, diverged };

std::string to_string(StepFlag flag);

struct SequenceResult {
  std::vector<double> t;
  std::vector<Pose> estimates;
  std::vector<Pose> truths;
  std::vector<StepFlag> flags;

  double dead_reckoned_fraction() const;
};

struct SequenceOptions {
  SensorConfig sensor;
  EkfConfig ekf;
  double load_radius = 100.0;
  /// Starting pose for the chained modes; the first GPS fix when unset.
  std::optional<Pose> initial_pose;
};

/// Runs one inference mode along the trajectory. Measurements and GPS are
/// simulated from sub-streams of `rng` keyed by step index, so all modes see
/// the same inputs for the same rng.
SequenceResult run_sequence(InferMode mode, const OffsetModel& model, const LandmarkMap& map,
                            const Trajectory& trajectory, const SequenceOptions& options, const Rng& rng);

void save_estimates(const SequenceResult& result, const std::filesystem::path& path);

// Particle filter baseline -----------------------------------------------------

struct Particle {
  Pose pose;
  double weight = 0;
};

struct ParticleSet {
  std::vector<Particle> particles;

  /// n particles drawn around `center` with uniform weights.
  static ParticleSet around(const Pose& center, std::size_t n, double sigma_xy, double sigma_phi, Rng& rng);
  double effective_size() const;
};

struct MclConfig {
  double sigma_l = 1.0;  // likelihood scale, meters
  double motion_sigma_xy = 0.1;
  double motion_sigma_phi = deg_to_rad(0.5);
  double load_radius = 100.0;
};

struct MclResult {
  ParticleSet particles;
  Pose estimate;
  bool diverged = false;
};

/// Weighted mean with a circular mean for the heading.
Pose weighted_mean_pose(const ParticleSet& set);

/// One filter step: apply `motion` (in each particle's frame) with Gaussian
/// noise, weight by exp(-sum_z min_m |z - m|^2 / (2 sigma_l^2)), normalize,
/// resample systematically when the effective size drops below n/2.
MclResult mcl_baseline_step(ParticleSet particles, std::span<const Point2> meas, const LandmarkMap& map,
                            const PoseOffset& motion, const MclConfig& config, Rng& rng);

}  // namespace setloc
