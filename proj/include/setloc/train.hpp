// Copyright 2026 The setloc Authors
// SPDX-License-Identifier: Apache-2.0
//
// Training: synthetic pose-offset samples, the two-task loss with learned
// homoscedastic weights, ADAM and the training loop.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "setloc/net.hpp"
#include "setloc/sensors.hpp"
#include "setloc/world.hpp"

namespace setloc {

/// Half-widths of the uniform offset prior.
struct OffsetRange {
  double sigma_x = 2.0;
  double sigma_y = 2.0;
  double sigma_phi = deg_to_rad(10.0);

  static OffsetRange wide() { return {2.0, 2.0, deg_to_rad(10.0)}; }
  static OffsetRange medium() { return {1.0, 1.0, deg_to_rad(4.0)}; }
  static OffsetRange narrow() { return {0.5, 0.5, deg_to_rad(2.0)}; }

  void validate() const;
  friend bool operator==(const OffsetRange&, const OffsetRange&) = default;
};

PoseOffset sample_offset(const OffsetRange& range, Rng& rng);

/// Network input pair plus regression target. Both point sets are in the
/// vehicle frame; compose_local(prior, target) is the true pose.
struct TrainSample {
  Matrix meas;
  Matrix map_pts;
  PoseOffset target;
};

inline constexpr double kMapLoadRadius = 100.0;

/// The prior pose a sample is built around: compose_local(prior, offset) == true_pose.
Pose displaced_prior(const Pose& true_pose, const PoseOffset& offset);

/// Loads map landmarks within `load_radius` of `pose`, in the frame of `pose`.
std::vector<Point2> load_map_points(const LandmarkMap& map, const Pose& pose, double load_radius = kMapLoadRadius);

/// Builds a sample for a given offset. Returns nullopt (rejection) when either
/// point list would be empty.
std::optional<TrainSample> make_train_sample(const LandmarkMap& map, const Pose& true_pose,
                                             const MeasurementSet& meas, const PoseOffset& offset,
                                             double load_radius = kMapLoadRadius);

/// Samples the offset from `range` and builds the sample.
std::optional<TrainSample> make_train_sample(const LandmarkMap& map, const Pose& true_pose,
                                             const MeasurementSet& meas, const OffsetRange& range, Rng& rng,
                                             double load_radius = kMapLoadRadius);

struct LossResult {
  double total = 0;
  double l_tran = 0;
  double l_rot = 0;
  std::vector<Eigen::Vector3d> d_pred;
  double d_s_tran = 0;
  double d_s_rot = 0;
};

/// L = L_tran e^{-s_tran} + s_tran + L_rot e^{-s_rot} + s_rot with batch-mean
/// squared errors; the heading residual is wrapped before squaring.
LossResult loss(std::span<const Eigen::Vector3d> preds, std::span<const PoseOffset> targets, double s_tran,
                double s_rot);
LossResult loss(const PoseOffset& pred, const PoseOffset& target, double s_tran, double s_rot);

/// Residual (pred - target) with the heading component wrapped.
Eigen::Vector3d offset_residual(const Eigen::Vector3d& pred, const PoseOffset& target);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  friend bool operator==(const AdamConfig&, const AdamConfig&) = default;
};

struct AdamState {
  NetParams m;
  NetParams v;
  std::uint64_t step = 0;

  static AdamState zeros_like(const NetParams& params);
};

/// One bias-corrected ADAM update; s_tran and s_rot are ordinary parameters.
void adam_step(NetParams& params, const NetParams& grads, AdamState& state, double lr, const AdamConfig& cfg = {});

enum class MeasurementRegime {
  map_derived,  // clean map landmarks within the field of view
  simulated,    // field-of-view landmarks passed through the sensor impairments
};

struct TrainConfig {
  int batch_size = 500;
  double learning_rate = 1e-5;
  int steps = 1000;
  OffsetRange offset_range;
  std::uint64_t seed = 0;
  AdamConfig adam;
  double load_radius = kMapLoadRadius;
  SensorConfig sensor;
  MeasurementRegime regime = MeasurementRegime::map_derived;
  int threads = 1;
  int rejection_window = 1000;

  void validate() const;
};

struct LossRecord {
  std::uint64_t step = 0;
  double loss = 0;
  double l_tran = 0;
  double l_rot = 0;
  double s_tran = 0;
  double s_rot = 0;

  friend bool operator==(const LossRecord&, const LossRecord&) = default;
};

/// Source of training samples for a given (step, slot) key.
class SampleSource {
 public:
  SampleSource(const LandmarkMap& map, const Trajectory& trajectory, const TrainConfig& config);

  /// Deterministic in (seed, step, slot); redraws rejected samples internally.
  TrainSample draw(std::uint64_t step, std::uint64_t slot);

  std::uint64_t attempts() const { return attempts_; }
  std::uint64_t rejections() const { return rejections_; }

 private:
  const LandmarkMap& map_;
  const Trajectory& trajectory_;
  TrainConfig config_;
  std::uint64_t attempts_ = 0;
  std::uint64_t rejections_ = 0;
  std::uint64_t window_attempts_ = 0;
  std::uint64_t window_rejections_ = 0;
};

struct TrainState {
  NetParams params;
  AdamState adam;
  std::uint64_t step = 0;
};

struct TrainResult {
  TrainState state;
  std::vector<LossRecord> trace;
};

/// Called after every optimizer step with the post-update network.
using StepCallback = std::function<void(const LossRecord&, const SetNetwork&, const AdamState&)>;

/// Runs `config.steps` further steps from `state` (fresh init when empty).
TrainResult train_loop(const LandmarkMap& map, const Trajectory& trajectory, const NetConfig& net_config,
                       const TrainConfig& config, std::optional<TrainState> resume = std::nullopt,
                       const StepCallback& on_step = {});

/// One optimizer step on explicit samples. Returns the pre-update loss.
LossRecord train_step(SetNetwork& net, AdamState& adam, std::span<const TrainSample> batch, double lr,
                      const AdamConfig& adam_cfg, const Rng& dropout_rng, int threads = 1);

void save_loss_trace(std::span<const LossRecord> trace, const std::filesystem::path& path);

// Checkpoints ---------------------------------------------------------------

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  int version = kCheckpointVersion;
  NetConfig net_config;
  TrainConfig train_config;
  NetParams params;
  std::optional<AdamState> adam;
  std::uint64_t step = 0;
  std::string rng_digest;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);

/// Throws parse / version_mismatch errors; with `expected` set, also rejects
/// checkpoints whose network dimensions differ.
Checkpoint load_checkpoint(const std::filesystem::path& path, const std::optional<NetConfig>& expected = std::nullopt);

std::string rng_digest(std::uint64_t seed, std::uint64_t step);

}  // namespace setloc
