// Copyright 2026 The setloc Authors
// SPDX-License-Identifier: Apache-2.0
//
// Run configuration: a flat `section.key = value` text format where every key
// has a default and unknown keys are rejected.

#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "setloc/eval.hpp"
#include "setloc/infer.hpp"
#include "setloc/net.hpp"
#include "setloc/train.hpp"
#include "setloc/world.hpp"

namespace setloc {

/// EKF noise given as standard deviations; angles in degrees.
struct EkfSigmas {
  double q_xy = 0.05;
  double q_phi_deg = 0.5;
  double q_v = 0.5;
  double q_omega_deg = 2.0;
  double r_xy = 0.5;
  double r_phi_deg = 3.0;
  double p0_xy = 2.0;
  double p0_phi_deg = 10.0;
  double p0_v = 2.0;
  double p0_omega_deg = 5.73;
  double initial_speed = 10.0;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string out_dir = "out";

  NetConfig net = NetConfig::desk_scale();
  TrainConfig train;
  int checkpoint_every = 1000;

  SensorConfig sensor;
  EkfSigmas ekf;
  MclConfig mcl;

  TrajectoryParams trajectory;
  MapParams map;

  int eval_trials = 500;
  std::uint64_t eval_seed = 1;
  int sequence_steps = 1000;
  int mcl_particles = 1000;
  int bench_repetitions = 200;
  int bench_points = 50;

  /// "desk-scale", "paper-scale" or "tiny".
  static RunConfig preset(const std::string& name);

  /// Sets one key from its text form. Throws invalid_argument on unknown keys
  /// or malformed values.
  void set(const std::string& key, const std::string& value);
  /// All keys with their current values, in a fixed order.
  std::vector<std::pair<std::string, std::string>> entries() const;

  /// Training configuration with seed and sensor filled in.
  TrainConfig train_config() const;
  EkfConfig ekf_config() const;
  SyntheticEvalConfig eval_config() const;

  void validate() const;
};

/// Applies a config file on top of `base`. Lines are `key = value`; `#`
/// starts a comment.
RunConfig load_run_config(const std::filesystem::path& path, RunConfig base);

/// Parses `key=value` as used by --set.
std::pair<std::string, std::string> parse_assignment(const std::string& text);

void save_run_config(const RunConfig& config, const std::filesystem::path& path);

}  // namespace setloc
