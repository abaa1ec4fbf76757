// Copyright 2026 The setloc Authors
// SPDX-License-Identifier: Apache-2.0
//
// Landmark measurement and GPS simulation.
//
// A measurement set is built in a fixed order: visibility, missed detections,
// clutter, coordinate noise. Noise only perturbs real detections; clutter is
// drawn exactly Poisson-uniform on the field-of-view disk. Each impairment
// draws from its own sub-stream of the caller's rng.

#pragma once

#include <cstdint>
#include <vector>

#include "setloc/geometry.hpp"
#include "setloc/rng.hpp"
#include "setloc/world.hpp"

namespace setloc {

struct MeasurementSet {
  std::vector<Point2> points;  // vehicle frame, no ordering contract
  double t = 0;
};

struct SensorConfig {
  double fov_radius = 50.0;
  double lambda_clutter = 0.0;
  double lambda_miss = 0.0;
  double sigma_syn = 0.0;
  double gps_sigma_xy = 2.0;
  double gps_sigma_phi = deg_to_rad(10.0);

  void validate() const;
};

struct GpsReading {
  Pose pose;
  double t = 0;
};

/// Poisson(lambda) by sequential inversion below 30, PTRS rejection above.
std::uint64_t sample_poisson(double lambda, Rng& rng);

/// Poisson probability mass lambda^k exp(-lambda) / k!.
double poisson_pmf(double lambda, std::uint64_t k);

/// Landmarks within fov_radius of the vehicle, in the vehicle frame, ascending id.
std::vector<Point2> visible_landmarks(const LandmarkMap& map, const Pose& true_pose, double fov_radius);

/// Removes k ~ Poisson(lambda_miss) distinct points uniformly at random.
std::vector<Point2> apply_miss(std::vector<Point2> points, double lambda_miss, Rng& rng);

/// Appends k ~ Poisson(lambda_clutter) points uniform on the fov disk.
std::vector<Point2> apply_clutter(std::vector<Point2> points, double lambda_clutter, double fov_radius, Rng& rng);

/// Perturbs each coordinate of the first `count` points by Uniform(-sigma, sigma).
std::vector<Point2> apply_noise(std::vector<Point2> points, double sigma_syn, Rng& rng,
                                std::size_t count = static_cast<std::size_t>(-1));

/// Impairment pipeline applied to an already visible point list.
std::vector<Point2> impair(std::vector<Point2> visible, const SensorConfig& config, const Rng& rng);

MeasurementSet simulate_measurements(const LandmarkMap& map, const Pose& true_pose, const SensorConfig& config,
                                     const Rng& rng, double t = 0);

GpsReading simulate_gps(const Pose& true_pose, double sigma_xy, double sigma_phi, Rng& rng, double t = 0);

}  // namespace setloc
