// Copyright 2026 The setloc Authors
// SPDX-License-Identifier: Apache-2.0

#include "setloc/sensors.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>
#include <numbers>

namespace setloc {

namespace {

enum StreamKey : std::uint64_t { kMissStream = 1, kClutterStream = 2, kNoiseStream = 3 };

std::uint64_t poisson_inversion(double lambda, Rng& rng) {
  const double u = rng.uniform();
  double p = std::exp(-lambda);
  double cdf = p;
  std::uint64_t k = 0;
  while (u > cdf) {
    ++k;
    p *= lambda / static_cast<double>(k);
    cdf += p;
    if (p == 0 && cdf < u) break;  // u above the representable tail
  }
  return k;
}

// Hörmann's transformed rejection with squeeze (PTRS).
std::uint64_t poisson_ptrs(double lambda, Rng& rng) {
  const double slam = std::sqrt(lambda);
  const double loglam = std::log(lambda);
  const double b = 0.931 + 2.53 * slam;
  const double a = -0.059 + 0.02483 * b;
  const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
  const double vr = 0.9277 - 3.6224 / (b - 2);
  while (true) {
    const double u = rng.uniform() - 0.5;
    const double v = rng.uniform();
    const double us = 0.5 - std::abs(u);
    const double k = std::floor((2 * a / us + b) * u + lambda + 0.43);
    if (us >= 0.07 && v <= vr) return static_cast<std::uint64_t>(k);
    if (k < 0 || (us < 0.013 && v > us)) continue;
    if (std::log(v) + std::log(inv_alpha) - std::log(a / (us * us) + b) <=
        -lambda + k * loglam - std::lgamma(k + 1)) {
      return static_cast<std::uint64_t>(k);
    }
  }
}

}  // namespace

void SensorConfig::validate() const {
  for (const double v : {fov_radius, lambda_clutter, lambda_miss, sigma_syn, gps_sigma_xy, gps_sigma_phi}) {
    if (!(v >= 0) || !std::isfinite(v)) {
      throw Error(ErrorCode::invalid_argument, "SensorConfig: parameters must be finite and non-negative");
    }
  }
  if (!(fov_radius > 0)) throw Error(ErrorCode::invalid_argument, "SensorConfig: fov_radius must be positive");
}

std::uint64_t sample_poisson(double lambda, Rng& rng) {
  if (!std::isfinite(lambda) || lambda < 0) {
    throw Error(ErrorCode::invalid_argument, "sample_poisson: lambda must be finite and non-negative");
  }
  if (lambda == 0) return 0;
  return lambda < 30 ? poisson_inversion(lambda, rng) : poisson_ptrs(lambda, rng);
}

double poisson_pmf(double lambda, std::uint64_t k) {
  const double kd = static_cast<double>(k);
  if (lambda == 0) return k == 0 ? 1.0 : 0.0;
  return std::exp(kd * std::log(lambda) - lambda - std::lgamma(kd + 1));
}

std::vector<Point2> visible_landmarks(const LandmarkMap& map, const Pose& true_pose, double fov_radius) {
  const auto to_vehicle = invert(pose_to_transform(true_pose));
  std::vector<Point2> out;
  for (const auto& lm : map.query_radius(true_pose.position(), fov_radius)) {
    out.push_back(apply(to_vehicle, lm.position));
  }
  return out;
}

std::vector<Point2> apply_miss(std::vector<Point2> points, double lambda_miss, Rng& rng) {
  const auto k = sample_poisson(lambda_miss, rng);
  if (k == 0) return points;
  if (k >= points.size()) return {};
  std::vector<Point2> kept;
  kept.reserve(points.size() - k);
  std::sample(points.begin(), points.end(), std::back_inserter(kept), points.size() - k, rng.engine());
  return kept;
}

std::vector<Point2> apply_clutter(std::vector<Point2> points, double lambda_clutter, double fov_radius, Rng& rng) {
  if (!(fov_radius > 0)) throw Error(ErrorCode::invalid_argument, "apply_clutter: fov_radius must be positive");
  const auto k = sample_poisson(lambda_clutter, rng);
  for (std::uint64_t i = 0; i < k; ++i) {
    const double r = fov_radius * std::sqrt(rng.uniform());
    const double theta = 2 * std::numbers::pi * rng.uniform();
    points.emplace_back(r * std::cos(theta), r * std::sin(theta));
  }
  return points;
}

std::vector<Point2> apply_noise(std::vector<Point2> points, double sigma_syn, Rng& rng, std::size_t count) {
  if (!(sigma_syn >= 0)) throw Error(ErrorCode::invalid_argument, "apply_noise: sigma must be non-negative");
  if (sigma_syn == 0) return points;
  const std::size_t n = std::min(count, points.size());
  for (std::size_t i = 0; i < n; ++i) {
    points[i].x() += rng.uniform(-sigma_syn, sigma_syn);
    points[i].y() += rng.uniform(-sigma_syn, sigma_syn);
  }
  return points;
}

std::vector<Point2> impair(std::vector<Point2> visible, const SensorConfig& config, const Rng& rng) {
  Rng miss_rng = rng.fork(kMissStream);
  Rng clutter_rng = rng.fork(kClutterStream);
  Rng noise_rng = rng.fork(kNoiseStream);
  auto points = apply_miss(std::move(visible), config.lambda_miss, miss_rng);
  const std::size_t detections = points.size();
  points = apply_clutter(std::move(points), config.lambda_clutter, config.fov_radius, clutter_rng);
  return apply_noise(std::move(points), config.sigma_syn, noise_rng, detections);
}

MeasurementSet simulate_measurements(const LandmarkMap& map, const Pose& true_pose, const SensorConfig& config,
                                     const Rng& rng, double t) {
  config.validate();
  return {impair(visible_landmarks(map, true_pose, config.fov_radius), config, rng), t};
}

GpsReading simulate_gps(const Pose& true_pose, double sigma_xy, double sigma_phi, Rng& rng, double t) {
  if (!(sigma_xy >= 0) || !(sigma_phi >= 0)) {
    throw Error(ErrorCode::invalid_argument, "simulate_gps: sigmas must be non-negative");
  }
  const double ex = sigma_xy > 0 ? rng.normal(0, sigma_xy) : 0.0;
  const double ey = sigma_xy > 0 ? rng.normal(0, sigma_xy) : 0.0;
  const double ephi = sigma_phi > 0 ? rng.normal(0, sigma_phi) : 0.0;
  return {Pose(true_pose.x + ex, true_pose.y + ey, true_pose.phi + ephi), t};
}

}  // namespace setloc
