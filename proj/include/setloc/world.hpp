// Copyright 2026 The setloc Authors
// SPDX-License-Identifier: Apache-2.0
//
// Landmark maps with a uniform-grid radius index, synthetic route/map
// generation and CSV persistence.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "setloc/geometry.hpp"

namespace setloc {

enum class LandmarkSource : std::uint8_t { laser, radar, camera };

std::string_view to_string(LandmarkSource s);
LandmarkSource parse_landmark_source(std::string_view s);

struct Landmark {
  std::int64_t id = 0;
  Point2 position = Point2::Zero();
  LandmarkSource source = LandmarkSource::laser;

  friend bool operator==(const Landmark&, const Landmark&) = default;
};

/// Immutable landmark set with a uniform grid index over positions.
class LandmarkMap {
 public:
  static constexpr double kDefaultCellSize = 25.0;

  LandmarkMap() : LandmarkMap(std::vector<Landmark>{}) {}
  /// Throws on duplicate ids or non-finite positions.
  explicit LandmarkMap(std::vector<Landmark> landmarks, double cell_size = kDefaultCellSize);

  const std::vector<Landmark>& landmarks() const { return landmarks_; }
  std::size_t size() const { return landmarks_.size(); }
  bool empty() const { return landmarks_.empty(); }
  double cell_size() const { return cell_size_; }

  /// Landmarks with Euclidean distance <= r from center, ascending id.
  std::vector<Landmark> query_radius(const Point2& center, double r) const;

  friend bool operator==(const LandmarkMap& a, const LandmarkMap& b) {
    return a.landmarks_ == b.landmarks_;
  }

 private:
  using CellKey = std::uint64_t;
  CellKey key(std::int64_t cx, std::int64_t cy) const;
  std::int64_t cell_coord(double v) const;

  std::vector<Landmark> landmarks_;  // sorted by id
  double cell_size_;
  std::unordered_map<CellKey, std::vector<std::uint32_t>> cells_;
};

/// Brute-force O(n) radius scan; reference for the grid index.
std::vector<Landmark> query_radius_brute_force(const LandmarkMap& map, const Point2& center, double r);

struct TrajectoryPoint {
  double t = 0;
  Pose pose;
  double v = 0;
  double omega = 0;

  friend bool operator==(const TrajectoryPoint&, const TrajectoryPoint&) = default;
};

struct Trajectory {
  std::vector<TrajectoryPoint> points;
  double dt = 0;

  double length() const;
  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

/// Exact constant-turn-rate-and-velocity motion over dt.
template <typename Scalar>
PoseT<Scalar> ctrv_motion(const PoseT<Scalar>& p, Scalar v, Scalar omega, Scalar dt,
                          Scalar straight_eps = Scalar(1e-6)) {
  if (std::abs(omega) > straight_eps) {
    const Scalar phi1 = p.phi + omega * dt;
    return {p.x + v / omega * (std::sin(phi1) - std::sin(p.phi)),
            p.y + v / omega * (std::cos(p.phi) - std::cos(phi1)), phi1};
  }
  return {p.x + v * dt * std::cos(p.phi), p.y + v * dt * std::sin(p.phi), p.phi + omega * dt};
}

struct TrajectoryParams {
  double duration = 500.0;
  double dt = 0.1;
  double speed_min = 8.0;
  double speed_max = 12.0;
  double turn_rate_min = -0.1;
  double turn_rate_max = 0.1;
  double segment_length = 5.0;  // seconds of constant (v, omega)
  Pose start;
};

/// Piecewise-constant (v, omega) route integrated exactly with ctrv_motion.
Trajectory generate_trajectory(std::uint64_t seed, const TrajectoryParams& params);

struct MapParams {
  double density_per_km = 772.0;
  double lateral_spread = 30.0;  // truncation of the lateral offset
  double lateral_sigma = 15.0;
  double cell_size = LandmarkMap::kDefaultCellSize;
};

/// Poisson(density * route length) landmarks placed uniformly along the route
/// arc length with a truncated Gaussian lateral offset.
LandmarkMap generate_map(std::uint64_t seed, const Trajectory& route, const MapParams& params);

void save_map(const LandmarkMap& map, const std::filesystem::path& path);
LandmarkMap load_map(const std::filesystem::path& path, double cell_size = LandmarkMap::kDefaultCellSize);

void save_trajectory(const Trajectory& traj, const std::filesystem::path& path);
Trajectory load_trajectory(const std::filesystem::path& path);

}  // namespace setloc
