// Copyright 2026 The setloc Authors
// SPDX-License-Identifier: Apache-2.0

#include "setloc/world.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_set>

#include "csv.hpp"
#include "setloc/sensors.hpp"

namespace setloc {

namespace {

// Source mix of the reference map: 1731 laser, 718 radar, 1411 camera.
constexpr double kLaserShare = 1731.0 / 3860.0;
constexpr double kRadarShare = 718.0 / 3860.0;

}  // namespace

std::string_view to_string(LandmarkSource s) {
  switch (s) {
    case LandmarkSource::laser: return "laser";
    case LandmarkSource::radar: return "radar";
    case LandmarkSource::camera: return "camera";
  }
  return "laser";
}

LandmarkSource parse_landmark_source(std::string_view s) {
  if (s == "laser") return LandmarkSource::laser;
  if (s == "radar") return LandmarkSource::radar;
  if (s == "camera") return LandmarkSource::camera;
  throw Error(ErrorCode::parse, "unknown landmark source '" + std::string(s) + "'");
}

LandmarkMap::LandmarkMap(std::vector<Landmark> landmarks, double cell_size)
    : landmarks_(std::move(landmarks)), cell_size_(cell_size) {
  if (!(cell_size_ > 0) || !std::isfinite(cell_size_)) {
    throw Error(ErrorCode::invalid_argument, "LandmarkMap: cell size must be positive");
  }
  std::sort(landmarks_.begin(), landmarks_.end(),
            [](const Landmark& a, const Landmark& b) { return a.id < b.id; });
  for (std::size_t i = 0; i < landmarks_.size(); ++i) {
    const auto& lm = landmarks_[i];
    if (i > 0 && landmarks_[i - 1].id == lm.id) {
      throw Error(ErrorCode::invalid_argument, "LandmarkMap: duplicate landmark id " + std::to_string(lm.id));
    }
    if (lm.id < 0) {
      throw Error(ErrorCode::invalid_argument, "LandmarkMap: negative landmark id");
    }
    if (!lm.position.allFinite()) {
      throw Error(ErrorCode::invalid_argument, "LandmarkMap: non-finite landmark position");
    }
    cells_[key(cell_coord(lm.position.x()), cell_coord(lm.position.y()))].push_back(static_cast<std::uint32_t>(i));
  }
}

std::int64_t LandmarkMap::cell_coord(double v) const {
  return static_cast<std::int64_t>(std::floor(v / cell_size_));
}

LandmarkMap::CellKey LandmarkMap::key(std::int64_t cx, std::int64_t cy) const {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(cx)) << 32) |
         static_cast<std::uint32_t>(cy);
}

std::vector<Landmark> LandmarkMap::query_radius(const Point2& center, double r) const {
  if (!(r > 0)) throw Error(ErrorCode::invalid_argument, "query_radius: radius must be positive");
  const double r2 = r * r;
  std::vector<std::uint32_t> hits;
  auto scan = [&](const std::vector<std::uint32_t>& cell) {
    for (const auto idx : cell) {
      if ((landmarks_[idx].position - center).squaredNorm() <= r2) hits.push_back(idx);
    }
  };

  const auto x0 = cell_coord(center.x() - r), x1 = cell_coord(center.x() + r);
  const auto y0 = cell_coord(center.y() - r), y1 = cell_coord(center.y() + r);
  const double n_cells = (static_cast<double>(x1 - x0) + 1) * (static_cast<double>(y1 - y0) + 1);
  if (n_cells > static_cast<double>(cells_.size())) {
    for (const auto& [k, cell] : cells_) scan(cell);
  } else {
    for (auto cx = x0; cx <= x1; ++cx) {
      for (auto cy = y0; cy <= y1; ++cy) {
        const auto it = cells_.find(key(cx, cy));
        if (it != cells_.end()) scan(it->second);
      }
    }
  }
  std::sort(hits.begin(), hits.end());
  std::vector<Landmark> out;
  out.reserve(hits.size());
  for (const auto idx : hits) out.push_back(landmarks_[idx]);
  return out;
}

std::vector<Landmark> query_radius_brute_force(const LandmarkMap& map, const Point2& center, double r) {
  std::vector<Landmark> out;
  for (const auto& lm : map.landmarks()) {
    if ((lm.position - center).squaredNorm() <= r * r) out.push_back(lm);
  }
  return out;
}

double Trajectory::length() const {
  double len = 0;
  for (std::size_t i = 1; i < points.size(); ++i) {
    len += (points[i].pose.position() - points[i - 1].pose.position()).norm();
  }
  return len;
}

Trajectory generate_trajectory(std::uint64_t seed, const TrajectoryParams& p) {
  if (!(p.dt > 0)) throw Error(ErrorCode::invalid_argument, "generate_trajectory: dt must be positive");
  if (!(p.duration >= 2 * p.dt)) {
    throw Error(ErrorCode::invalid_argument, "generate_trajectory: duration must be at least 2*dt");
  }
  if (!(p.speed_min >= 0) || !(p.speed_max >= p.speed_min)) {
    throw Error(ErrorCode::invalid_argument, "generate_trajectory: invalid speed range");
  }
  if (!(p.turn_rate_max >= p.turn_rate_min) || !std::isfinite(p.turn_rate_min) || !std::isfinite(p.turn_rate_max)) {
    throw Error(ErrorCode::invalid_argument, "generate_trajectory: invalid turn rate range");
  }
  if (!(p.segment_length > 0)) {
    throw Error(ErrorCode::invalid_argument, "generate_trajectory: segment length must be positive");
  }

  Rng rng(seed);
  const auto n_steps = static_cast<std::size_t>(std::floor(p.duration / p.dt + 1e-9));
  const auto steps_per_segment =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(p.segment_length / p.dt)));

  Trajectory traj;
  traj.dt = p.dt;
  traj.points.reserve(n_steps + 1);
  Pose pose = p.start;
  double v = 0, omega = 0;
  for (std::size_t i = 0; i <= n_steps; ++i) {
    if (i % steps_per_segment == 0) {
      v = rng.uniform(p.speed_min, p.speed_max);
      omega = rng.uniform(p.turn_rate_min, p.turn_rate_max);
    }
    traj.points.push_back({static_cast<double>(i) * p.dt, pose, v, omega});
    pose = ctrv_motion(pose, v, omega, p.dt);
  }
  return traj;
}

LandmarkMap generate_map(std::uint64_t seed, const Trajectory& route, const MapParams& p) {
  if (!(p.density_per_km > 0)) throw Error(ErrorCode::invalid_argument, "generate_map: density must be positive");
  if (!(p.lateral_spread >= 0) || !(p.lateral_sigma >= 0)) {
    throw Error(ErrorCode::invalid_argument, "generate_map: lateral parameters must be non-negative");
  }
  std::vector<double> cumulative{0.0};
  for (std::size_t i = 1; i < route.points.size(); ++i) {
    cumulative.push_back(cumulative.back() +
                         (route.points[i].pose.position() - route.points[i - 1].pose.position()).norm());
  }
  const double length = cumulative.back();
  if (!(length > 0)) throw Error(ErrorCode::invalid_argument, "generate_map: degenerate route of length 0");

  const Rng root(seed);
  Rng count_rng = root.fork(0);
  Rng rng = root.fork(1);
  const auto count = sample_poisson(p.density_per_km * length / 1000.0, count_rng);

  std::vector<Landmark> landmarks;
  landmarks.reserve(count);
  for (std::uint64_t n = 0; n < count; ++n) {
    const double s = rng.uniform(0.0, length);
    auto seg = static_cast<std::size_t>(std::upper_bound(cumulative.begin(), cumulative.end(), s) - cumulative.begin());
    seg = std::clamp<std::size_t>(seg, 1, cumulative.size() - 1);
    // skip zero-length segments (stationary vehicle)
    while (cumulative[seg] == cumulative[seg - 1] && seg + 1 < cumulative.size()) ++seg;
    const Point2 a = route.points[seg - 1].pose.position();
    const Point2 b = route.points[seg].pose.position();
    const double seg_len = cumulative[seg] - cumulative[seg - 1];
    const Point2 dir = (b - a) / seg_len;
    const Point2 base = a + dir * (s - cumulative[seg - 1]);

    double lateral = 0;
    if (p.lateral_sigma > 0 && p.lateral_spread > 0) {
      do {
        lateral = rng.normal(0.0, p.lateral_sigma);
      } while (std::abs(lateral) > p.lateral_spread);
    }
    const Point2 normal(-dir.y(), dir.x());

    const double u = rng.uniform();
    const auto source = u < kLaserShare                ? LandmarkSource::laser
                        : u < kLaserShare + kRadarShare ? LandmarkSource::radar
                                                        : LandmarkSource::camera;
    landmarks.push_back({static_cast<std::int64_t>(n), base + lateral * normal, source});
  }
  return LandmarkMap(std::move(landmarks), p.cell_size);
}

namespace {

std::ofstream open_for_write(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot open '" + path.string() + "' for writing");
  return out;
}

std::ifstream open_for_read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open '" + path.string() + "' for reading");
  return in;
}

void check_written(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw Error(ErrorCode::io, "write to '" + path.string() + "' failed");
}

}  // namespace

void save_map(const LandmarkMap& map, const std::filesystem::path& path) {
  auto out = open_for_write(path);
  out << "id,x,y,source\n";
  for (const auto& lm : map.landmarks()) {
    out << lm.id << ',' << detail::format_double(lm.position.x()) << ','
        << detail::format_double(lm.position.y()) << ',' << to_string(lm.source) << '\n';
  }
  check_written(out, path);
}

LandmarkMap load_map(const std::filesystem::path& path, double cell_size) {
  auto in = open_for_read(path);
  const std::string file = path.string();
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line) || detail::trim(line) != "id,x,y,source") {
    throw detail::parse_error(file, 1, "expected header 'id,x,y,source'");
  }
  ++line_no;
  std::vector<Landmark> landmarks;
  std::unordered_set<std::int64_t> ids;
  while (std::getline(in, line)) {
    ++line_no;
    const auto row = detail::trim(line);
    if (row.empty()) continue;
    const auto fields = detail::split(row, ',');
    Landmark lm;
    double x = 0, y = 0;
    if (fields.size() != 4 || !detail::parse_int(fields[0], lm.id) || lm.id < 0 ||
        !detail::parse_double(fields[1], x) || !detail::parse_double(fields[2], y) || !std::isfinite(x) ||
        !std::isfinite(y)) {
      throw detail::parse_error(file, line_no, "malformed landmark row");
    }
    try {
      lm.source = parse_landmark_source(fields[3]);
    } catch (const Error& e) {
      throw detail::parse_error(file, line_no, e.what());
    }
    if (!ids.insert(lm.id).second) {
      throw detail::parse_error(file, line_no, "duplicate landmark id " + std::to_string(lm.id));
    }
    lm.position = {x, y};
    landmarks.push_back(lm);
  }
  return LandmarkMap(std::move(landmarks), cell_size);
}

void save_trajectory(const Trajectory& traj, const std::filesystem::path& path) {
  auto out = open_for_write(path);
  out << "t,x,y,phi,v,omega\n";
  for (const auto& p : traj.points) {
    out << detail::format_double(p.t) << ',' << detail::format_double(p.pose.x) << ','
        << detail::format_double(p.pose.y) << ',' << detail::format_double(p.pose.phi) << ','
        << detail::format_double(p.v) << ',' << detail::format_double(p.omega) << '\n';
  }
  check_written(out, path);
}

Trajectory load_trajectory(const std::filesystem::path& path) {
  auto in = open_for_read(path);
  const std::string file = path.string();
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line) || detail::trim(line) != "t,x,y,phi,v,omega") {
    throw detail::parse_error(file, 1, "expected header 't,x,y,phi,v,omega'");
  }
  Trajectory traj;
  while (std::getline(in, line)) {
    ++line_no;
    const auto row = detail::trim(line);
    if (row.empty()) continue;
    const auto fields = detail::split(row, ',');
    double v[6];
    bool ok = fields.size() == 6;
    for (std::size_t i = 0; ok && i < 6; ++i) ok = detail::parse_double(fields[i], v[i]) && std::isfinite(v[i]);
    if (!ok) throw detail::parse_error(file, line_no, "malformed trajectory row");
    if (!traj.points.empty() && !(v[0] > traj.points.back().t)) {
      throw detail::parse_error(file, line_no, "time stamps must be strictly increasing");
    }
    if (v[4] < 0) throw detail::parse_error(file, line_no, "negative speed");
    traj.points.push_back({v[0], Pose(v[1], v[2], v[3]), v[4], v[5]});
  }
  if (traj.points.size() < 2) throw detail::parse_error(file, line_no, "trajectory needs at least 2 points");
  traj.dt = traj.points[1].t - traj.points[0].t;
  return traj;
}

}  // namespace setloc
