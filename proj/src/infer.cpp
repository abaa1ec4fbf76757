// Copyright 2026 The setloc Authors
// SPDX-License-Identifier: Apache-2.0

#include "setloc/infer.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include <Eigen/LU>

#include "csv.hpp"
#include "setloc/train.hpp"

namespace setloc {

namespace {

enum StreamKey : std::uint64_t { kMeasStream = 21, kGpsStream = 22 };

template <int N>
Eigen::Matrix<double, N, N> symmetrize(const Eigen::Matrix<double, N, N>& m) {
  return 0.5 * (m + m.transpose());
}

// Generic Joseph-form update for a linear observation z = H x.
template <int M>
EkfState linear_update(const EkfState& state, const Eigen::Matrix<double, M, 1>& innovation,
                       const Eigen::Matrix<double, M, 5>& h, const Eigen::Matrix<double, M, M>& r) {
  const Eigen::Matrix<double, M, M> s = h * state.cov * h.transpose() + r;
  const Eigen::FullPivLU<Eigen::Matrix<double, M, M>> lu(s);
  if (!lu.isInvertible() || !s.allFinite()) {
    throw Error(ErrorCode::numeric, "EKF innovation covariance is not invertible");
  }
  const Eigen::Matrix<double, 5, M> k = state.cov * h.transpose() * lu.inverse();
  EkfState out;
  out.mean = state.mean + k * innovation;
  out.mean(2) = wrap_angle(out.mean(2));
  const Matrix5 a = Matrix5::Identity() - k * h;
  out.cov = symmetrize<5>(a * state.cov * a.transpose() + k * r * k.transpose());
  if (!out.mean.allFinite() || !out.cov.allFinite()) throw Error(ErrorCode::numeric, "EKF update produced NaN");
  return out;
}

}  // namespace

// Network corrections -------------------------------------------------------

PoseOffset network_offset(const OffsetModel& model, const Pose& anchor, std::span<const Point2> meas,
                          const LandmarkMap& map, double load_radius) {
  if (meas.empty()) throw Error(ErrorCode::no_landmarks, "no measurements at this step");
  const auto map_pts = load_map_points(map, anchor, load_radius);
  if (map_pts.empty()) throw Error(ErrorCode::no_landmarks, "no map landmarks near the anchor pose");
  return model(to_matrix(meas), to_matrix(map_pts));
}

Pose network_correct(const OffsetModel& model, const Pose& anchor, std::span<const Point2> meas,
                     const LandmarkMap& map, double load_radius) {
  return compose_local(anchor, network_offset(model, anchor, meas, map, load_radius));
}

Pose gps_infer(const OffsetModel& model, const GpsReading& gps, const MeasurementSet& meas, const LandmarkMap& map,
               double load_radius) {
  return network_correct(model, gps.pose, meas.points, map, load_radius);
}

Pose step_network(const OffsetModel& model, const Pose& prev_pose, const MeasurementSet& meas,
                  const LandmarkMap& map, double load_radius) {
  return network_correct(model, prev_pose, meas.points, map, load_radius);
}

OffsetModel exact_registration_model(double tolerance) {
  return [tolerance](const Matrix& meas, const Matrix& map_pts) -> PoseOffset {
    const Eigen::Index n = meas.rows();
    const Eigen::Index m = map_pts.rows();
    if (n < 2 || m < 2) return {};
    const Eigen::RowVector2d a = meas.row(0);
    Eigen::Index far = 1;
    for (Eigen::Index i = 2; i < n; ++i) {
      if ((meas.row(i) - a).squaredNorm() > (meas.row(far) - a).squaredNorm()) far = i;
    }
    const Eigen::RowVector2d ab = meas.row(far) - a;
    const double d = ab.norm();
    if (d < tolerance) return {};
    const double tol2 = tolerance * tolerance;
    for (Eigen::Index i = 0; i < m; ++i) {
      for (Eigen::Index j = 0; j < m; ++j) {
        if (i == j) continue;
        const Eigen::RowVector2d mm = map_pts.row(j) - map_pts.row(i);
        if (std::abs(mm.norm() - d) > tolerance) continue;
        const double theta = std::atan2(mm.y(), mm.x()) - std::atan2(ab.y(), ab.x());
        const Eigen::Matrix2d rot = rotation_matrix(theta);
        const Eigen::Vector2d t = map_pts.row(i).transpose() - rot * a.transpose();
        bool ok = true;
        for (Eigen::Index q = 0; q < n && ok; ++q) {
          const Eigen::RowVector2d p = (rot * meas.row(q).transpose() + t).transpose();
          ok = ((map_pts.rowwise() - p).rowwise().squaredNorm().array() <= tol2).any();
        }
        if (ok) return {t.x(), t.y(), theta};
      }
    }
    return {};
  };
}

// EKF -----------------------------------------------------------------------

EkfConfig::EkfConfig() {
  q_per_second = Vector5(0.05 * 0.05, 0.05 * 0.05, std::pow(deg_to_rad(0.5), 2), 0.5 * 0.5,
                         std::pow(deg_to_rad(2.0), 2))
                     .asDiagonal();
  r_net = Eigen::Vector3d(0.5 * 0.5, 0.5 * 0.5, std::pow(deg_to_rad(3.0), 2)).asDiagonal();
  r_gps = Eigen::Vector2d(2.0 * 2.0, 2.0 * 2.0).asDiagonal();
  p0 = Vector5(2.0 * 2.0, 2.0 * 2.0, std::pow(deg_to_rad(10.0), 2), 2.0 * 2.0, 0.1 * 0.1).asDiagonal();
}

void EkfConfig::set_r_net_from_rmse(double rmse_x, double rmse_y, double rmse_phi) {
  r_net = Eigen::Vector3d(rmse_x * rmse_x, rmse_y * rmse_y, rmse_phi * rmse_phi).asDiagonal();
  net_gain.setOnes();
}

void EkfConfig::set_net_calibration(const NetCalibration& cal, double min_gain) {
  if (!(min_gain > 0)) throw Error(ErrorCode::invalid_argument, "set_net_calibration: min_gain must be positive");
  if (!cal.gain.allFinite() || !cal.sigma.allFinite()) {
    throw Error(ErrorCode::invalid_argument, "set_net_calibration: non-finite calibration");
  }
  net_gain = cal.gain.cwiseMax(min_gain);
  // A validation set can show zero residual (an exact model); keep R_net
  // invertible and the filter from locking onto the network.
  const Eigen::Vector3d sigma = cal.sigma.cwiseMax(Eigen::Vector3d(0.05, 0.05, deg_to_rad(0.1)));
  Eigen::Vector3d var = sigma.cwiseQuotient(net_gain).array().square();
  for (int a = 0; a < 3; ++a) {
    if (cal.gain(a) < min_gain) var(a) = std::max(var(a), 1.0 / (min_gain * min_gain));
  }
  r_net = var.asDiagonal();
}

NetCalibration fit_calibration(std::span<const PoseOffset> predictions, std::span<const PoseOffset> targets) {
  if (predictions.size() != targets.size() || predictions.empty()) {
    throw Error(ErrorCode::invalid_argument, "fit_calibration: need equally many predictions and targets");
  }
  Eigen::Vector3d pt = Eigen::Vector3d::Zero(), tt = Eigen::Vector3d::Zero();
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const Eigen::Vector3d p = predictions[i].vector(), t = targets[i].vector();
    pt += p.cwiseProduct(t);
    tt += t.cwiseProduct(t);
  }
  NetCalibration cal;
  for (int a = 0; a < 3; ++a) cal.gain(a) = tt(a) > 0 ? pt(a) / tt(a) : 0.0;
  Eigen::Vector3d ss = Eigen::Vector3d::Zero();
  for (std::size_t i = 0; i < targets.size(); ++i) {
    Eigen::Vector3d r = predictions[i].vector() - cal.gain.cwiseProduct(targets[i].vector());
    r(2) = wrap_angle(r(2));
    ss += r.cwiseProduct(r);
  }
  cal.sigma = (ss / static_cast<double>(targets.size())).cwiseSqrt();
  return cal;
}

void EkfConfig::validate() const {
  auto psd = [](const auto& m, const char* name) {
    if (!m.allFinite() || (m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
      throw Error(ErrorCode::invalid_argument, std::string("EkfConfig: ") + name + " must be finite and symmetric");
    }
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      if (m(i, i) < 0) throw Error(ErrorCode::invalid_argument, std::string("EkfConfig: ") + name + " has a negative variance");
    }
  };
  psd(q_per_second, "Q");
  psd(r_net, "R_net");
  psd(r_gps, "R_gps");
  psd(p0, "P0");
  if (!(straight_eps > 0)) throw Error(ErrorCode::invalid_argument, "EkfConfig: straight_eps must be positive");
}

Vector5 ctrv_transition(const Vector5& s, double dt, double straight_eps) {
  const Pose next = ctrv_motion(Pose(s(0), s(1), s(2)), s(3), s(4), dt, straight_eps);
  Vector5 out = s;
  out(0) = next.x;
  out(1) = next.y;
  out(2) = next.phi;
  return out;
}

Matrix5 ctrv_jacobian(const Vector5& s, double dt, double straight_eps) {
  const double phi = s(2), v = s(3), w = s(4);
  Matrix5 f = Matrix5::Identity();
  f(2, 4) = dt;
  const double s0 = std::sin(phi), c0 = std::cos(phi);
  if (std::abs(w) > straight_eps) {
    const double s1 = std::sin(phi + w * dt), c1 = std::cos(phi + w * dt);
    f(0, 2) = v / w * (c1 - c0);
    f(0, 3) = (s1 - s0) / w;
    f(0, 4) = v / w * dt * c1 - v / (w * w) * (s1 - s0);
    f(1, 2) = v / w * (s1 - s0);
    f(1, 3) = (c0 - c1) / w;
    f(1, 4) = v / w * dt * s1 - v / (w * w) * (c0 - c1);
  } else {
    f(0, 2) = -v * dt * s0;
    f(0, 3) = dt * c0;
    f(0, 4) = -0.5 * v * dt * dt * s0;
    f(1, 2) = v * dt * c0;
    f(1, 3) = dt * s0;
    f(1, 4) = 0.5 * v * dt * dt * c0;
  }
  return f;
}

EkfState ekf_predict(const EkfState& state, double dt, const Matrix5& q_per_second, double straight_eps) {
  if (!(dt > 0)) throw Error(ErrorCode::invalid_argument, "ekf_predict: dt must be positive");
  const Matrix5 f = ctrv_jacobian(state.mean, dt, straight_eps);
  EkfState out;
  out.mean = ctrv_transition(state.mean, dt, straight_eps);
  out.cov = symmetrize<5>(f * state.cov * f.transpose() + q_per_second * dt);
  return out;
}

EkfState ekf_update(const EkfState& state, const Pose& z, const Matrix3& r) {
  Eigen::Matrix<double, 3, 5> h = Eigen::Matrix<double, 3, 5>::Zero();
  h(0, 0) = h(1, 1) = h(2, 2) = 1;
  const Eigen::Vector3d innovation(z.x - state.mean(0), z.y - state.mean(1), wrap_angle(z.phi - state.mean(2)));
  return linear_update<3>(state, innovation, h, r);
}

EkfState ekf_update_offset(const EkfState& state, const PoseOffset& offset, const EkfConfig& config) {
  const Eigen::Vector3d d = offset.vector().cwiseQuotient(config.net_gain);
  Matrix3 rot = Matrix3::Identity();
  rot.topLeftCorner<2, 2>() = rotation_matrix(state.mean(2));
  const Eigen::Vector3d innovation = rot * d;
  Eigen::Matrix<double, 3, 5> h = Eigen::Matrix<double, 3, 5>::Zero();
  h(0, 0) = h(1, 1) = h(2, 2) = 1;
  return linear_update<3>(state, innovation, h, Matrix3(rot * config.r_net * rot.transpose()));
}

EkfState ekf_update_position(const EkfState& state, const Point2& z, const Matrix2& r) {
  Eigen::Matrix<double, 2, 5> h = Eigen::Matrix<double, 2, 5>::Zero();
  h(0, 0) = h(1, 1) = 1;
  const Eigen::Vector2d innovation(z.x() - state.mean(0), z.y() - state.mean(1));
  return linear_update<2>(state, innovation, h, r);
}

// Sequences -------------------------------------------------------------------

std::string to_string(InferMode mode) {
  switch (mode) {
    case InferMode::gps_only: return "gps_only";
    case InferMode::gps_net: return "gps_net";
    case InferMode::net_only: return "net_only";
    case InferMode::net_ekf: return "net_ekf";
    case InferMode::net_ekf_gps: return "net_ekf_gps";
  }
  return "unknown";
}

InferMode parse_infer_mode(const std::string& s) {
  for (const auto m :
       {InferMode::gps_only, InferMode::gps_net, InferMode::net_only, InferMode::net_ekf, InferMode::net_ekf_gps}) {
    if (to_string(m) == s) return m;
  }
  throw Error(ErrorCode::invalid_argument,
              "unknown inference mode '" + s + "' (expected gps_only, gps_net, net_only, net_ekf or net_ekf_gps)");
}

std::string to_string(StepFlag flag) {
  switch (flag) {
    case StepFlag::normal: return "normal";
    case StepFlag::dead_reckoned: return "dead_reckoned";
    case StepFlag::diverged: return "diverged";
  }
  return "unknown";
}

double SequenceResult::dead_reckoned_fraction() const {
  if (flags.empty()) return 0;
  const auto n = std::count(flags.begin(), flags.end(), StepFlag::dead_reckoned);
  return static_cast<double>(n) / static_cast<double>(flags.size());
}

SequenceResult run_sequence(InferMode mode, const OffsetModel& model, const LandmarkMap& map,
                            const Trajectory& trajectory, const SequenceOptions& options, const Rng& rng) {
  options.sensor.validate();
  options.ekf.validate();
  const auto& pts = trajectory.points;
  if (pts.empty()) throw Error(ErrorCode::invalid_argument, "run_sequence: empty trajectory");
  const bool uses_net = mode != InferMode::gps_only;
  if (uses_net && !model) throw Error(ErrorCode::invalid_argument, "run_sequence: mode needs an offset model");

  const Rng meas_root = rng.fork(kMeasStream);
  const Rng gps_root = rng.fork(kGpsStream);
  const auto& ekf = options.ekf;

  SequenceResult res;
  res.t.reserve(pts.size());
  res.estimates.reserve(pts.size());
  res.truths.reserve(pts.size());
  res.flags.reserve(pts.size());

  Pose prev;
  EkfState state;
  for (std::size_t k = 0; k < pts.size(); ++k) {
    const auto& tp = pts[k];
    const MeasurementSet meas = simulate_measurements(map, tp.pose, options.sensor, meas_root.fork(k), tp.t);
    Rng gps_rng = gps_root.fork(k);
    const GpsReading gps =
        simulate_gps(tp.pose, options.sensor.gps_sigma_xy, options.sensor.gps_sigma_phi, gps_rng, tp.t);

    if (k == 0) {
      prev = options.initial_pose.value_or(gps.pose);
      state.mean << prev.x, prev.y, prev.phi, ekf.initial_speed, 0.0;
      state.cov = ekf.p0;
    }

    Pose est;
    StepFlag flag = StepFlag::normal;
    switch (mode) {
      case InferMode::gps_only:
        est = gps.pose;
        break;
      case InferMode::gps_net:
        try {
          est = gps_infer(model, gps, meas, map, options.load_radius);
        } catch (const Error& e) {
          if (e.code() != ErrorCode::no_landmarks) throw;
          est = gps.pose;
          flag = StepFlag::dead_reckoned;
        }
        break;
      case InferMode::net_only:
        try {
          est = step_network(model, prev, meas, map, options.load_radius);
        } catch (const Error& e) {
          if (e.code() != ErrorCode::no_landmarks) throw;
          est = prev;
          flag = StepFlag::dead_reckoned;
        }
        break;
      case InferMode::net_ekf:
      case InferMode::net_ekf_gps: {
        if (k > 0) state = ekf_predict(state, tp.t - pts[k - 1].t, ekf.q_per_second, ekf.straight_eps);
        try {
          const PoseOffset d = network_offset(model, state.pose(), meas.points, map, options.load_radius);
          state = ekf_update_offset(state, d, ekf);
        } catch (const Error& e) {
          if (e.code() == ErrorCode::no_landmarks) {
            flag = StepFlag::dead_reckoned;
          } else if (e.code() == ErrorCode::numeric) {
            flag = StepFlag::diverged;
          } else {
            throw;
          }
        }
        if (mode == InferMode::net_ekf_gps && flag != StepFlag::diverged) {
          try {
            state = ekf_update_position(state, gps.pose.position(), ekf.r_gps);
          } catch (const Error& e) {
            if (e.code() != ErrorCode::numeric) throw;
            flag = StepFlag::diverged;
          }
        }
        if (flag == StepFlag::diverged) {
          state.mean << gps.pose.x, gps.pose.y, gps.pose.phi, ekf.initial_speed, 0.0;
          state.cov = ekf.p0;
        }
        est = state.pose();
        break;
      }
    }
    prev = est;
    res.t.push_back(tp.t);
    res.estimates.push_back(est);
    res.truths.push_back(tp.pose);
    res.flags.push_back(flag);
  }
  return res;
}

void save_estimates(const SequenceResult& result, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot open '" + path.string() + "' for writing");
  out << "t,x,y,phi,flag\n";
  for (std::size_t i = 0; i < result.estimates.size(); ++i) {
    const auto& p = result.estimates[i];
    out << detail::format_double(result.t[i]) << ',' << detail::format_double(p.x) << ','
        << detail::format_double(p.y) << ',' << detail::format_double(p.phi) << ',' << to_string(result.flags[i])
        << '\n';
  }
  out.flush();
  if (!out) throw Error(ErrorCode::io, "write to '" + path.string() + "' failed");
}

// Particle filter baseline -----------------------------------------------------

ParticleSet ParticleSet::around(const Pose& center, std::size_t n, double sigma_xy, double sigma_phi, Rng& rng) {
  if (n == 0) throw Error(ErrorCode::invalid_argument, "ParticleSet: need at least one particle");
  ParticleSet set;
  set.particles.reserve(n);
  const double w = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = sigma_xy > 0 ? rng.normal(0, sigma_xy) : 0.0;
    const double dy = sigma_xy > 0 ? rng.normal(0, sigma_xy) : 0.0;
    const double dphi = sigma_phi > 0 ? rng.normal(0, sigma_phi) : 0.0;
    set.particles.push_back({Pose(center.x + dx, center.y + dy, center.phi + dphi), w});
  }
  return set;
}

double ParticleSet::effective_size() const {
  double sq = 0;
  for (const auto& p : particles) sq += p.weight * p.weight;
  return sq > 0 ? 1.0 / sq : 0.0;
}

Pose weighted_mean_pose(const ParticleSet& set) {
  double x = 0, y = 0, s = 0, c = 0, total = 0;
  for (const auto& p : set.particles) {
    x += p.weight * p.pose.x;
    y += p.weight * p.pose.y;
    s += p.weight * std::sin(p.pose.phi);
    c += p.weight * std::cos(p.pose.phi);
    total += p.weight;
  }
  if (!(total > 0)) throw Error(ErrorCode::numeric, "particle weights sum to zero");
  return {x / total, y / total, std::atan2(s, c)};
}

MclResult mcl_baseline_step(ParticleSet particles, std::span<const Point2> meas, const LandmarkMap& map,
                            const PoseOffset& motion, const MclConfig& config, Rng& rng) {
  auto& ps = particles.particles;
  if (ps.empty()) throw Error(ErrorCode::invalid_argument, "mcl_baseline_step: empty particle set");
  if (!(config.sigma_l > 0)) throw Error(ErrorCode::invalid_argument, "mcl_baseline_step: sigma_l must be positive");
  const std::size_t n = ps.size();

  for (auto& p : ps) {
    Pose moved = compose_local(p.pose, motion);
    if (config.motion_sigma_xy > 0) {
      moved.x += rng.normal(0, config.motion_sigma_xy);
      moved.y += rng.normal(0, config.motion_sigma_xy);
    }
    if (config.motion_sigma_phi > 0) moved = Pose(moved.x, moved.y, moved.phi + rng.normal(0, config.motion_sigma_phi));
    p.pose = moved;
  }

  MclResult res;
  const Pose center = weighted_mean_pose(particles);
  const auto nearby = meas.empty() ? std::vector<Landmark>{} : map.query_radius(center.position(), config.load_radius);
  if (!nearby.empty()) {
    std::vector<double> mx, my;
    mx.reserve(nearby.size());
    my.reserve(nearby.size());
    for (const auto& lm : nearby) {
      mx.push_back(lm.position.x());
      my.push_back(lm.position.y());
    }
    const double inv_two_var = 1.0 / (2 * config.sigma_l * config.sigma_l);
    std::vector<double> logw(n);
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      const auto& pose = ps[i].pose;
      const double c = std::cos(pose.phi), s = std::sin(pose.phi);
      double cost = 0;
      for (const auto& z : meas) {
        const double wx = pose.x + c * z.x() - s * z.y();
        const double wy = pose.y + s * z.x() + c * z.y();
        double nearest = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < mx.size(); ++j) {
          const double dx = wx - mx[j], dy = wy - my[j];
          nearest = std::min(nearest, dx * dx + dy * dy);
        }
        cost += nearest;
      }
      logw[i] = std::log(ps[i].weight) - cost * inv_two_var;
      best = std::max(best, logw[i]);
    }
    if (!std::isfinite(best)) {
      for (auto& p : ps) p.weight = 1.0 / static_cast<double>(n);
      res.diverged = true;
    } else {
      double total = 0;
      for (std::size_t i = 0; i < n; ++i) total += ps[i].weight = std::exp(logw[i] - best);
      for (auto& p : ps) p.weight /= total;
    }
  }

  if (particles.effective_size() < 0.5 * static_cast<double>(n)) {
    std::vector<Particle> resampled;
    resampled.reserve(n);
    const double step = 1.0 / static_cast<double>(n);
    double u = rng.uniform() * step;
    double cumulative = ps[0].weight;
    std::size_t j = 0;
    for (std::size_t i = 0; i < n; ++i) {
      while (u > cumulative && j + 1 < n) cumulative += ps[++j].weight;
      resampled.push_back({ps[j].pose, step});
      u += step;
    }
    ps = std::move(resampled);
  }
  res.estimate = weighted_mean_pose(particles);
  res.particles = std::move(particles);
  return res;
}

}  // namespace setloc
