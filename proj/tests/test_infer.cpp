// Copyright 2026 The setloc Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <numbers>

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include "setloc/infer.hpp"

namespace setloc {
namespace {

constexpr double kPi = std::numbers::pi;

OffsetModel constant_model(PoseOffset d) {
  return [d](const Matrix&, const Matrix&) { return d; };
}

LandmarkMap ring_map(Point2 center, int n, double radius) {
  std::vector<Landmark> lms;
  for (int i = 0; i < n; ++i) {
    // Irregular angles so no two landmark pairs share a distance.
    const double a = 2 * kPi * (i + 0.37 * std::sin(3.1 * i)) / n;
    const double r = radius * (0.4 + 0.6 * std::fmod(0.618 * (i + 1), 1.0));
    lms.push_back({i, center + r * Point2(std::cos(a), std::sin(a)), LandmarkSource::laser});
  }
  return LandmarkMap(std::move(lms));
}

Vector5 state(double x, double y, double phi, double v, double w) {
  Vector5 s;
  s << x, y, phi, v, w;
  return s;
}

void expect_valid_cov(const Matrix5& p) {
  EXPECT_LT((p - p.transpose()).cwiseAbs().maxCoeff(), 1e-9);
  Eigen::SelfAdjointEigenSolver<Matrix5> es(p);
  EXPECT_GT(es.eigenvalues().minCoeff(), -1e-9);
}

TEST(Ctrv, Examples) {
  const Vector5 a = ctrv_transition(state(0, 0, 0, 10, 0), 0.1);
  EXPECT_NEAR(a(0), 1.0, 1e-12);
  EXPECT_EQ(a(1), 0.0);
  EXPECT_EQ(a(2), 0.0);
  const Vector5 b = ctrv_transition(state(0, 0, 0, kPi, kPi), 1.0);
  EXPECT_NEAR(b(0), 0.0, 1e-12);
  EXPECT_NEAR(b(1), 2.0, 1e-12);
  EXPECT_NEAR(b(2), kPi, 1e-12);
  EXPECT_EQ(b(3), kPi);
  EXPECT_EQ(b(4), kPi);
  for (double w : {-1.0, 0.0, 0.3, 2.0}) {
    const Vector5 c = ctrv_transition(state(5, -3, 0.7, 0, w), 0.5);
    EXPECT_NEAR(c(0), 5, 1e-12);
    EXPECT_NEAR(c(1), -3, 1e-12);
  }
}

TEST(Ctrv, BranchContinuity) {
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    const double phi = rng.uniform(-kPi, kPi);
    // The branches differ by the arc sagitta v w dt^2 / 2, tiny at the
    // filter's 0.1 s step.
    const double v = rng.uniform(0, 30);
    const double dt = 0.1;
    const Vector5 straight = ctrv_transition(state(0, 0, phi, v, 0), dt);
    for (double w : {1e-6, -1e-6, 1.0001e-6, -1.0001e-6}) {
      const Vector5 turned = ctrv_transition(state(0, 0, phi, v, w), dt);
      EXPECT_LT((turned.head<2>() - straight.head<2>()).norm(), 1e-6);
    }
  }
}

TEST(Ctrv, JacobianMatchesFiniteDifferences) {
  Rng rng(2);
  const double h = 1e-6;
  for (int trial = 0; trial < 500; ++trial) {
    const double w = trial % 5 == 0 ? 0.0 : rng.uniform(-1, 1);
    const Vector5 s = state(rng.uniform(-100, 100), rng.uniform(-100, 100), rng.uniform(-3, 3), rng.uniform(0, 20), w);
    const double dt = rng.uniform(0.05, 0.5);
    const Matrix5 analytic = ctrv_jacobian(s, dt);
    Matrix5 numeric;
    for (int j = 0; j < 5; ++j) {
      // On the straight branch the turn-rate column is the limit of the
      // turning model, so difference the turning formula across w = 0 with a
      // step large enough to avoid its v/w cancellation.
      const bool across_zero = w == 0.0 && j == 4;
      const double step = across_zero ? 1e-3 : h;
      const double eps = across_zero ? 1e-12 : 1e-6;
      Vector5 up = s, down = s;
      up(j) += step;
      down(j) -= step;
      Vector5 diff = ctrv_transition(up, dt, eps) - ctrv_transition(down, dt, eps);
      diff(2) = wrap_angle(diff(2));
      numeric.col(j) = diff / (2 * step);
    }
    const double rel = (analytic - numeric).norm() / std::max(1.0, numeric.norm());
    EXPECT_LT(rel, 1e-5) << "trial " << trial;
  }
}

TEST(Ekf, ScalarKalmanGain) {
  EkfState s;
  s.mean.setZero();
  s.cov = Matrix5::Identity();
  const EkfState post = ekf_update(s, Pose(1, 0, 0), Matrix3::Identity());
  EXPECT_NEAR(post.mean(0), 0.5, 1e-12);
  EXPECT_NEAR(post.cov(0, 0), 0.5, 1e-12);
  EXPECT_NEAR(post.mean(3), 0.0, 1e-12);
  EXPECT_NEAR(post.cov(3, 3), 1.0, 1e-12);
}

TEST(Ekf, MeasurementNoiseLimits) {
  EkfState s;
  s.mean = state(3, 4, 0.2, 10, 0.01);
  s.cov = Matrix5::Identity() * 2.0;
  const Pose z(5, 1, -0.4);
  const EkfState sharp = ekf_update(s, z, Matrix3::Identity() * 1e-12);
  EXPECT_NEAR(sharp.mean(0), z.x, 1e-6);
  EXPECT_NEAR(sharp.mean(1), z.y, 1e-6);
  EXPECT_NEAR(sharp.mean(2), z.phi, 1e-6);
  const EkfState vague = ekf_update(s, z, Matrix3::Identity() * 1e12);
  EXPECT_LT((vague.mean - s.mean).norm(), 1e-6);
  EXPECT_LT((vague.cov - s.cov).norm(), 1e-6);
}

TEST(Ekf, HeadingInnovationWrapped) {
  EkfState s;
  s.mean = state(0, 0, kPi - 0.01, 0, 0);
  s.cov = Matrix5::Identity();
  const EkfState post = ekf_update(s, Pose(0, 0, -kPi + 0.01), Matrix3::Identity());
  // Innovation is +0.02 rad, not -2 pi + 0.02.
  EXPECT_NEAR(wrap_angle(post.mean(2) - (kPi - 0.01)), 0.01, 1e-12);
}

TEST(Ekf, SingularInnovationThrows) {
  EkfState s;
  s.cov = Matrix5::Zero();
  try {
    ekf_update(s, Pose(1, 0, 0), Matrix3::Zero());
    FAIL() << "expected error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::numeric);
  }
}

TEST(Ekf, CovarianceStaysSymmetricPsd) {
  Rng rng(4);
  const EkfConfig cfg;
  EkfState s;
  s.mean = state(0, 0, 0, 10, 0);
  s.cov = cfg.p0;
  for (int k = 0; k < 10000; ++k) {
    s = ekf_predict(s, 0.1, cfg.q_per_second);
    expect_valid_cov(s.cov);
    const double u = rng.uniform();
    if (u < 0.6) {
      const Pose z(s.mean(0) + rng.normal(0, 0.5), s.mean(1) + rng.normal(0, 0.5), s.mean(2) + rng.normal(0, 0.05));
      s = ekf_update(s, z, cfg.r_net);
    } else if (u < 0.8) {
      s = ekf_update_position(s, Point2(s.mean(0) + rng.normal(0, 2), s.mean(1) + rng.normal(0, 2)), cfg.r_gps);
    }
    expect_valid_cov(s.cov);
    if (::testing::Test::HasFailure()) break;
  }
  EXPECT_GT(s.pose().phi, -kPi);
  EXPECT_LE(s.pose().phi, kPi);
}

TEST(Ekf, ConfigFromRmse) {
  EkfConfig cfg;
  cfg.set_r_net_from_rmse(0.4, 0.3, 0.02);
  EXPECT_DOUBLE_EQ(cfg.r_net(0, 0), 0.16);
  EXPECT_DOUBLE_EQ(cfg.r_net(1, 1), 0.09);
  EXPECT_DOUBLE_EQ(cfg.r_net(2, 2), 0.0004);
  EXPECT_EQ(cfg.r_net(0, 1), 0.0);
  EXPECT_NO_THROW(cfg.validate());
  cfg.r_net(0, 0) = -1;
  EXPECT_THROW(cfg.validate(), Error);
}

TEST(Calibration, RecoversGainAndSpread) {
  std::vector<PoseOffset> preds, targets;
  for (int i = 0; i < 8; ++i) {
    const double t = i - 3.5;
    // Residual signs chosen orthogonal to the targets.
    const double e = (i == 0 || i == 3 || i == 4 || i == 7) ? 0.1 : -0.1;
    targets.emplace_back(t, t, 0.01 * t);
    preds.emplace_back(0.5 * t + e, 0.0, 0.01 * t);
  }
  const NetCalibration cal = fit_calibration(preds, targets);
  EXPECT_NEAR(cal.gain(0), 0.5, 1e-12);
  EXPECT_NEAR(cal.gain(1), 0.0, 1e-12);
  EXPECT_NEAR(cal.gain(2), 1.0, 1e-12);
  EXPECT_NEAR(cal.sigma(0), 0.1, 1e-12);
  EXPECT_NEAR(cal.sigma(1), 0.0, 1e-12);
  EXPECT_NEAR(cal.sigma(2), 0.0, 1e-12);
  EXPECT_THROW(fit_calibration(std::span(preds).first(3), targets), Error);
}

TEST(Calibration, SetsGainAndNoise) {
  EkfConfig cfg;
  NetCalibration cal;
  cal.gain << 0.5, 0.0, 1.0;
  cal.sigma << 0.1, 0.2, 0.01;
  cfg.set_net_calibration(cal, 1e-3);
  EkfConfig floored;
  floored.set_net_calibration(NetCalibration{});
  EXPECT_NEAR(floored.r_net(0, 0), 0.0025, 1e-15);
  EXPECT_NEAR(floored.r_net(2, 2), std::pow(deg_to_rad(0.1), 2), 1e-18);
  EXPECT_DOUBLE_EQ(cfg.net_gain(0), 0.5);
  EXPECT_DOUBLE_EQ(cfg.net_gain(1), 1e-3);
  EXPECT_NEAR(cfg.r_net(0, 0), 0.04, 1e-15);
  EXPECT_NEAR(cfg.r_net(1, 1), 1e6, 1e-6);
  EXPECT_NEAR(cfg.r_net(2, 2), 1e-4, 1e-18);
  cfg.set_r_net_from_rmse(1, 1, 1);
  EXPECT_EQ(cfg.net_gain, Eigen::Vector3d::Ones());
}

TEST(Ekf, OffsetUpdateMatchesRotatedPoseUpdate) {
  EkfConfig cfg;
  cfg.r_net = Eigen::Vector3d(0.09, 0.01, 1e-4).asDiagonal();
  EkfState s;
  s.mean = state(3, -2, 0.7, 9, 0.05);
  s.cov = cfg.p0;
  const PoseOffset d(0.4, -0.3, 0.02);
  Matrix3 rot = Matrix3::Identity();
  rot.topLeftCorner<2, 2>() = rotation_matrix(0.7);
  const EkfState a = ekf_update_offset(s, d, cfg);
  const EkfState b = ekf_update(s, compose_local(s.pose(), d), Matrix3(rot * cfg.r_net * rot.transpose()));
  EXPECT_LT((a.mean - b.mean).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((a.cov - b.cov).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Ekf, UnresolvedAxisCarriesNoInformation) {
  EkfConfig cfg;
  NetCalibration cal;
  cal.gain << 0.0, 1.0, 1.0;
  cal.sigma << 0.3, 0.3, 0.01;
  cfg.set_net_calibration(cal);
  EkfState s;
  s.mean = state(0, 0, kPi / 2, 10, 0);
  s.cov = cfg.p0;
  // Heading 90 degrees: the vehicle's along-track axis is world y.
  const EkfState out = ekf_update_offset(s, PoseOffset(0.5, 0.2, 0), cfg);
  EXPECT_NEAR(out.cov(1, 1), s.cov(1, 1), 1e-3 * s.cov(1, 1));
  EXPECT_NEAR(out.mean(1), 0.0, 1e-3);
  EXPECT_LT(out.cov(0, 0), 0.1 * s.cov(0, 0));
  EXPECT_NEAR(out.mean(0), -0.2 * s.cov(0, 0) / (s.cov(0, 0) + 0.09), 1e-9);
}

TEST(NetworkCorrect, StubModels) {
  const LandmarkMap map = ring_map({0, 0}, 20, 40);
  const Pose truth(2, -1, 0.3);
  const MeasurementSet meas{visible_landmarks(map, truth, 50), 0};
  const GpsReading gps{Pose(3.2, -2.5, 0.45), 0};

  const Pose same = gps_infer(constant_model({0, 0, 0}), gps, meas, map);
  EXPECT_EQ(same, gps.pose);

  // The correction is expressed in the frame of the pose being corrected.
  const Pose fixed = gps_infer(constant_model(local_offset_between(gps.pose, truth)), gps, meas, map);
  EXPECT_NEAR(fixed.x, truth.x, 1e-12);
  EXPECT_NEAR(fixed.y, truth.y, 1e-12);
  EXPECT_NEAR(fixed.phi, truth.phi, 1e-12);

  EXPECT_EQ(step_network(constant_model({0, 0, 0}), truth, meas, map), truth);
  const Pose prev(1.5, 0.2, 0.25);
  const Pose shifted = step_network(constant_model(local_offset_between(prev, truth)), prev, meas, map);
  EXPECT_NEAR(shifted.x, truth.x, 1e-12);
  EXPECT_NEAR(shifted.y, truth.y, 1e-12);
}

TEST(NetworkCorrect, NoLandmarks) {
  const LandmarkMap map = ring_map({0, 0}, 20, 40);
  const MeasurementSet meas{{Point2(1, 1)}, 0};
  try {
    step_network(constant_model({0, 0, 0}), Pose(5000, 5000, 0), meas, map);
    FAIL() << "expected error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::no_landmarks);
  }
  const MeasurementSet empty;
  EXPECT_THROW(step_network(constant_model({0, 0, 0}), Pose(), empty, map), Error);
}

TEST(ExactRegistration, RecoversOffsets) {
  const LandmarkMap map = ring_map({0, 0}, 25, 45);
  const OffsetModel model = exact_registration_model();
  Rng rng(6);
  for (int i = 0; i < 50; ++i) {
    const Pose truth(rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-kPi, kPi));
    const Pose prior = compose_local(truth, PoseOffset(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-0.17, 0.17)));
    auto meas = visible_landmarks(map, truth, 50);
    meas.resize(meas.size() - static_cast<std::size_t>(rng.below(5)));
    const Pose est = network_correct(model, prior, meas, map);
    EXPECT_NEAR(est.x, truth.x, 1e-6);
    EXPECT_NEAR(est.y, truth.y, 1e-6);
    EXPECT_NEAR(wrap_angle(est.phi - truth.phi), 0, 1e-6);
  }
}

Trajectory short_route(double duration) {
  TrajectoryParams tp;
  tp.duration = duration;
  return generate_trajectory(8, tp);
}

TEST(Sequence, OracleNetOnlyTracksTruth) {
  const Trajectory route = short_route(20);
  const LandmarkMap map = generate_map(8, route, {});
  SequenceOptions opt;
  opt.sensor.gps_sigma_xy = 1.0;
  opt.sensor.gps_sigma_phi = deg_to_rad(3);
  const auto res = run_sequence(InferMode::net_only, exact_registration_model(), map, route, opt, Rng(1));
  ASSERT_EQ(res.estimates.size(), route.points.size());
  for (std::size_t k = 0; k < res.estimates.size(); ++k) {
    EXPECT_NEAR(res.estimates[k].x, res.truths[k].x, 1e-6) << k;
    EXPECT_NEAR(res.estimates[k].y, res.truths[k].y, 1e-6) << k;
    EXPECT_NEAR(wrap_angle(res.estimates[k].phi - res.truths[k].phi), 0, 1e-6) << k;
  }
  EXPECT_EQ(res.dead_reckoned_fraction(), 0.0);
}

TEST(Sequence, GpsOnlyMatchesNoise) {
  const Trajectory route = short_route(1000);
  const LandmarkMap map;
  SequenceOptions opt;
  const auto res = run_sequence(InferMode::gps_only, {}, map, route, opt, Rng(2));
  double sx = 0, sy = 0;
  for (std::size_t k = 0; k < res.estimates.size(); ++k) {
    sx += std::pow(res.estimates[k].x - res.truths[k].x, 2);
    sy += std::pow(res.estimates[k].y - res.truths[k].y, 2);
  }
  const double n = static_cast<double>(res.estimates.size());
  EXPECT_NEAR(std::sqrt(sx / n), 2.0, 0.05);
  EXPECT_NEAR(std::sqrt(sy / n), 2.0, 0.05);
}

TEST(Sequence, ZeroNetworkFollowsDeadReckoning) {
  const Trajectory route = short_route(30);
  const LandmarkMap map = generate_map(8, route, {});
  SequenceOptions opt;
  const Pose start(1, 2, 0.3);
  opt.initial_pose = start;
  const auto res = run_sequence(InferMode::net_ekf, constant_model({0, 0, 0}), map, route, opt, Rng(3));
  for (std::size_t k = 0; k < res.estimates.size(); ++k) {
    const double dist = opt.ekf.initial_speed * res.t[k];
    EXPECT_NEAR(res.estimates[k].x, start.x + dist * std::cos(start.phi), 1e-6);
    EXPECT_NEAR(res.estimates[k].y, start.y + dist * std::sin(start.phi), 1e-6);
    EXPECT_NEAR(res.estimates[k].phi, start.phi, 1e-9);
  }
}

TEST(Sequence, ZeroNetworkCovarianceBounded) {
  // Same loop as the sequence: the stub observes the predicted pose itself.
  const EkfConfig cfg;
  EkfState s;
  s.mean = state(0, 0, 0, 10, 0);
  s.cov = cfg.p0;
  for (int k = 0; k < 5000; ++k) {
    s = ekf_predict(s, 0.1, cfg.q_per_second);
    s = ekf_update_offset(s, PoseOffset(0, 0, 0), cfg);
  }
  expect_valid_cov(s.cov);
  const double pose_var = s.cov.topLeftCorner<3, 3>().trace();
  EXPECT_LT(pose_var, cfg.r_net.trace());
}

TEST(Sequence, DeadReckonedStepsAreFlagged) {
  const Trajectory route = short_route(20);
  // Landmarks only near the start of the route.
  std::vector<Landmark> lms;
  for (const auto& lm : generate_map(8, route, {}).landmarks()) {
    if ((lm.position - route.points.front().pose.position()).norm() < 60) lms.push_back(lm);
  }
  const LandmarkMap map(std::move(lms));
  SequenceOptions opt;
  opt.initial_pose = route.points.front().pose;
  const auto res = run_sequence(InferMode::net_ekf, exact_registration_model(), map, route, opt, Rng(4));
  const double frac = res.dead_reckoned_fraction();
  EXPECT_GT(frac, 0.3);
  EXPECT_LT(frac, 1.0);
  EXPECT_EQ(res.flags.front(), StepFlag::normal);
  EXPECT_EQ(res.flags.back(), StepFlag::dead_reckoned);
}

TEST(Sequence, ModesSeeSameInputs) {
  const Trajectory route = short_route(5);
  const LandmarkMap map = generate_map(8, route, {});
  SequenceOptions opt;
  const auto a = run_sequence(InferMode::gps_only, {}, map, route, opt, Rng(9));
  const auto b = run_sequence(InferMode::gps_net, constant_model({0, 0, 0}), map, route, opt, Rng(9));
  EXPECT_EQ(a.estimates, b.estimates);
}

TEST(Modes, ParseRoundTrip) {
  for (const auto m :
       {InferMode::gps_only, InferMode::gps_net, InferMode::net_only, InferMode::net_ekf, InferMode::net_ekf_gps}) {
    EXPECT_EQ(parse_infer_mode(to_string(m)), m);
  }
  EXPECT_THROW(parse_infer_mode("kalman"), Error);
}

TEST(Mcl, SingleParticle) {
  const LandmarkMap map = ring_map({0, 0}, 20, 40);
  Rng rng(1);
  ParticleSet set;
  set.particles = {{Pose(1, 2, 0.3), 1.0}};
  MclConfig cfg;
  cfg.motion_sigma_xy = 0;
  cfg.motion_sigma_phi = 0;
  const auto meas = visible_landmarks(map, Pose(1, 2, 0.3), 50);
  const MclResult r = mcl_baseline_step(set, meas, map, PoseOffset(0, 0, 0), cfg, rng);
  EXPECT_EQ(r.estimate, Pose(1, 2, 0.3));
  ASSERT_EQ(r.particles.particles.size(), 1u);
  EXPECT_DOUBLE_EQ(r.particles.particles[0].weight, 1.0);
}

TEST(Mcl, TruthParticleWins) {
  const LandmarkMap map = ring_map({0, 0}, 20, 40);
  const Pose truth(1, 2, 0.3);
  ParticleSet set;
  set.particles.push_back({truth, 0.25});
  set.particles.push_back({Pose(1.5, 2, 0.3), 0.25});
  set.particles.push_back({Pose(1, 2.3, 0.3), 0.25});
  set.particles.push_back({Pose(1, 2, 0.35), 0.25});
  MclConfig cfg;
  cfg.motion_sigma_xy = 0;
  cfg.motion_sigma_phi = 0;
  Rng rng(2);
  // Keep the weights visible: a huge sigma avoids triggering resampling.
  cfg.sigma_l = 50;
  const MclResult r = mcl_baseline_step(set, visible_landmarks(map, truth, 50), map, {}, cfg, rng);
  const auto& ps = r.particles.particles;
  ASSERT_EQ(ps.size(), 4u);
  for (std::size_t i = 1; i < ps.size(); ++i) EXPECT_GT(ps[0].weight, ps[i].weight);
}

TEST(Mcl, WeightsNormalizedAndSizePreserved) {
  const LandmarkMap map = ring_map({0, 0}, 30, 45);
  Rng rng(3);
  const Pose truth(0, 0, 0);
  ParticleSet set = ParticleSet::around(truth, 500, 2.0, deg_to_rad(10), rng);
  const MclConfig cfg;
  for (int k = 0; k < 5; ++k) {
    const MclResult r = mcl_baseline_step(set, visible_landmarks(map, truth, 50), map, {}, cfg, rng);
    double total = 0;
    for (const auto& p : r.particles.particles) {
      EXPECT_GE(p.weight, 0.0);
      total += p.weight;
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
    EXPECT_EQ(r.particles.particles.size(), 500u);
    set = r.particles;
  }
  EXPECT_LT(weighted_mean_pose(set).position().norm(), 1.0);
}

TEST(Mcl, CircularMeanHeading) {
  ParticleSet set;
  set.particles = {{Pose(0, 0, kPi - 0.1), 0.5}, {Pose(0, 0, -kPi + 0.1), 0.5}};
  EXPECT_NEAR(std::abs(weighted_mean_pose(set).phi), kPi, 1e-12);
}

}  // namespace
}  // namespace setloc
