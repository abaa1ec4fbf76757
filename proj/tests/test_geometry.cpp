// Copyright 2026 The setloc Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/LU>
#include <gtest/gtest.h>

#include "setloc/geometry.hpp"

namespace setloc {
namespace {

constexpr double kPi = std::numbers::pi;

TEST(WrapAngle, KnownValues) {
  EXPECT_DOUBLE_EQ(wrap_angle(0.0), 0.0);
  EXPECT_NEAR(wrap_angle(3 * kPi), kPi, 1e-12);
  EXPECT_NEAR(wrap_angle(-1.5 * kPi), 0.5 * kPi, 1e-12);
  EXPECT_DOUBLE_EQ(wrap_angle(-kPi), kPi);
  EXPECT_DOUBLE_EQ(wrap_angle(kPi), kPi);
}

TEST(WrapAngle, RejectsNonFinite) {
  EXPECT_THROW(wrap_angle(std::nan("")), Error);
  EXPECT_THROW(wrap_angle(INFINITY), Error);
}

TEST(WrapAngle, RangeAndIdempotence) {
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> dist(-1000.0, 1000.0);
  for (int i = 0; i < 10000; ++i) {
    const double a = dist(gen);
    const double w = wrap_angle(a);
    EXPECT_GT(w, -kPi);
    EXPECT_LE(w, kPi);
    EXPECT_EQ(wrap_angle(w), w);
    // Congruent modulo 2 pi.
    const double k = (a - w) / (2 * kPi);
    EXPECT_NEAR(k, std::round(k), 1e-9);
  }
}

TEST(Pose, InvalidPositionThrows) {
  EXPECT_THROW(Pose(std::nan(""), 0, 0), Error);
  EXPECT_THROW(Pose(0, INFINITY, 0), Error);
  EXPECT_THROW(PoseOffset(0, std::nan(""), 0), Error);
}

TEST(Transform, IdentityPose) {
  const auto t = pose_to_transform(Pose(0, 0, 0));
  EXPECT_TRUE(t.rotation.isIdentity(0));
  EXPECT_TRUE(t.translation.isZero(0));
}

TEST(Transform, QuarterTurn) {
  const auto t = pose_to_transform(Pose(1, 2, kPi / 2));
  EXPECT_TRUE(apply(t, Point2(1, 0)).isApprox(Point2(1, 3), 1e-12));
  EXPECT_TRUE(apply(invert(t), Point2(1, 3)).isApprox(Point2(1, 0), 1e-12));
}

TEST(Transform, HalfTurn) {
  const auto t = pose_to_transform(Pose(0, 0, kPi));
  EXPECT_TRUE(apply(t, Point2(1, 1)).isApprox(Point2(-1, -1), 1e-12));
}

TEST(Transform, ApplyIdentity) {
  EXPECT_EQ(apply(IsoTransform::identity(), Point2(5, 7)), Point2(5, 7));
}

TEST(Transform, InvertTranslationAndIdentity) {
  IsoTransform t;
  t.translation = Point2(3, -4);
  const auto inv = invert(t);
  EXPECT_TRUE(inv.rotation.isIdentity(0));
  EXPECT_TRUE(inv.translation.isApprox(Point2(-3, 4)));
  const auto id = invert(IsoTransform::identity());
  EXPECT_TRUE(id.rotation.isIdentity(0));
  EXPECT_TRUE(id.translation.isZero(0));
}

TEST(Transform, RandomRoundTripAndDeterminant) {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> pos(-5000.0, 5000.0);
  std::uniform_real_distribution<double> ang(-kPi, kPi);
  for (int i = 0; i < 1000; ++i) {
    const Pose p(pos(gen), pos(gen), ang(gen));
    const Point2 q(pos(gen) / 50, pos(gen) / 50);
    const auto t = pose_to_transform(p);
    EXPECT_NEAR(t.rotation.determinant(), 1.0, 1e-12);
    EXPECT_LT((apply(invert(t), apply(t, q)) - q).norm(), 1e-9);
    const auto c = compose(t, invert(t));
    EXPECT_TRUE(c.rotation.isIdentity(1e-9));
    EXPECT_LT(c.translation.norm(), 1e-9);
  }
}

TEST(ComposePose, Examples) {
  EXPECT_EQ(compose_pose(Pose(100, 200, 0.1), PoseOffset(0, 0, 0)), Pose(100, 200, 0.1));
  const Pose b = compose_pose(Pose(0, 0, 0), PoseOffset(1, -1, 0.5));
  EXPECT_DOUBLE_EQ(b.x, 1);
  EXPECT_DOUBLE_EQ(b.y, -1);
  EXPECT_DOUBLE_EQ(b.phi, 0.5);
  const Pose c = compose_pose(Pose(0, 0, 3.0), PoseOffset(0, 0, 0.5));
  EXPECT_NEAR(c.phi, 3.5 - 2 * kPi, 1e-12);
  EXPECT_NEAR(c.phi, -2.78319, 1e-5);
}

TEST(OffsetBetween, Examples) {
  const Pose p(4, -2, 1.2);
  const PoseOffset z = offset_between(p, p);
  EXPECT_EQ(z.dx, 0);
  EXPECT_EQ(z.dy, 0);
  EXPECT_EQ(z.dphi, 0);
  const PoseOffset a = offset_between(Pose(0, 0, 0), Pose(1, 2, 0.3));
  EXPECT_DOUBLE_EQ(a.dx, 1);
  EXPECT_DOUBLE_EQ(a.dy, 2);
  EXPECT_DOUBLE_EQ(a.dphi, 0.3);
  const PoseOffset w = offset_between(Pose(0, 0, 3.0), Pose(0, 0, -2.78319));
  EXPECT_NEAR(w.dphi, 0.5, 1e-5);
  EXPECT_NEAR(offset_between(Pose(0, 0, 3.0), Pose(0, 0, 3.5 - 2 * kPi)).dphi, 0.5, 1e-9);
}

double angle_gap(double a, double b) { return std::abs(wrap_angle(a - b)); }

TEST(ComposePose, RoundTripProperty) {
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> pos(-1e4, 1e4);
  std::uniform_real_distribution<double> ang(-10.0, 10.0);
  for (int i = 0; i < 1000; ++i) {
    const Pose p(pos(gen), pos(gen), ang(gen));
    const Pose q(pos(gen), pos(gen), ang(gen));
    const Pose r = compose_pose(p, offset_between(p, q));
    EXPECT_NEAR(r.x, q.x, 1e-9);
    EXPECT_NEAR(r.y, q.y, 1e-9);
    EXPECT_LT(angle_gap(r.phi, q.phi), 1e-9);
  }
}

TEST(LocalOffsets, RoundTripsAndInverse) {
  std::mt19937_64 gen(9);
  std::uniform_real_distribution<double> pos(-1e3, 1e3);
  std::uniform_real_distribution<double> ang(-kPi, kPi);
  for (int i = 0; i < 1000; ++i) {
    const Pose a(pos(gen), pos(gen), ang(gen));
    const Pose b(pos(gen), pos(gen), ang(gen));
    const Pose r = compose_local(a, local_offset_between(a, b));
    EXPECT_NEAR(r.x, b.x, 1e-9);
    EXPECT_NEAR(r.y, b.y, 1e-9);
    EXPECT_LT(angle_gap(r.phi, b.phi), 1e-12);

    const PoseOffset d(pos(gen) / 100, pos(gen) / 100, ang(gen));
    const Pose back = compose_local(compose_local(a, d), inverse_local(d));
    EXPECT_NEAR(back.x, a.x, 1e-9);
    EXPECT_NEAR(back.y, a.y, 1e-9);
    EXPECT_LT(angle_gap(back.phi, a.phi), 1e-12);
  }
}

TEST(LocalOffsets, TranslationIsInPoseFrame) {
  const Pose p = compose_local(Pose(1, 1, kPi / 2), PoseOffset(2, 0, 0));
  EXPECT_NEAR(p.x, 1, 1e-12);
  EXPECT_NEAR(p.y, 3, 1e-12);
}

TEST(Degrees, Conversion) {
  EXPECT_DOUBLE_EQ(deg_to_rad(180.0), kPi);
  EXPECT_DOUBLE_EQ(rad_to_deg(kPi / 2), 90.0);
}

}  // namespace
}  // namespace setloc
