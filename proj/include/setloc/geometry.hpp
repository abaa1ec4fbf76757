// Copyright 2026 The setloc Authors
// SPDX-License-Identifier: Apache-2.0
//
// Planar poses, pose offsets and rigid transforms between the world frame and
// the vehicle frame. Everything is templated on the scalar type; the rest of
// the library uses the double aliases at the bottom of this file.

#pragma once

#include <cmath>
#include <numbers>

#include <Eigen/Core>

#include "setloc/error.hpp"

namespace setloc {

template <typename Scalar>
using Point2T = Eigen::Matrix<Scalar, 2, 1>;

/// Reduces an angle to the half-open interval (-pi, pi]; -pi maps to pi.
template <typename Scalar>
Scalar wrap_angle(Scalar a) {
  if (!std::isfinite(a)) {
    throw Error(ErrorCode::invalid_argument, "wrap_angle: non-finite angle");
  }
  constexpr Scalar pi = std::numbers::pi_v<Scalar>;
  constexpr Scalar two_pi = 2 * pi;
  if (a > -pi && a <= pi) return a;
  Scalar r = std::fmod(a + pi, two_pi);
  if (r <= 0) r += two_pi;
  return r - pi;
}

template <typename Scalar>
struct PoseT {
  Scalar x{0};
  Scalar y{0};
  Scalar phi{0};

  PoseT() = default;
  PoseT(Scalar x_, Scalar y_, Scalar phi_) : x(x_), y(y_), phi(wrap_angle(phi_)) {
    if (!std::isfinite(x) || !std::isfinite(y)) {
      throw Error(ErrorCode::invalid_argument, "Pose: non-finite position");
    }
  }

  Point2T<Scalar> position() const { return {x, y}; }
  friend bool operator==(const PoseT&, const PoseT&) = default;
};

template <typename Scalar>
struct PoseOffsetT {
  Scalar dx{0};
  Scalar dy{0};
  Scalar dphi{0};

  PoseOffsetT() = default;
  PoseOffsetT(Scalar dx_, Scalar dy_, Scalar dphi_) : dx(dx_), dy(dy_), dphi(wrap_angle(dphi_)) {
    if (!std::isfinite(dx) || !std::isfinite(dy)) {
      throw Error(ErrorCode::invalid_argument, "PoseOffset: non-finite translation");
    }
  }

  Eigen::Matrix<Scalar, 3, 1> vector() const { return {dx, dy, dphi}; }
  friend bool operator==(const PoseOffsetT&, const PoseOffsetT&) = default;
};

/// Rigid planar transform q -> rotation * q + translation.
template <typename Scalar>
struct IsoTransformT {
  Eigen::Matrix<Scalar, 2, 2> rotation = Eigen::Matrix<Scalar, 2, 2>::Identity();
  Point2T<Scalar> translation = Point2T<Scalar>::Zero();

  static IsoTransformT identity() { return {}; }
};

template <typename Scalar>
Eigen::Matrix<Scalar, 2, 2> rotation_matrix(Scalar phi) {
  const Scalar c = std::cos(phi);
  const Scalar s = std::sin(phi);
  Eigen::Matrix<Scalar, 2, 2> r;
  r << c, -s, s, c;
  return r;
}

/// Vehicle frame -> world frame.
template <typename Scalar>
IsoTransformT<Scalar> pose_to_transform(const PoseT<Scalar>& p) {
  return {rotation_matrix(p.phi), p.position()};
}

template <typename Scalar>
IsoTransformT<Scalar> invert(const IsoTransformT<Scalar>& t) {
  IsoTransformT<Scalar> inv;
  inv.rotation = t.rotation.transpose();
  inv.translation = -(inv.rotation * t.translation);
  return inv;
}

/// a after b: apply(compose(a, b), q) == apply(a, apply(b, q)).
template <typename Scalar>
IsoTransformT<Scalar> compose(const IsoTransformT<Scalar>& a, const IsoTransformT<Scalar>& b) {
  return {a.rotation * b.rotation, a.rotation * b.translation + a.translation};
}

template <typename Scalar>
Point2T<Scalar> apply(const IsoTransformT<Scalar>& t, const Point2T<Scalar>& q) {
  return t.rotation * q + t.translation;
}

/// World-frame component-wise update p + d (heading wrapped).
template <typename Scalar>
PoseT<Scalar> compose_pose(const PoseT<Scalar>& p, const PoseOffsetT<Scalar>& d) {
  return {p.x + d.dx, p.y + d.dy, p.phi + d.dphi};
}

/// Inverse of compose_pose: compose_pose(a, offset_between(a, b)) == b.
template <typename Scalar>
PoseOffsetT<Scalar> offset_between(const PoseT<Scalar>& a, const PoseT<Scalar>& b) {
  return {b.x - a.x, b.y - a.y, b.phi - a.phi};
}

// The network regresses offsets expressed in the frame of the prior pose, so
// that they are observable from vehicle-frame point sets alone. The two
// functions below are the rigid counterparts of compose_pose/offset_between.

/// Rigid update: translation (dx, dy) is taken in the frame of p.
template <typename Scalar>
PoseT<Scalar> compose_local(const PoseT<Scalar>& p, const PoseOffsetT<Scalar>& d) {
  const Point2T<Scalar> t = rotation_matrix(p.phi) * Point2T<Scalar>(d.dx, d.dy);
  return {p.x + t.x(), p.y + t.y(), p.phi + d.dphi};
}

/// compose_local(a, local_offset_between(a, b)) == b.
template <typename Scalar>
PoseOffsetT<Scalar> local_offset_between(const PoseT<Scalar>& a, const PoseT<Scalar>& b) {
  const Point2T<Scalar> t = rotation_matrix(a.phi).transpose() * (b.position() - a.position());
  return {t.x(), t.y(), b.phi - a.phi};
}

/// Offset g with compose_local(compose_local(p, d), g) == p.
template <typename Scalar>
PoseOffsetT<Scalar> inverse_local(const PoseOffsetT<Scalar>& d) {
  const Point2T<Scalar> t = -(rotation_matrix(d.dphi).transpose() * Point2T<Scalar>(d.dx, d.dy));
  return {t.x(), t.y(), -d.dphi};
}

inline constexpr double deg_to_rad(double deg) { return deg * std::numbers::pi / 180.0; }
inline constexpr double rad_to_deg(double rad) { return rad * 180.0 / std::numbers::pi; }

using Point2 = Point2T<double>;
using Pose = PoseT<double>;
using PoseOffset = PoseOffsetT<double>;
using IsoTransform = IsoTransformT<double>;

}  // namespace setloc
