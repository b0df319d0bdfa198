// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <span>

#include "mocap/errors.hpp"

// Foundational 3D/2D math: pinhole projection and rigid-transform algebra.
//
// Conventions used throughout the project:
//   - world frame: right-handed, origin at the rig-floor center, z up, units cm
//   - camera frame: looks down +z, image x right, image y down
//   - image frame: origin at the top-left pixel corner, units px
// Poses stored here are world-to-camera unless noted otherwise.

namespace mocap {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat34 = Eigen::Matrix<double, 3, 4>;

inline bool is_finite(const Vec2& v) { return v.allFinite(); }
inline bool is_finite(const Vec3& v) { return v.allFinite(); }

// Rigid transform p -> R p + t. The rotation is kept as a normalized,
// sign-canonical unit quaternion so that poses serialize bit-stably.
class RigidPose {
 public:
  RigidPose() : rotation_(Eigen::Quaterniond::Identity()), translation_(Vec3::Zero()) {}

  RigidPose(const Eigen::Quaterniond& rotation, const Vec3& translation);

  // Validates orthonormality (|| R^T R - I || <= 1e-9, det > 0) before converting.
  static RigidPose from_matrix(const Mat3& rotation, const Vec3& translation);

  // Rotation by `angle_rad` about a (not necessarily unit) axis.
  static RigidPose from_axis_angle(const Vec3& axis, double angle_rad,
                                   const Vec3& translation = Vec3::Zero());

  const Eigen::Quaterniond& rotation() const { return rotation_; }
  const Vec3& translation() const { return translation_; }
  Mat3 rotation_matrix() const { return rotation_.toRotationMatrix(); }

  Vec3 apply(const Vec3& p) const { return rotation_ * p + translation_; }

 private:
  Eigen::Quaterniond rotation_;  // unit, w >= 0
  Vec3 translation_;
};

// (a * b)(p) = a(b(p))
RigidPose compose(const RigidPose& a, const RigidPose& b);
RigidPose invert(const RigidPose& a);

// Angle of the relative rotation between two poses, radians in [0, pi].
double rotation_distance(const RigidPose& a, const RigidPose& b);

// Least-squares rigid transform T with T(from[i]) ~= to[i] (Kabsch).
// Needs >= 3 non-degenerate pairs.
RigidPose kabsch_alignment(std::span<const Vec3> from, std::span<const Vec3> to);

// Ideal pinhole parameters. A lens distortion model, when one is needed,
// would extend this struct and the project/backproject pair.
struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  double skew = 0.0;

  Intrinsics() = default;
  Intrinsics(double fx, double fy, double cx, double cy, double skew = 0.0);

  Mat3 matrix() const;
};

struct Camera {
  Intrinsics intrinsics;
  RigidPose pose;  // world-to-camera
  int width = 0;
  int height = 0;

  Camera() = default;
  Camera(const Intrinsics& intrinsics, const RigidPose& pose, int width, int height);

  // P = K [R | t], rank 3 by construction
  Mat34 projection_matrix() const;

  // Camera center in world coordinates: -R^T t
  Vec3 center() const;

  bool contains_pixel(const Vec2& px) const {
    return px.x() >= 0.0 && px.y() >= 0.0 && px.x() < width && px.y() < height;
  }
};

struct Ray {
  Vec3 origin;
  Vec3 direction;  // unit norm

  Ray(const Vec3& origin, const Vec3& direction);

  Vec3 at(double t) const { return origin + t * direction; }
};

// Perspective projection of a world point, px. Throws PointBehindCamera when
// the camera-frame depth is <= 1e-9 cm.
Vec2 project(const Camera& camera, const Vec3& point);

// World-frame ray through a pixel; project(camera, ray.at(t)) == pixel for t > 0.
Ray backproject(const Camera& camera, const Vec2& pixel);

}  // namespace mocap
