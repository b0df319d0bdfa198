// SPDX-License-Identifier: Apache-2.0

#include "mocap/geometry.hpp"

#include <fmt/format.h>

#include <cmath>

namespace mocap {

namespace {

// Unit quaternion with a canonical sign: w > 0, or if w == 0 the first
// nonzero of (x, y, z) positive. Keeps pose serialization deterministic.
// Quaternions already unit-norm within 1e-12 are not renormalized, so a
// parsed pose keeps its exact coefficients.
Eigen::Quaterniond canonicalized(Eigen::Quaterniond q) {
  const double n2 = q.squaredNorm();
  if (std::abs(n2 - 1.0) > 1e-12) q.coeffs() /= std::sqrt(n2);
  double lead = q.w();
  if (lead == 0.0) lead = q.x();
  if (lead == 0.0) lead = q.y();
  if (lead == 0.0) lead = q.z();
  if (lead < 0.0) q.coeffs() = -q.coeffs();
  return q;
}

void require_finite(const Vec3& v, const char* what) {
  if (!v.allFinite()) throw InvalidArgument(fmt::format("{}: non-finite components", what));
}

}  // namespace

RigidPose::RigidPose(const Eigen::Quaterniond& rotation, const Vec3& translation)
    : rotation_(canonicalized(rotation)), translation_(translation) {
  require_finite(translation, "RigidPose translation");
  if (!rotation_.coeffs().allFinite() || std::abs(rotation.norm()) < 1e-12)
    throw InvalidArgument("RigidPose rotation: not a usable quaternion");
}

RigidPose RigidPose::from_matrix(const Mat3& rotation, const Vec3& translation) {
  if (!rotation.allFinite()) throw InvalidArgument("RigidPose rotation: non-finite matrix");
  const double ortho = (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
  if (ortho > 1e-9 || rotation.determinant() < 0.0)
    throw InvalidArgument(
        fmt::format("RigidPose rotation: not orthonormal within 1e-9 (deviation {:.3e})", ortho));
  return RigidPose(Eigen::Quaterniond(rotation), translation);
}

RigidPose RigidPose::from_axis_angle(const Vec3& axis, double angle_rad, const Vec3& translation) {
  const double n = axis.norm();
  if (n < 1e-15) throw InvalidArgument("RigidPose axis-angle: zero axis");
  return RigidPose(Eigen::Quaterniond(Eigen::AngleAxisd(angle_rad, axis / n)), translation);
}

RigidPose compose(const RigidPose& a, const RigidPose& b) {
  return RigidPose(a.rotation() * b.rotation(),
                   a.rotation() * b.translation() + a.translation());
}

RigidPose invert(const RigidPose& a) {
  const Eigen::Quaterniond inv = a.rotation().conjugate();
  return RigidPose(inv, -(inv * a.translation()));
}

double rotation_distance(const RigidPose& a, const RigidPose& b) {
  // atan2 form stays accurate near zero where acos of the dot product loses
  // half the significant digits
  const Eigen::Quaterniond rel = a.rotation() * b.rotation().conjugate();
  return 2.0 * std::atan2(rel.vec().norm(), std::abs(rel.w()));
}

RigidPose kabsch_alignment(std::span<const Vec3> from, std::span<const Vec3> to) {
  if (from.size() != to.size() || from.size() < 3)
    throw InvalidArgument("kabsch_alignment: needs >= 3 point pairs of equal count");

  Vec3 mean_from = Vec3::Zero(), mean_to = Vec3::Zero();
  for (std::size_t i = 0; i < from.size(); ++i) {
    mean_from += from[i];
    mean_to += to[i];
  }
  mean_from /= static_cast<double>(from.size());
  mean_to /= static_cast<double>(to.size());

  Mat3 cov = Mat3::Zero();
  for (std::size_t i = 0; i < from.size(); ++i)
    cov += (from[i] - mean_from) * (to[i] - mean_to).transpose();

  const Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 flip = Mat3::Identity();
  flip(2, 2) = (svd.matrixV() * svd.matrixU().transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  const Mat3 rotation = svd.matrixV() * flip * svd.matrixU().transpose();
  return RigidPose(Eigen::Quaterniond(rotation), mean_to - rotation * mean_from);
}

Intrinsics::Intrinsics(double fx, double fy, double cx, double cy, double skew)
    : fx(fx), fy(fy), cx(cx), cy(cy), skew(skew) {
  if (!(std::isfinite(fx) && std::isfinite(fy) && std::isfinite(cx) && std::isfinite(cy) &&
        std::isfinite(skew)))
    throw InvalidArgument("Intrinsics: non-finite parameter");
  if (fx <= 0.0 || fy <= 0.0)
    throw InvalidArgument(fmt::format("Intrinsics: focal lengths must be positive (fx={}, fy={})", fx, fy));
}

Mat3 Intrinsics::matrix() const {
  Mat3 k;
  k << fx, skew, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
  return k;
}

Camera::Camera(const Intrinsics& intrinsics, const RigidPose& pose, int width, int height)
    : intrinsics(intrinsics), pose(pose), width(width), height(height) {
  if (width <= 0 || height <= 0)
    throw InvalidArgument(fmt::format("Camera: image size must be positive ({}x{})", width, height));
}

Mat34 Camera::projection_matrix() const {
  Mat34 rt;
  rt.leftCols<3>() = pose.rotation_matrix();
  rt.col(3) = pose.translation();
  return intrinsics.matrix() * rt;
}

Vec3 Camera::center() const {
  return -(pose.rotation().conjugate() * pose.translation());
}

Ray::Ray(const Vec3& origin, const Vec3& direction) : origin(origin) {
  require_finite(origin, "Ray origin");
  const double n = direction.norm();
  if (!std::isfinite(n) || n < 1e-15) throw InvalidArgument("Ray: direction must be nonzero");
  this->direction = direction / n;
}

Vec2 project(const Camera& camera, const Vec3& point) {
  require_finite(point, "project point");
  const Vec3 pc = camera.pose.apply(point);
  if (pc.z() <= 1e-9)
    throw PointBehindCamera(
        fmt::format("camera-frame depth {:.3e} cm is not in front of the camera", pc.z()));
  const double xn = pc.x() / pc.z();
  const double yn = pc.y() / pc.z();
  const Intrinsics& k = camera.intrinsics;
  return {k.fx * xn + k.skew * yn + k.cx, k.fy * yn + k.cy};
}

Ray backproject(const Camera& camera, const Vec2& pixel) {
  if (!is_finite(pixel)) throw InvalidArgument("backproject: non-finite pixel");
  const Intrinsics& k = camera.intrinsics;
  const double yn = (pixel.y() - k.cy) / k.fy;
  const double xn = (pixel.x() - k.cx - k.skew * yn) / k.fx;
  const Vec3 dir_cam(xn, yn, 1.0);
  const Vec3 dir_world = camera.pose.rotation().conjugate() * dir_cam;
  return Ray(camera.center(), dir_world);
}

}  // namespace mocap
