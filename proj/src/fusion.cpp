// SPDX-License-Identifier: Apache-2.0

#include "mocap/fusion.hpp"

#include <fmt/format.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

namespace mocap {

Vec3 triangulate_dlt(std::span<const ViewObservation> observations) {
  std::vector<const ViewObservation*> usable;
  for (const ViewObservation& obs : observations)
    if (obs.weight > 0.0) usable.push_back(&obs);
  if (usable.size() < 2)
    throw InsufficientViews(
        fmt::format("triangulation needs >= 2 weighted observations, got {}", usable.size()));

  // two rows per view from [R | t] and K-normalized pixel coordinates; the
  // normalization keeps the design matrix well conditioned at pixel scale
  Eigen::MatrixXd a(2 * usable.size(), 4);
  for (std::size_t i = 0; i < usable.size(); ++i) {
    const ViewObservation& obs = *usable[i];
    const Intrinsics& k = obs.camera.intrinsics;
    const double yn = (obs.pixel.y() - k.cy) / k.fy;
    const double xn = (obs.pixel.x() - k.cx - k.skew * yn) / k.fx;

    Eigen::Matrix<double, 3, 4> rt;
    rt.leftCols<3>() = obs.camera.pose.rotation_matrix();
    rt.col(3) = obs.camera.pose.translation();

    a.row(2 * i) = obs.weight * (xn * rt.row(2) - rt.row(0));
    a.row(2 * i + 1) = obs.weight * (yn * rt.row(2) - rt.row(1));
  }

  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  if (sv(2) <= 0.0 || sv(3) / sv(2) > 0.99)
    throw DegenerateGeometry("triangulation direction ill-defined (near-equal smallest singular values)");

  const Eigen::Vector4d x = svd.matrixV().col(3);
  if (std::abs(x(3)) < 1e-12 * x.head<3>().norm())
    throw DegenerateGeometry("triangulated point at infinity");
  return x.head<3>() / x(3);
}

namespace {

Vec3 triangulate_pairwise(std::span<const ViewObservation> observations) {
  Vec3 acc = Vec3::Zero();
  double weight_sum = 0.0;
  for (std::size_t a = 0; a < observations.size(); ++a)
    for (std::size_t b = a + 1; b < observations.size(); ++b) {
      const ViewObservation pair[2] = {observations[a], observations[b]};
      try {
        const Vec3 x = triangulate_dlt(pair);
        const double w = observations[a].weight * observations[b].weight;
        acc += w * x;
        weight_sum += w;
      } catch (const DegenerateGeometry&) {
        // skip unusable pairs; others may still constrain the point
      }
    }
  if (weight_sum <= 0.0) throw DegenerateGeometry("no stereo pair could triangulate the joint");
  return acc / weight_sum;
}

}  // namespace

Skeleton3D fuse_skeleton(std::span<const Skeleton2D> views, const RigCalibration& rig,
                         const FusionConfig& config) {
  if (views.empty()) throw InvalidArgument("fuse_skeleton: no views");
  const SkeletonModelPtr model = views.front().model;
  const int frame = views.front().frame_id;
  for (const Skeleton2D& v : views) {
    if (v.frame_id != frame)
      throw FrameMismatch(fmt::format("views mix frames {} and {}", frame, v.frame_id));
    if (!v.model || !v.model->same_topology(*model) ||
        v.joints.size() != static_cast<std::size_t>(model->joint_count()))
      throw ModelMismatch("views reference different skeleton models");
    if (!rig.cameras.count(v.camera_id))
      throw UnknownCamera(fmt::format("view references camera {}", v.camera_id));
  }

  Skeleton3D out;
  out.model = model;
  out.frame_id = frame;
  out.joints.resize(model->joint_count());

  for (int j = 0; j < model->joint_count(); ++j) {
    std::vector<ViewObservation> obs;
    for (const Skeleton2D& v : views) {
      const Joint2D& joint = v.joints[j];
      if (joint.confidence >= config.min_confidence)
        obs.push_back({rig.cameras.at(v.camera_id), joint.position, joint.confidence});
    }

    Joint3D& fused = out.joints[j];
    fused.view_count = static_cast<int>(obs.size());
    if (static_cast<int>(obs.size()) < std::max(config.min_views, 2)) {
      fused.failure = JointFailure::insufficient_views;
      continue;
    }
    try {
      fused.position = config.pairwise ? triangulate_pairwise(obs) : triangulate_dlt(obs);
      double sq = 0.0;
      for (const ViewObservation& o : obs)
        sq += (project(o.camera, fused.position) - o.pixel).squaredNorm();
      fused.rms_px = std::sqrt(sq / obs.size());
      fused.valid = true;
    } catch (const DegenerateGeometry&) {
      fused.failure = JointFailure::degenerate_geometry;
    } catch (const PointBehindCamera&) {
      // the solution is inconsistent with a contributing view
      fused.failure = JointFailure::degenerate_geometry;
    }
  }
  return out;
}

ReprojectionReport reprojection_report(const Skeleton3D& skeleton,
                                       std::span<const Skeleton2D> views,
                                       const RigCalibration& rig, const FusionConfig& config) {
  if (!skeleton.model) throw InvalidArgument("reprojection_report: skeleton has no model");
  for (const Skeleton2D& v : views) {
    if (v.frame_id != skeleton.frame_id)
      throw FrameMismatch(fmt::format("skeleton frame {} vs view frame {}", skeleton.frame_id,
                                      v.frame_id));
    if (!rig.cameras.count(v.camera_id))
      throw UnknownCamera(fmt::format("view references camera {}", v.camera_id));
  }

  ReprojectionReport report;
  report.per_joint_rms.assign(skeleton.model->joint_count(), 0.0);

  for (int j = 0; j < skeleton.model->joint_count(); ++j) {
    const Joint3D& joint = skeleton.joints[j];
    if (!joint.valid) continue;

    const std::size_t first_row = report.rows.size();
    double sq = 0.0;
    for (const Skeleton2D& v : views) {
      const Joint2D& obs = v.joints[j];
      if (obs.confidence < config.min_confidence) continue;
      double r = 0.0;
      try {
        r = (project(rig.cameras.at(v.camera_id), joint.position) - obs.position).norm();
      } catch (const PointBehindCamera&) {
        continue;  // this view cannot see the fused point
      }
      report.rows.push_back({j, v.camera_id, r, false});
      sq += r * r;
    }
    const std::size_t n = report.rows.size() - first_row;
    if (n == 0) continue;
    report.per_joint_rms[j] = std::sqrt(sq / n);

    std::vector<double> residuals;
    residuals.reserve(n);
    for (std::size_t k = first_row; k < report.rows.size(); ++k)
      residuals.push_back(report.rows[k].residual_px);
    std::nth_element(residuals.begin(), residuals.begin() + residuals.size() / 2, residuals.end());
    const double median = residuals[residuals.size() / 2];
    for (std::size_t k = first_row; k < report.rows.size(); ++k)
      report.rows[k].outlier = report.rows[k].residual_px > 5.0 * median;
  }
  return report;
}

}  // namespace mocap
