// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <vector>

#include "mocap/calibration.hpp"
#include "mocap/geometry.hpp"
#include "mocap/skeleton.hpp"

// Per-frame fusion of multi-view 2D skeletons into a 3D skeleton by
// confidence-weighted direct linear transformation.

namespace mocap {

struct ViewObservation {
  Camera camera;
  Vec2 pixel = Vec2::Zero();
  double weight = 1.0;
};

// Homogeneous least-squares triangulation: the right singular vector of the
// weighted DLT design matrix built from K-normalized image coordinates.
// Throws InsufficientViews (< 2 usable observations) or DegenerateGeometry
// (solution direction ill-defined).
Vec3 triangulate_dlt(std::span<const ViewObservation> observations);

struct FusionConfig {
  double min_confidence = 0.3;
  int min_views = 2;
  // triangulate over every pair of contributing views and average, instead
  // of one joint DLT system over all views
  bool pairwise = false;
};

// Gathers per-joint observations above min_confidence across views,
// triangulates with confidence weights, and reports per-joint rms and view
// counts. Joints seen by fewer than min_views become invalid.
Skeleton3D fuse_skeleton(std::span<const Skeleton2D> views, const RigCalibration& rig,
                         const FusionConfig& config = {});

struct ReprojectionRow {
  int joint = -1;
  int camera_id = -1;
  double residual_px = 0.0;
  bool outlier = false;  // residual > 5x the joint's median residual
};

struct ReprojectionReport {
  std::vector<ReprojectionRow> rows;
  std::vector<double> per_joint_rms;  // indexed by joint; 0 when no views
};

// Residual table ||project(S_j) - s_ij|| for every contributing
// (joint, camera) pair of an already-fused skeleton.
ReprojectionReport reprojection_report(const Skeleton3D& skeleton,
                                       std::span<const Skeleton2D> views,
                                       const RigCalibration& rig,
                                       const FusionConfig& config = {});

}  // namespace mocap
