// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <span>
#include <utility>
#include <vector>

#include "mocap/errors.hpp"
#include "mocap/geometry.hpp"

// Multi-camera calibration from planar checkerboard views: per-camera
// closed-form initialization from board homographies, rig registration
// through co-observed boards, and joint Levenberg-Marquardt refinement of
// all intrinsics, camera poses and board poses over the total squared
// reprojection error.

namespace mocap {

struct CheckerboardSpec {
  int rows = 0;  // inner-corner rows
  int cols = 0;  // inner-corner columns
  double square_size = 0.0;  // cm

  CheckerboardSpec() = default;
  CheckerboardSpec(int rows, int cols, double square_size);

  int corner_count() const { return rows * cols; }
};

// Board-plane position (cm) of inner corner `index` = row * cols + col.
// The grid is centered on the board-frame origin, z = 0.
Vec2 board_corner_position(const CheckerboardSpec& spec, int index);

struct BoardObservation {
  int camera_id = -1;
  int frame_id = -1;
  std::vector<std::pair<int, Vec2>> corners;  // (board index, pixel)
};

struct RigCalibration {
  std::map<int, Camera> cameras;
  double rms_reprojection_px = 0.0;
  std::map<int, double> per_camera_rms;
};

// --- Zhang-style initialization ------------------------------------------

// Normalized-DLT plane-to-image homography, unit Frobenius norm.
// Throws DegenerateConfiguration when the stacked design matrix drops
// below rank 8 (e.g. collinear points).
Mat3 estimate_homography(std::span<const std::pair<Vec2, Vec2>> correspondences);

struct ZhangConfig {
  bool zero_skew = true;  // zero the solved skew term afterwards
};

// Closed-form intrinsics from >= 3 board homographies via the absolute-conic
// constraints. Throws InsufficientViews / IllConditioned.
Intrinsics init_intrinsics_zhang(std::span<const Mat3> homographies, const ZhangConfig& config = {});

// Board-to-camera pose from H = K [r1 r2 t]; rotation re-orthonormalized by
// nearest-rotation SVD projection, sign chosen so the board sits in front.
RigidPose estimate_board_pose(const Intrinsics& intrinsics, const Mat3& homography);

// --- Rig registration -----------------------------------------------------

// Board-to-camera poses keyed by (camera_id, frame_id) -> camera poses in the
// reference camera's frame. Relative poses are averaged over every
// co-observed frame (quaternion mean for rotations, least squares for
// translations). Throws DisconnectedRig naming unreachable cameras.
std::map<int, RigidPose> register_rig(
    const std::map<std::pair<int, int>, RigidPose>& board_poses_in_cameras,
    int reference_camera);

// --- Bundle adjustment -----------------------------------------------------

struct BAConfig {
  int max_iterations = 100;
  double initial_lambda = 1e-3;
  double lambda_up = 10.0;    // on rejection
  double lambda_down = 0.1;   // on acceptance
  double relative_cost_tolerance = 1e-12;
  double gradient_tolerance = 1e-10;  // infinity norm
  bool refine_skew = false;
  int reference_camera = -1;  // -1: lowest camera id; its pose is frozen
  int threads = 1;
};

struct BAResult {
  RigCalibration calibration;
  std::map<int, RigidPose> board_world_poses;  // by frame_id
  // objective value before optimization followed by the value after every
  // accepted step; non-increasing by the LM acceptance rule
  std::vector<double> accepted_costs;
  int iterations = 0;  // total solver iterations (accepted + rejected)
  double final_gradient_norm = 0.0;
  double final_lambda = 0.0;
};

// LM did not meet a convergence rule within max_iterations. Carries the same
// diagnostics a successful run would return.
class NonConvergence : public Error {
 public:
  NonConvergence(const std::string& message, std::vector<double> accepted_costs,
                 double final_gradient_norm, double final_lambda)
      : Error("non-convergence", message),
        accepted_costs(std::move(accepted_costs)),
        final_gradient_norm(final_gradient_norm),
        final_lambda(final_lambda) {}

  std::vector<double> accepted_costs;
  double final_gradient_norm = 0.0;
  double final_lambda = 0.0;
};

// Jointly refines intrinsics, camera poses and board poses on
// sum ||project(X) - x||^2. The reference camera's pose is frozen (gauge);
// board geometry is fixed metric data, so scale is pinned by the known
// square size. Board world poses are initialized internally from the
// observations and the initial calibration.
BAResult bundle_adjust(const RigCalibration& initial, std::span<const BoardObservation> boards,
                       const CheckerboardSpec& spec, const BAConfig& config = {});

// Residual and analytic Jacobian of one corner observation under the local
// parameterization used by bundle_adjust: intrinsics additive
// (fx, fy, cx, cy, skew), rotations by left increment exp([w]x) R, and
// translations additive. `board_point` is the corner in board-plane cm.
struct ReprojectionJacobian {
  Vec2 residual;                             // projected - observed, px
  Eigen::Matrix<double, 2, 5> d_intrinsics;  // d r / d (fx, fy, cx, cy, skew)
  Eigen::Matrix<double, 2, 6> d_camera;      // d r / d (w, t) of the camera pose
  Eigen::Matrix<double, 2, 6> d_board;       // d r / d (w, t) of the board pose
};
ReprojectionJacobian reprojection_jacobian(const Intrinsics& intrinsics,
                                           const RigidPose& camera_pose,
                                           const RigidPose& board_pose, const Vec2& board_point,
                                           const Vec2& observed_px);

// --- Full pipeline ---------------------------------------------------------

struct CalibrationConfig {
  ZhangConfig zhang;
  BAConfig ba;
  // drop correspondences with residual norm > trim_mad_factor x MAD once
  // after the first convergence, then re-run
  bool trim_outliers = true;
  double trim_mad_factor = 5.0;
  // sensor size stamped on every calibrated camera (observation files carry
  // no image dimensions)
  int image_width = 2448;
  int image_height = 2048;
};

// Homographies -> Zhang intrinsics -> board poses -> rig registration ->
// bundle adjustment (with one outlier trim pass when enabled).
BAResult calibrate_rig(std::span<const BoardObservation> boards, const CheckerboardSpec& spec,
                       const CalibrationConfig& config = {});

// Root-mean-square of per-correspondence reprojection error norms, px.
double reprojection_rms(const RigCalibration& calibration,
                        const std::map<int, RigidPose>& board_world_poses,
                        std::span<const BoardObservation> boards, const CheckerboardSpec& spec);

}  // namespace mocap
