// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "mocap/calibration.hpp"
#include "mocap/geometry.hpp"
#include "mocap/skeleton.hpp"

// Ground-truth synthetic scenes: the 32-camera ring rig, checkerboard
// sweeps, and articulated skeleton motions. Identical specs and seeds
// produce bit-identical outputs.

namespace mocap::synth {

struct RigSpec {
  int column_count = 16;
  double diameter_cm = 450.0;
  std::vector<double> heights_cm = {100.0, 200.0};
  std::vector<double> tilt_deg = {10.0, 20.0};  // downward pitch per height
  Intrinsics intrinsics{2000.0, 2000.0, 1224.0, 1024.0, 0.0};
  int image_width = 2448;
  int image_height = 2048;
};

// Cameras on a regular polygon at each height, aimed at the rig axis with
// the given downward tilt. Camera id = column * heights + height index.
// The default spec yields the 32-camera paper rig.
std::vector<Camera> build_rig(const RigSpec& spec);

// Uniformly swept board poses (board-to-world): full yaw rotation over the
// schedule, cycling pitch tilts, and small cycling lateral offsets around the
// rig center.
struct SweepSchedule {
  int pose_count = 100;
  double center_height_cm = 125.0;
  double max_pitch_deg = 30.0;
  int pitch_steps = 5;
  double lateral_offset_cm = 25.0;
};
std::vector<RigidPose> uniform_board_schedule(const SweepSchedule& schedule = {});

struct ObservationNoise {
  double sigma_px = 0.0;
  std::uint64_t seed = 0;
};

struct SweepResult {
  std::vector<BoardObservation> observations;
  std::map<int, RigidPose> board_poses;  // ground truth, board-to-world, by frame
};

// Forward-projects the board through every camera. Corners behind a camera,
// outside its image, or on the back face of the board are dropped;
// observations keep >= 4 corners or are omitted.
SweepResult sweep_checkerboard(const CheckerboardSpec& board, std::span<const Camera> cameras,
                               std::span<const RigidPose> schedule,
                               const ObservationNoise& noise = {});

// --- skeleton motion --------------------------------------------------------

struct JointWobble {
  int joint = 0;
  Vec3 amplitude_cm = Vec3::Zero();
  double frequency_hz = 1.0;
  double phase_rad = 0.0;
};

struct MotionSpec {
  SkeletonModelPtr model;
  std::vector<Vec3> base_pose;  // cm, one per joint
  int frame_count = 48;
  double frame_rate = 30.0;  // fps
  std::vector<JointWobble> perturbations;
};

// Neutral standing Body-25 pose (cm) with slightly flexed limbs, centered on
// the rig origin.
std::vector<Vec3> default_body25_pose();

// Seeded sinusoidal perturbations of the limbs, safe for angle analysis
// (bones stay well away from zero length and full extension).
MotionSpec random_motion_spec(SkeletonModelPtr model, int frame_count, double frame_rate,
                              std::uint64_t seed);

// Deterministic ground-truth sequence; throws InvalidSpec when a perturbation
// collapses a bone to zero length.
SkeletonSequence animate_skeleton(const MotionSpec& motion);

struct ProjectionNoise {
  double sigma_px = 0.0;
  double dropout_rate = 0.0;  // per-joint per-view probability of confidence 0
  std::uint64_t seed = 0;
};

// Per-view projections of a sequence; joints behind a camera or outside the
// image get confidence 0. Returned as [frame][camera].
std::vector<std::vector<Skeleton2D>> project_sequence(const SkeletonSequence& seq,
                                                      std::span<const Camera> cameras,
                                                      const ProjectionNoise& noise = {});

}  // namespace mocap::synth
