// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "mocap/geometry.hpp"
#include "mocap/skeleton.hpp"

// Sequence normalization onto a standard body, joint-angle extraction, and
// coach-vs-student comparison reports.

namespace mocap {

// Target bone lengths per (parent, child) edge, indexed by the child joint.
struct StandardBody {
  SkeletonModelPtr model;
  std::vector<double> bone_lengths;  // cm; entry at the root is unused (0)

  StandardBody() = default;
  StandardBody(SkeletonModelPtr model, std::vector<double> bone_lengths);

  // Bone lengths measured on the first frame of a sequence where every
  // joint is valid.
  static StandardBody from_sequence(const SkeletonSequence& seq);
};

// Per angle-triple time series, radians in [0, pi]. Samples are invalid when
// any member joint is invalid or a bone vector is shorter than 1e-6 cm.
struct AngleSequence {
  SkeletonModelPtr model;
  std::vector<std::vector<double>> values;      // [triple][frame], rad
  std::vector<std::vector<unsigned char>> valid;  // [triple][frame]

  int triple_count() const { return static_cast<int>(values.size()); }
  int frame_count() const { return values.empty() ? 0 : static_cast<int>(values.front().size()); }
};

// arccos of the clamped normalized dot product of (S_prev - S_center) and
// (S_next - S_center), per triple, per frame.
AngleSequence joint_angles(const SkeletonSequence& seq);

// Direction-preserving retargeting: the root position is kept and every edge
// is rescaled to the target bone length along its source direction, in tree
// order. Output bone lengths equal the target exactly; joint angles are
// unchanged. Source edges shorter than 1e-6 cm invalidate their subtree.
SkeletonSequence retarget(const SkeletonSequence& seq, const StandardBody& target);

// Single rigid transform (rotation about vertical plus translation), solved
// by least squares over the model's alignment joints across all frames, that
// best aligns `seq` onto `reference`. Bone lengths and joint angles are
// unchanged. Throws DegenerateAlignment when more than half of the frames
// lack valid alignment joints.
SkeletonSequence align_global(const SkeletonSequence& seq, const SkeletonSequence& reference);

struct CompareConfig {
  double flag_threshold_deg = 10.0;
  int flag_min_frames = 3;
  bool align = true;  // align student onto coach before measuring
};

struct FlaggedInterval {
  int triple = -1;
  int begin_frame = 0;  // inclusive
  int end_frame = 0;    // exclusive
};

struct ComparisonReport {
  int frame_count = 0;
  // per-joint trajectory deviation, cm: [joint][frame], with validity mask
  std::vector<std::vector<double>> trajectory_deviation_cm;
  std::vector<std::vector<unsigned char>> trajectory_valid;
  // per-triple absolute angle deviation, deg: [triple][frame]
  std::vector<std::vector<double>> angle_deviation_deg;
  std::vector<std::vector<unsigned char>> angle_valid;
  double mean_distance_error_cm = 0.0;
  double mean_angle_error_deg = 0.0;
  std::vector<FlaggedInterval> flagged;
};

// Per-frame trajectory and angle deviations between two sequences of the same
// model (both expected to be retargeted to one StandardBody beforehand).
// Unequal lengths are handled by uniform linear time-resampling of the longer
// sequence down to the shorter one.
ComparisonReport compare(const SkeletonSequence& student, const SkeletonSequence& coach,
                         const CompareConfig& config = {});

// Uniform linear time-resampling to `frame_count` frames. A resampled joint
// is valid only when both bracketing source samples are valid.
SkeletonSequence resample_sequence(const SkeletonSequence& seq, int frame_count);

}  // namespace mocap
