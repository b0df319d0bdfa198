// SPDX-License-Identifier: Apache-2.0

#include "mocap/synth.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

#include "mocap/errors.hpp"
#include "mocap/rng.hpp"

namespace mocap::synth {

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;
constexpr double kDegToRad = kPi / 180.0;

}  // namespace

std::vector<Camera> build_rig(const RigSpec& spec) {
  if (spec.column_count < 2) throw InvalidSpec("rig: column_count must be >= 2");
  if (!(spec.diameter_cm > 0.0)) throw InvalidSpec("rig: diameter must be positive");
  if (spec.heights_cm.empty()) throw InvalidSpec("rig: needs at least one camera height");
  if (spec.heights_cm.size() != spec.tilt_deg.size())
    throw InvalidSpec("rig: one tilt per height required");
  for (std::size_t i = 1; i < spec.heights_cm.size(); ++i)
    if (!(spec.heights_cm[i] > spec.heights_cm[i - 1]))
      throw InvalidSpec("rig: heights must be strictly increasing");
  for (double tilt : spec.tilt_deg)
    if (!(tilt >= 0.0) || tilt >= 90.0)
      throw InvalidSpec(fmt::format("rig: tilt {} deg outside [0, 90)", tilt));
  if (spec.image_width <= 0 || spec.image_height <= 0)
    throw InvalidSpec("rig: image size must be positive");

  const double radius = 0.5 * spec.diameter_cm;
  std::vector<Camera> cameras;
  cameras.reserve(spec.column_count * spec.heights_cm.size());
  for (int c = 0; c < spec.column_count; ++c) {
    const double azimuth = 2.0 * kPi * c / spec.column_count;
    for (std::size_t level = 0; level < spec.heights_cm.size(); ++level) {
      const double tilt = spec.tilt_deg[level] * kDegToRad;
      const Vec3 position(radius * std::cos(azimuth), radius * std::sin(azimuth),
                          spec.heights_cm[level]);
      // optical axis points at the rig axis, pitched down by `tilt`
      const Vec3 forward(-std::cos(azimuth) * std::cos(tilt), -std::sin(azimuth) * std::cos(tilt),
                         -std::sin(tilt));
      const Vec3 right = forward.cross(Vec3::UnitZ()).normalized();  // image x
      const Vec3 down = forward.cross(right);                        // image y

      Mat3 rotation;  // world-to-camera
      rotation.row(0) = right.transpose();
      rotation.row(1) = down.transpose();
      rotation.row(2) = forward.transpose();
      const RigidPose pose = RigidPose::from_matrix(rotation, -(rotation * position));
      cameras.emplace_back(spec.intrinsics, pose, spec.image_width, spec.image_height);
    }
  }
  return cameras;
}

std::vector<RigidPose> uniform_board_schedule(const SweepSchedule& schedule) {
  if (schedule.pose_count < 1) throw InvalidSpec("sweep: pose_count must be >= 1");
  if (schedule.pitch_steps < 1) throw InvalidSpec("sweep: pitch_steps must be >= 1");

  std::vector<RigidPose> poses;
  poses.reserve(schedule.pose_count);
  for (int i = 0; i < schedule.pose_count; ++i) {
    const double yaw = 2.0 * kPi * i / schedule.pose_count;
    const double pitch_frac =
        schedule.pitch_steps == 1
            ? 0.0
            : -1.0 + 2.0 * (i % schedule.pitch_steps) / (schedule.pitch_steps - 1);
    const double pitch = schedule.max_pitch_deg * kDegToRad * pitch_frac;

    // identity board orientation lies in the world xy plane; stand it upright
    // (normal horizontal), then tilt by pitch and spin by yaw
    const Eigen::Quaterniond rotation =
        Eigen::Quaterniond(Eigen::AngleAxisd(yaw, Vec3::UnitZ())) *
        Eigen::Quaterniond(Eigen::AngleAxisd(pitch - 0.5 * kPi, Vec3::UnitX()));

    const double wobble = 2.0 * kPi * i / std::max(1, schedule.pose_count);
    const Vec3 center(schedule.lateral_offset_cm * std::cos(3.0 * wobble),
                      schedule.lateral_offset_cm * std::sin(5.0 * wobble),
                      schedule.center_height_cm);
    poses.emplace_back(rotation, center);
  }
  return poses;
}

SweepResult sweep_checkerboard(const CheckerboardSpec& board, std::span<const Camera> cameras,
                               std::span<const RigidPose> schedule,
                               const ObservationNoise& noise) {
  SweepResult result;
  for (std::size_t frame = 0; frame < schedule.size(); ++frame) {
    const RigidPose& board_pose = schedule[frame];
    result.board_poses[static_cast<int>(frame)] = board_pose;
    const Vec3 normal = board_pose.rotation() * Vec3::UnitZ();

    for (std::size_t cam_id = 0; cam_id < cameras.size(); ++cam_id) {
      const Camera& camera = cameras[cam_id];
      Rng rng(mix_seed(noise.seed, frame * cameras.size() + cam_id));

      BoardObservation obs;
      obs.camera_id = static_cast<int>(cam_id);
      obs.frame_id = static_cast<int>(frame);
      for (int k = 0; k < board.corner_count(); ++k) {
        const Vec2 bp = board_corner_position(board, k);
        const Vec3 world = board_pose.apply(Vec3(bp.x(), bp.y(), 0.0));
        if (normal.dot(camera.center() - world) <= 0.0) continue;  // back face
        Vec2 px;
        try {
          px = project(camera, world);
        } catch (const PointBehindCamera&) {
          continue;
        }
        if (!camera.contains_pixel(px)) continue;
        if (noise.sigma_px > 0.0)
          px += Vec2(rng.normal(0.0, noise.sigma_px), rng.normal(0.0, noise.sigma_px));
        obs.corners.emplace_back(k, px);
      }
      if (obs.corners.size() >= 4) result.observations.push_back(std::move(obs));
    }
  }
  return result;
}

std::vector<Vec3> default_body25_pose() {
  // standing at the rig center facing +x, soft knees and elbows; z up, cm
  std::vector<Vec3> p(25);
  p[0] = {6, 0, 162};     // nose
  p[1] = {0, 0, 152};     // neck
  p[2] = {0, -20, 148};   // r_shoulder
  p[3] = {8, -26, 121};   // r_elbow
  p[4] = {30, -28, 98};   // r_wrist
  p[5] = {0, 20, 148};    // l_shoulder
  p[6] = {8, 26, 121};    // l_elbow
  p[7] = {30, 28, 98};    // l_wrist
  p[8] = {0, 0, 95};      // mid_hip
  p[9] = {0, -10, 93};    // r_hip
  p[10] = {10, -11, 52};  // r_knee
  p[11] = {0, -12, 12};   // r_ankle
  p[12] = {0, 10, 93};    // l_hip
  p[13] = {10, 11, 52};   // l_knee
  p[14] = {0, 12, 12};    // l_ankle
  p[15] = {9, -3, 165};   // r_eye
  p[16] = {9, 3, 165};    // l_eye
  p[17] = {4, -8, 163};   // r_ear
  p[18] = {4, 8, 163};    // l_ear
  p[19] = {14, 12, 2};    // l_big_toe
  p[20] = {13, 16, 2};    // l_small_toe
  p[21] = {-5, 12, 2};    // l_heel
  p[22] = {14, -12, 2};   // r_big_toe
  p[23] = {13, -16, 2};   // r_small_toe
  p[24] = {-5, -12, 2};   // r_heel
  return p;
}

MotionSpec random_motion_spec(SkeletonModelPtr model, int frame_count, double frame_rate,
                              std::uint64_t seed) {
  MotionSpec spec;
  spec.model = std::move(model);
  spec.base_pose = default_body25_pose();
  spec.frame_count = frame_count;
  spec.frame_rate = frame_rate;

  Rng rng(mix_seed(seed, 0x6d6f74696f6eULL));
  // limb joints swing more than the torso; amplitudes stay small enough that
  // no tracked angle approaches full extension
  const std::vector<int> limb = {3, 4, 6, 7, 10, 11, 13, 14, 19, 20, 21, 22, 23, 24};
  for (int j = 0; j < spec.model->joint_count(); ++j) {
    const bool is_limb = std::find(limb.begin(), limb.end(), j) != limb.end();
    const double max_amp = is_limb ? 4.0 : 1.5;
    JointWobble w;
    w.joint = j;
    w.amplitude_cm = Vec3(rng.uniform(-max_amp, max_amp), rng.uniform(-max_amp, max_amp),
                          rng.uniform(-max_amp, max_amp));
    w.frequency_hz = rng.uniform(0.3, 1.2);
    w.phase_rad = rng.uniform(0.0, 2.0 * kPi);
    spec.perturbations.push_back(w);
  }
  return spec;
}

SkeletonSequence animate_skeleton(const MotionSpec& motion) {
  if (!motion.model) throw InvalidSpec("motion: missing skeleton model");
  if (motion.frame_count < 1) throw InvalidSpec("motion: frame_count must be >= 1");
  if (!(motion.frame_rate > 0.0)) throw InvalidSpec("motion: frame_rate must be positive");
  if (motion.base_pose.size() != static_cast<std::size_t>(motion.model->joint_count()))
    throw InvalidSpec("motion: base pose joint count mismatch");
  for (const JointWobble& w : motion.perturbations)
    if (w.joint < 0 || w.joint >= motion.model->joint_count())
      throw InvalidSpec(fmt::format("motion: perturbation references joint {}", w.joint));

  SkeletonSequence seq;
  seq.model = motion.model;
  seq.frame_rate = motion.frame_rate;
  seq.subject = "synthetic";
  seq.frames.assign(motion.frame_count, std::vector<JointSample>(motion.model->joint_count()));

  for (int f = 0; f < motion.frame_count; ++f) {
    auto& frame = seq.frames[f];
    for (int j = 0; j < motion.model->joint_count(); ++j) {
      frame[j].position = motion.base_pose[j];
      frame[j].valid = true;
    }
    const double t = f / motion.frame_rate;
    for (const JointWobble& w : motion.perturbations)
      frame[w.joint].position += w.amplitude_cm * std::sin(2.0 * kPi * w.frequency_hz * t + w.phase_rad);

    for (int j = 0; j < motion.model->joint_count(); ++j) {
      if (j == motion.model->root()) continue;
      const double bone = (frame[j].position - frame[motion.model->parents()[j]].position).norm();
      if (bone < 1e-6)
        throw InvalidSpec(fmt::format("motion: bone to joint {} collapses at frame {}", j, f));
    }
  }
  return seq;
}

std::vector<std::vector<Skeleton2D>> project_sequence(const SkeletonSequence& seq,
                                                      std::span<const Camera> cameras,
                                                      const ProjectionNoise& noise) {
  if (!seq.model) throw InvalidSpec("project_sequence: sequence has no model");
  std::vector<std::vector<Skeleton2D>> out(seq.frames.size());

  for (std::size_t f = 0; f < seq.frames.size(); ++f) {
    out[f].resize(cameras.size());
    for (std::size_t cam_id = 0; cam_id < cameras.size(); ++cam_id) {
      Rng rng(mix_seed(noise.seed, f * cameras.size() + cam_id));
      Skeleton2D& view = out[f][cam_id];
      view.model = seq.model;
      view.camera_id = static_cast<int>(cam_id);
      view.frame_id = static_cast<int>(f);
      view.joints.resize(seq.model->joint_count());

      for (int j = 0; j < seq.model->joint_count(); ++j) {
        const double drop = rng.uniform();
        const JointSample& joint = seq.frames[f][j];
        if (!joint.valid || (noise.dropout_rate > 0.0 && drop < noise.dropout_rate)) continue;
        Vec2 px;
        try {
          px = project(cameras[cam_id], joint.position);
        } catch (const PointBehindCamera&) {
          continue;
        }
        if (!cameras[cam_id].contains_pixel(px)) continue;
        if (noise.sigma_px > 0.0)
          px += Vec2(rng.normal(0.0, noise.sigma_px), rng.normal(0.0, noise.sigma_px));
        view.joints[j].position = px;
        view.joints[j].confidence = 1.0;
      }
    }
  }
  return out;
}

}  // namespace mocap::synth
