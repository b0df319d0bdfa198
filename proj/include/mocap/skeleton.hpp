// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>
#include <string>
#include <vector>

#include "mocap/geometry.hpp"

namespace mocap {

// Ordered joints (prev, center, next) whose two bone vectors define one
// tracked joint angle.
struct AngleTriple {
  int prev = -1;
  int center = -1;
  int next = -1;
};

// Kinematic tree plus the angle-triple table used by the analysis layer.
// Immutable after construction; shared by reference between sequences.
class SkeletonModel {
 public:
  SkeletonModel(std::string name, std::vector<std::string> joint_names,
                std::vector<int> parents, std::vector<AngleTriple> angle_triples,
                std::vector<int> alignment_joints);

  const std::string& name() const { return name_; }
  int joint_count() const { return static_cast<int>(parents_.size()); }
  const std::vector<std::string>& joint_names() const { return joint_names_; }
  const std::vector<int>& parents() const { return parents_; }
  int root() const { return root_; }
  const std::vector<AngleTriple>& angle_triples() const { return angle_triples_; }
  // joints used by rigid sequence alignment (root and hips for Body-25)
  const std::vector<int>& alignment_joints() const { return alignment_joints_; }
  // joint indices in parent-before-child order, root first
  const std::vector<int>& traversal_order() const { return traversal_; }

  bool same_topology(const SkeletonModel& other) const;

 private:
  std::string name_;
  std::vector<std::string> joint_names_;
  std::vector<int> parents_;
  int root_ = -1;
  std::vector<AngleTriple> angle_triples_;
  std::vector<int> alignment_joints_;
  std::vector<int> traversal_;
};

using SkeletonModelPtr = std::shared_ptr<const SkeletonModel>;

// The 25-joint OpenPose layout with angle triples at the shoulders, elbows,
// hips and knees.
SkeletonModelPtr body25_model();

// Resolves a model by the name stored in skeleton files.
SkeletonModelPtr model_by_name(const std::string& name);

struct Joint2D {
  Vec2 position = Vec2::Zero();  // px
  double confidence = 0.0;       // in [0, 1]; 0 encodes a missing joint
};

struct Skeleton2D {
  SkeletonModelPtr model;
  std::vector<Joint2D> joints;  // size model->joint_count()
  int camera_id = -1;
  int frame_id = -1;
};

enum class JointFailure { none, insufficient_views, degenerate_geometry };

struct Joint3D {
  Vec3 position = Vec3::Zero();  // cm
  bool valid = false;
  JointFailure failure = JointFailure::none;
  double rms_px = 0.0;  // reprojection rms over contributing views
  int view_count = 0;
};

struct Skeleton3D {
  SkeletonModelPtr model;
  std::vector<Joint3D> joints;
  int frame_id = -1;
};

struct JointSample {
  Vec3 position = Vec3::Zero();  // cm
  bool valid = false;
};

// T x N joint track at a fixed frame rate.
struct SkeletonSequence {
  SkeletonModelPtr model;
  std::vector<std::vector<JointSample>> frames;  // [frame][joint]
  double frame_rate = 30.0;                      // fps
  std::string subject;

  int frame_count() const { return static_cast<int>(frames.size()); }
  int joint_count() const { return model ? model->joint_count() : 0; }
};

}  // namespace mocap
