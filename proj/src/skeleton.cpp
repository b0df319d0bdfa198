// SPDX-License-Identifier: Apache-2.0

#include "mocap/skeleton.hpp"

#include <fmt/format.h>

#include <algorithm>

#include "mocap/errors.hpp"

namespace mocap {

SkeletonModel::SkeletonModel(std::string name, std::vector<std::string> joint_names,
                             std::vector<int> parents, std::vector<AngleTriple> angle_triples,
                             std::vector<int> alignment_joints)
    : name_(std::move(name)),
      joint_names_(std::move(joint_names)),
      parents_(std::move(parents)),
      angle_triples_(std::move(angle_triples)),
      alignment_joints_(std::move(alignment_joints)) {
  const int n = static_cast<int>(parents_.size());
  if (n < 1) throw InvalidSpec("skeleton model: needs at least one joint");
  if (static_cast<int>(joint_names_.size()) != n)
    throw InvalidSpec("skeleton model: joint name count mismatch");

  for (int j = 0; j < n; ++j) {
    if (parents_[j] == -1) {
      if (root_ != -1) throw InvalidSpec("skeleton model: more than one root");
      root_ = j;
    } else if (parents_[j] < 0 || parents_[j] >= n) {
      throw InvalidSpec(fmt::format("skeleton model: parent of joint {} out of range", j));
    }
  }
  if (root_ == -1) throw InvalidSpec("skeleton model: no root joint");

  // parent-before-child order; also rejects cycles
  traversal_.reserve(n);
  std::vector<char> placed(n, 0);
  traversal_.push_back(root_);
  placed[root_] = 1;
  for (std::size_t cursor = 0; cursor < traversal_.size(); ++cursor) {
    const int p = traversal_[cursor];
    for (int j = 0; j < n; ++j)
      if (!placed[j] && parents_[j] == p) {
        traversal_.push_back(j);
        placed[j] = 1;
      }
  }
  if (static_cast<int>(traversal_.size()) != n)
    throw InvalidSpec("skeleton model: kinematic tree is cyclic or disconnected");

  for (const AngleTriple& t : angle_triples_) {
    for (int j : {t.prev, t.center, t.next})
      if (j < 0 || j >= n)
        throw InvalidSpec(fmt::format("skeleton model: angle triple references joint {}", j));
  }
  for (int j : alignment_joints_)
    if (j < 0 || j >= n)
      throw InvalidSpec(fmt::format("skeleton model: alignment joint {} out of range", j));
}

bool SkeletonModel::same_topology(const SkeletonModel& other) const {
  return parents_ == other.parents_;
}

SkeletonModelPtr body25_model() {
  static const SkeletonModelPtr model = [] {
    std::vector<std::string> names = {
        "nose",      "neck",       "r_shoulder", "r_elbow",   "r_wrist",
        "l_shoulder", "l_elbow",   "l_wrist",    "mid_hip",   "r_hip",
        "r_knee",    "r_ankle",    "l_hip",      "l_knee",    "l_ankle",
        "r_eye",     "l_eye",      "r_ear",      "l_ear",     "l_big_toe",
        "l_small_toe", "l_heel",   "r_big_toe",  "r_small_toe", "r_heel"};
    std::vector<int> parents = {1,  8,  1,  2,  3,  1,  5,  6,  -1, 8,
                                9,  10, 8,  12, 13, 0,  0,  15, 16, 14,
                                19, 14, 11, 22, 11};
    // shoulders, elbows, hips and knees; each triple is (parent, joint, child)
    std::vector<AngleTriple> triples = {
        {1, 2, 3},    // right shoulder
        {1, 5, 6},    // left shoulder
        {2, 3, 4},    // right elbow
        {5, 6, 7},    // left elbow
        {8, 9, 10},   // right hip
        {8, 12, 13},  // left hip
        {9, 10, 11},  // right knee
        {12, 13, 14}, // left knee
    };
    return std::make_shared<const SkeletonModel>("body25", std::move(names), std::move(parents),
                                                 std::move(triples),
                                                 std::vector<int>{8, 9, 12});
  }();
  return model;
}

SkeletonModelPtr model_by_name(const std::string& name) {
  if (name == "body25") return body25_model();
  throw ParseError(fmt::format("unknown skeleton model '{}'", name));
}

}  // namespace mocap
