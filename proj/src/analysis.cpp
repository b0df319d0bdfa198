// SPDX-License-Identifier: Apache-2.0

#include "mocap/analysis.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

#include "mocap/errors.hpp"

namespace mocap {

namespace {

constexpr double kMinBoneLength = 1e-6;  // cm
constexpr double kRadToDeg = 57.295779513082320876798154814105;

void require_sequence(const SkeletonSequence& seq, const char* what) {
  if (!seq.model) throw InvalidArgument(fmt::format("{}: sequence has no model", what));
  if (seq.frames.empty()) throw InvalidArgument(fmt::format("{}: sequence has no frames", what));
  for (const auto& frame : seq.frames)
    if (frame.size() != static_cast<std::size_t>(seq.model->joint_count()))
      throw InvalidArgument(fmt::format("{}: frame joint count mismatch", what));
}

}  // namespace

StandardBody::StandardBody(SkeletonModelPtr model_in, std::vector<double> bone_lengths_in)
    : model(std::move(model_in)), bone_lengths(std::move(bone_lengths_in)) {
  if (!model) throw InvalidArgument("StandardBody: missing model");
  if (bone_lengths.size() != static_cast<std::size_t>(model->joint_count()))
    throw InvalidArgument("StandardBody: one bone length per non-root joint required");
  for (int j = 0; j < model->joint_count(); ++j) {
    if (j == model->root()) continue;
    if (!(bone_lengths[j] > 0.0) || !std::isfinite(bone_lengths[j]))
      throw InvalidArgument(
          fmt::format("StandardBody: bone length of joint {} must be positive", j));
  }
}

StandardBody StandardBody::from_sequence(const SkeletonSequence& seq) {
  require_sequence(seq, "StandardBody::from_sequence");
  for (const auto& frame : seq.frames) {
    const bool all_valid =
        std::all_of(frame.begin(), frame.end(), [](const JointSample& s) { return s.valid; });
    if (!all_valid) continue;
    std::vector<double> lengths(seq.model->joint_count(), 0.0);
    for (int j = 0; j < seq.model->joint_count(); ++j) {
      if (j == seq.model->root()) continue;
      lengths[j] = (frame[j].position - frame[seq.model->parents()[j]].position).norm();
    }
    return StandardBody(seq.model, std::move(lengths));
  }
  throw InvalidArgument("StandardBody::from_sequence: no frame with all joints valid");
}

AngleSequence joint_angles(const SkeletonSequence& seq) {
  require_sequence(seq, "joint_angles");
  const auto& triples = seq.model->angle_triples();
  const int frames = seq.frame_count();

  AngleSequence out;
  out.model = seq.model;
  out.values.assign(triples.size(), std::vector<double>(frames, 0.0));
  out.valid.assign(triples.size(), std::vector<unsigned char>(frames, 0));

  for (std::size_t t = 0; t < triples.size(); ++t) {
    const AngleTriple& triple = triples[t];
    for (int f = 0; f < frames; ++f) {
      const auto& frame = seq.frames[f];
      const JointSample& a = frame[triple.prev];
      const JointSample& c = frame[triple.center];
      const JointSample& b = frame[triple.next];
      if (!a.valid || !c.valid || !b.valid) continue;

      const Vec3 u = a.position - c.position;
      const Vec3 v = b.position - c.position;
      const double nu = u.norm();
      const double nv = v.norm();
      if (nu < kMinBoneLength || nv < kMinBoneLength) continue;  // zero-length bone

      const double d = std::clamp(u.dot(v) / (nu * nv), -1.0, 1.0);
      out.values[t][f] = std::acos(d);
      out.valid[t][f] = 1;
    }
  }
  return out;
}

SkeletonSequence retarget(const SkeletonSequence& seq, const StandardBody& target) {
  require_sequence(seq, "retarget");
  if (!target.model || !target.model->same_topology(*seq.model))
    throw TopologyMismatch("retarget: sequence and target body topologies differ");

  SkeletonSequence out = seq;
  const auto& parents = seq.model->parents();
  for (std::size_t f = 0; f < seq.frames.size(); ++f) {
    const auto& src = seq.frames[f];
    auto& dst = out.frames[f];
    for (int j : seq.model->traversal_order()) {
      if (j == seq.model->root()) {
        dst[j] = src[j];  // root position preserved
        continue;
      }
      const int p = parents[j];
      if (!dst[p].valid || !src[j].valid || !src[p].valid) {
        dst[j].valid = false;
        continue;
      }
      const Vec3 edge = src[j].position - src[p].position;
      const double len = edge.norm();
      if (len < kMinBoneLength) {  // direction undefined; invalidates the subtree
        dst[j].valid = false;
        continue;
      }
      dst[j].position = dst[p].position + (target.bone_lengths[j] / len) * edge;
      dst[j].valid = true;
    }
  }
  return out;
}

SkeletonSequence align_global(const SkeletonSequence& seq, const SkeletonSequence& reference) {
  require_sequence(seq, "align_global");
  require_sequence(reference, "align_global reference");
  if (!reference.model->same_topology(*seq.model))
    throw ModelMismatch("align_global: models differ");
  if (seq.frame_count() != reference.frame_count())
    throw InvalidArgument(fmt::format("align_global: frame counts differ ({} vs {})",
                                      seq.frame_count(), reference.frame_count()));

  const std::vector<int>& joints = seq.model->alignment_joints();
  if (joints.empty()) throw DegenerateAlignment("model defines no alignment joints");

  // gather pairs from frames where every alignment joint is valid in both
  std::vector<std::pair<Vec3, Vec3>> pairs;  // (seq point, reference point)
  int usable_frames = 0;
  for (int f = 0; f < seq.frame_count(); ++f) {
    const bool usable = std::all_of(joints.begin(), joints.end(), [&](int j) {
      return seq.frames[f][j].valid && reference.frames[f][j].valid;
    });
    if (!usable) continue;
    ++usable_frames;
    for (int j : joints) pairs.emplace_back(seq.frames[f][j].position, reference.frames[f][j].position);
  }
  if (2 * usable_frames < seq.frame_count())
    throw DegenerateAlignment(
        fmt::format("alignment joints valid in only {}/{} frames", usable_frames, seq.frame_count()));

  Vec3 mean_p = Vec3::Zero(), mean_q = Vec3::Zero();
  for (const auto& [p, q] : pairs) {
    mean_p += p;
    mean_q += q;
  }
  mean_p /= static_cast<double>(pairs.size());
  mean_q /= static_cast<double>(pairs.size());

  // closed-form rotation about z: 2D Procrustes on the centered xy coordinates
  double c = 0.0, s = 0.0;
  for (const auto& [p, q] : pairs) {
    const Vec2 pc(p.x() - mean_p.x(), p.y() - mean_p.y());
    const Vec2 qc(q.x() - mean_q.x(), q.y() - mean_q.y());
    c += pc.x() * qc.x() + pc.y() * qc.y();
    s += pc.x() * qc.y() - pc.y() * qc.x();
  }
  const double theta = (c == 0.0 && s == 0.0) ? 0.0 : std::atan2(s, c);

  const RigidPose rotation = RigidPose::from_axis_angle(Vec3::UnitZ(), theta);
  const Vec3 translation = mean_q - rotation.apply(mean_p);
  const RigidPose transform(rotation.rotation(), translation);

  SkeletonSequence out = seq;
  for (auto& frame : out.frames)
    for (auto& joint : frame)
      if (joint.valid) joint.position = transform.apply(joint.position);
  return out;
}

SkeletonSequence resample_sequence(const SkeletonSequence& seq, int frame_count) {
  require_sequence(seq, "resample_sequence");
  if (frame_count < 1) throw InvalidArgument("resample_sequence: frame_count must be >= 1");
  if (frame_count == seq.frame_count()) return seq;

  SkeletonSequence out = seq;
  out.frames.assign(frame_count, std::vector<JointSample>(seq.model->joint_count()));
  const double step =
      frame_count == 1 ? 0.0 : static_cast<double>(seq.frame_count() - 1) / (frame_count - 1);
  for (int f = 0; f < frame_count; ++f) {
    const double pos = f * step;
    const int lo = std::min(static_cast<int>(pos), seq.frame_count() - 1);
    const int hi = std::min(lo + 1, seq.frame_count() - 1);
    const double w = pos - lo;
    for (int j = 0; j < seq.model->joint_count(); ++j) {
      const JointSample& a = seq.frames[lo][j];
      const JointSample& b = seq.frames[hi][j];
      if (a.valid && b.valid) {
        out.frames[f][j].position = (1.0 - w) * a.position + w * b.position;
        out.frames[f][j].valid = true;
      }
    }
  }
  return out;
}

ComparisonReport compare(const SkeletonSequence& student, const SkeletonSequence& coach,
                         const CompareConfig& config) {
  require_sequence(student, "compare student");
  require_sequence(coach, "compare coach");
  if (!student.model->same_topology(*coach.model))
    throw ModelMismatch("compare: student and coach use different skeleton models");

  const int frames = std::min(student.frame_count(), coach.frame_count());
  SkeletonSequence s = resample_sequence(student, frames);
  SkeletonSequence c = resample_sequence(coach, frames);
  if (config.align) s = align_global(s, c);

  const int joints = s.model->joint_count();
  ComparisonReport report;
  report.frame_count = frames;
  report.trajectory_deviation_cm.assign(joints, std::vector<double>(frames, 0.0));
  report.trajectory_valid.assign(joints, std::vector<unsigned char>(frames, 0));

  double distance_sum = 0.0;
  std::size_t distance_n = 0;
  for (int j = 0; j < joints; ++j)
    for (int f = 0; f < frames; ++f) {
      const JointSample& a = s.frames[f][j];
      const JointSample& b = c.frames[f][j];
      if (!a.valid || !b.valid) continue;
      const double d = (a.position - b.position).norm();
      report.trajectory_deviation_cm[j][f] = d;
      report.trajectory_valid[j][f] = 1;
      distance_sum += d;
      ++distance_n;
    }
  report.mean_distance_error_cm = distance_n ? distance_sum / distance_n : 0.0;

  const AngleSequence sa = joint_angles(s);
  const AngleSequence ca = joint_angles(c);
  const int triples = sa.triple_count();
  report.angle_deviation_deg.assign(triples, std::vector<double>(frames, 0.0));
  report.angle_valid.assign(triples, std::vector<unsigned char>(frames, 0));

  double angle_sum = 0.0;
  std::size_t angle_n = 0;
  for (int t = 0; t < triples; ++t)
    for (int f = 0; f < frames; ++f) {
      if (!sa.valid[t][f] || !ca.valid[t][f]) continue;
      const double d = std::abs(sa.values[t][f] - ca.values[t][f]) * kRadToDeg;
      report.angle_deviation_deg[t][f] = d;
      report.angle_valid[t][f] = 1;
      angle_sum += d;
      ++angle_n;
    }
  report.mean_angle_error_deg = angle_n ? angle_sum / angle_n : 0.0;

  // flagged intervals: maximal runs of >= flag_min_frames consecutive frames
  // above the threshold
  for (int t = 0; t < triples; ++t) {
    int run_start = -1;
    for (int f = 0; f <= frames; ++f) {
      const bool hot = f < frames && report.angle_valid[t][f] &&
                       report.angle_deviation_deg[t][f] > config.flag_threshold_deg;
      if (hot && run_start < 0) run_start = f;
      if (!hot && run_start >= 0) {
        if (f - run_start >= config.flag_min_frames)
          report.flagged.push_back({t, run_start, f});
        run_start = -1;
      }
    }
  }
  return report;
}

}  // namespace mocap
