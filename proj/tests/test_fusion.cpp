// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <vector>

#include "helpers.hpp"
#include "mocap/fusion.hpp"
#include "mocap/synth.hpp"

using namespace mocap;
using test::Rng;

namespace {

std::vector<Camera> one_ring(int columns) {
  synth::RigSpec spec;
  spec.column_count = columns;
  spec.heights_cm = {100.0};
  spec.tilt_deg = {10.0};
  return synth::build_rig(spec);
}

RigCalibration as_rig(const std::vector<Camera>& cameras) {
  RigCalibration rig;
  for (std::size_t i = 0; i < cameras.size(); ++i)
    rig.cameras.emplace(static_cast<int>(i), cameras[i]);
  return rig;
}

// independent two-view oracle: midpoint of the closest points of the two
// backprojected rays (no DLT involved)
Vec3 two_view_midpoint(const Camera& a, const Vec2& pa, const Camera& b, const Vec2& pb) {
  const Ray ra = backproject(a, pa);
  const Ray rb = backproject(b, pb);
  const Vec3 w0 = ra.origin - rb.origin;
  const double dd = ra.direction.dot(rb.direction);
  const double sa = (-w0.dot(ra.direction) + dd * w0.dot(rb.direction)) / (1.0 - dd * dd);
  const double sb = (w0.dot(rb.direction) - dd * w0.dot(ra.direction)) / (1.0 - dd * dd);
  return 0.5 * (ra.at(sa) + rb.at(sb));
}

}  // namespace

TEST_CASE("triangulate: two cameras across the ring, point on both axes") {
  // cameras 450 cm apart facing each other; their tilted optical axes meet on
  // the rig axis, and that midpoint is recovered exactly
  const std::vector<Camera> cams = one_ring(2);
  REQUIRE(cams.size() == 2);
  const double axis_z = 100.0 - 225.0 * std::tan(10.0 * M_PI / 180.0);
  const Vec3 midpoint(0.0, 0.0, axis_z);

  const std::vector<ViewObservation> obs = {{cams[0], project(cams[0], midpoint), 1.0},
                                            {cams[1], project(cams[1], midpoint), 1.0}};
  CHECK((triangulate_dlt(obs) - midpoint).norm() < 1e-9);
}

TEST_CASE("triangulate: fewer than two weighted views is insufficient") {
  const std::vector<Camera> cams = one_ring(2);
  const Vec3 p(10, 5, 80);
  const std::vector<ViewObservation> one = {{cams[0], project(cams[0], p), 1.0}};
  CHECK_THROWS_AS(triangulate_dlt(one), InsufficientViews);
  const std::vector<ViewObservation> zero_weight = {{cams[0], project(cams[0], p), 1.0},
                                                    {cams[1], project(cams[1], p), 0.0}};
  CHECK_THROWS_AS(triangulate_dlt(zero_weight), InsufficientViews);
}

TEST_CASE("triangulate: coincident rays are degenerate") {
  const std::vector<Camera> cams = one_ring(2);
  // a point on the line joining the two camera centers projects onto the same
  // ray in both views
  const Vec3 on_baseline(0.0, 0.0, 100.0);
  const std::vector<ViewObservation> obs = {{cams[0], project(cams[0], on_baseline), 1.0},
                                            {cams[1], project(cams[1], on_baseline), 1.0}};
  CHECK_THROWS_AS(triangulate_dlt(obs), DegenerateGeometry);
}

TEST_CASE("triangulate: 16 views beat 2 views under noise") {
  const std::vector<Camera> cams = one_ring(16);
  const Vec3 truth(30.0, 0.0, 100.0);  // 30 cm off the rig center

  const int seeds = 100;
  double err16 = 0.0, err2 = 0.0;
  for (int seed = 0; seed < seeds; ++seed) {
    Rng rng(900 + seed);
    std::vector<ViewObservation> obs;
    for (const Camera& cam : cams) {
      Vec2 px = project(cam, truth);
      px += Vec2(rng.normal(0.0, 0.5), rng.normal(0.0, 0.5));
      obs.push_back({cam, px, 1.0});
    }
    err16 += (triangulate_dlt(obs) - truth).norm();
    // independent nonlinear two-view oracle on a quarter-ring pair
    err2 += (two_view_midpoint(cams[0], obs[0].pixel, cams[4], obs[4].pixel) - truth).norm();
  }
  err16 /= seeds;
  err2 /= seeds;
  CHECK(err16 <= 1.0);
  CHECK(err16 <= err2);
}

TEST_CASE("triangulate: weight scaling invariance") {
  const std::vector<Camera> cams = one_ring(16);
  Rng rng(31);
  const Vec3 truth(12.0, -20.0, 95.0);
  std::vector<ViewObservation> obs, scaled;
  for (const Camera& cam : cams) {
    const Vec2 px = project(cam, truth) + Vec2(rng.normal(0, 0.5), rng.normal(0, 0.5));
    const double w = rng.uniform(0.2, 1.0);
    obs.push_back({cam, px, w});
    scaled.push_back({cam, px, 17.5 * w});
  }
  CHECK((triangulate_dlt(obs) - triangulate_dlt(scaled)).norm() < 1e-9);
}

namespace {

struct FusionFixture {
  std::vector<Camera> cameras = synth::build_rig(synth::RigSpec{});
  RigCalibration rig = as_rig(cameras);
  SkeletonSequence truth;
  std::vector<std::vector<Skeleton2D>> views;

  explicit FusionFixture(int frames, double noise = 0.0, double dropout = 0.0,
                         std::uint64_t seed = 0) {
    truth = synth::animate_skeleton(synth::random_motion_spec(body25_model(), frames, 30.0, seed));
    views = synth::project_sequence(truth, cameras, {noise, dropout, seed + 1});
  }
};

}  // namespace

TEST_CASE("fuse_skeleton: noiseless closure over all 32 views") {
  const FusionFixture fx(4);
  for (int f = 0; f < 4; ++f) {
    const Skeleton3D fused = fuse_skeleton(fx.views[f], fx.rig);
    for (int j = 0; j < 25; ++j) {
      REQUIRE(fused.joints[j].valid);
      CHECK((fused.joints[j].position - fx.truth.frames[f][j].position).norm() < 1e-6);
      CHECK(fused.joints[j].view_count == 32);
    }
  }
}

TEST_CASE("fuse_skeleton: low-confidence joint is invalidated, others untouched") {
  FusionFixture fx(1);
  for (Skeleton2D& view : fx.views[0]) view.joints[5].confidence = 0.1;  // below the 0.3 gate
  const Skeleton3D fused = fuse_skeleton(fx.views[0], fx.rig);
  CHECK(!fused.joints[5].valid);
  CHECK(fused.joints[5].failure == JointFailure::insufficient_views);
  for (int j = 0; j < 25; ++j)
    if (j != 5) CHECK(fused.joints[j].valid);
}

TEST_CASE("fuse_skeleton: a joint seen by one stereo pair only") {
  const int seeds = 20;
  double pair_err = 0.0, full_err = 0.0;
  for (int seed = 0; seed < seeds; ++seed) {
    FusionFixture fx(1, 0.5, 0.0, 40 + seed);
    // emulate self-occlusion: joint 4 survives only in the first column's pair
    for (Skeleton2D& view : fx.views[0])
      if (view.camera_id != 0 && view.camera_id != 1) view.joints[4].confidence = 0.0;
    const Skeleton3D fused = fuse_skeleton(fx.views[0], fx.rig);
    REQUIRE(fused.joints[4].valid);
    CHECK(fused.joints[4].view_count == 2);
    pair_err += (fused.joints[4].position - fx.truth.frames[0][4].position).norm();
    full_err += (fused.joints[3].position - fx.truth.frames[0][3].position).norm();
  }
  // two-view joints remain usable but are less accurate than fully-seen ones
  CHECK(pair_err / seeds < 5.0);
  CHECK(pair_err / seeds > full_err / seeds);
}

TEST_CASE("fuse_skeleton: frame and camera ids are validated") {
  FusionFixture fx(2);
  std::vector<Skeleton2D> mixed = {fx.views[0][0], fx.views[1][1]};
  CHECK_THROWS_AS(fuse_skeleton(mixed, fx.rig), FrameMismatch);

  std::vector<Skeleton2D> unknown = fx.views[0];
  unknown[3].camera_id = 99;
  CHECK_THROWS_AS(fuse_skeleton(unknown, fx.rig), UnknownCamera);
}

TEST_CASE("fuse_skeleton: rig equivariance under a rigid world motion") {
  const FusionFixture fx(1);
  Rng rng(32);
  const RigidPose motion = test::random_pose(rng, 100.0);

  RigCalibration moved;
  for (const auto& [id, cam] : fx.rig.cameras)
    moved.cameras.emplace(
        id, Camera(cam.intrinsics, compose(cam.pose, invert(motion)), cam.width, cam.height));

  const Skeleton3D base = fuse_skeleton(fx.views[0], fx.rig);
  const Skeleton3D transformed = fuse_skeleton(fx.views[0], moved);
  for (int j = 0; j < 25; ++j) {
    REQUIRE(base.joints[j].valid);
    REQUIRE(transformed.joints[j].valid);
    CHECK((transformed.joints[j].position - motion.apply(base.joints[j].position)).norm() < 1e-9);
  }
}

TEST_CASE("fuse_skeleton: pairwise mode agrees on noiseless data") {
  const FusionFixture fx(1);
  FusionConfig pairwise;
  pairwise.pairwise = true;
  const Skeleton3D a = fuse_skeleton(fx.views[0], fx.rig);
  const Skeleton3D b = fuse_skeleton(fx.views[0], fx.rig, pairwise);
  for (int j = 0; j < 25; ++j) CHECK((a.joints[j].position - b.joints[j].position).norm() < 1e-6);
}

TEST_CASE("fuse_skeleton: one joint DLT system beats pairwise averaging under noise") {
  FusionConfig pairwise;
  pairwise.pairwise = true;
  double all_view = 0.0, averaged = 0.0;
  for (int seed = 0; seed < 30; ++seed) {
    const FusionFixture fx(1, 0.5, 0.0, 600 + seed);
    const Skeleton3D a = fuse_skeleton(fx.views[0], fx.rig);
    const Skeleton3D b = fuse_skeleton(fx.views[0], fx.rig, pairwise);
    for (int j = 0; j < 25; ++j) {
      all_view += (a.joints[j].position - fx.truth.frames[0][j].position).norm();
      averaged += (b.joints[j].position - fx.truth.frames[0][j].position).norm();
    }
  }
  CHECK(all_view <= averaged);
}

TEST_CASE("reprojection_report: noiseless residuals vanish") {
  const FusionFixture fx(1);
  const Skeleton3D fused = fuse_skeleton(fx.views[0], fx.rig);
  const ReprojectionReport report = reprojection_report(fused, fx.views[0], fx.rig);
  REQUIRE(report.rows.size() == 25 * 32);
  for (const ReprojectionRow& row : report.rows) CHECK(row.residual_px < 1e-6);
}

TEST_CASE("reprojection_report: per-joint rms sits at the noise level") {
  const int seeds = 20;
  std::vector<double> mean_rms(25, 0.0);
  for (int seed = 0; seed < seeds; ++seed) {
    const FusionFixture fx(1, 0.5, 0.0, 70 + seed);
    const Skeleton3D fused = fuse_skeleton(fx.views[0], fx.rig);
    const ReprojectionReport report = reprojection_report(fused, fx.views[0], fx.rig);
    for (int j = 0; j < 25; ++j) mean_rms[j] += report.per_joint_rms[j];
  }
  for (int j = 0; j < 25; ++j) {
    const double rms = mean_rms[j] / seeds;
    CHECK(rms >= 0.3);
    CHECK(rms <= 0.8);
  }
}

TEST_CASE("reprojection_report: a corrupted view is flagged as outlier") {
  FusionFixture fx(1, 0.5, 0.0, 33);
  fx.views[0][13].joints[10].position += Vec2(50.0, 0.0);  // camera 13, right knee
  const Skeleton3D fused = fuse_skeleton(fx.views[0], fx.rig);
  const ReprojectionReport report = reprojection_report(fused, fx.views[0], fx.rig);

  bool found = false;
  for (const ReprojectionRow& row : report.rows)
    if (row.joint == 10 && row.camera_id == 13) {
      found = true;
      CHECK(row.outlier);
    }
  CHECK(found);
}
