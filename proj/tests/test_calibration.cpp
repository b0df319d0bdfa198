// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <map>
#include <vector>

#include "helpers.hpp"
#include "mocap/calibration.hpp"
#include "mocap/synth.hpp"

using namespace mocap;
using test::Rng;

namespace {

// analytic plane-to-image homography K [r1 r2 t] for a board-to-camera pose
Mat3 analytic_homography(const Intrinsics& k, const RigidPose& board_in_camera) {
  const Mat3 r = board_in_camera.rotation_matrix();
  Mat3 h;
  h.col(0) = r.col(0);
  h.col(1) = r.col(1);
  h.col(2) = board_in_camera.translation();
  return k.matrix() * h;
}

Mat3 normalized(Mat3 h) {
  h /= h.norm();
  int r = 0, c = 0;
  h.cwiseAbs().maxCoeff(&r, &c);
  return h(r, c) < 0.0 ? Mat3(-h) : h;
}

// board-to-camera pose with bounded tilt, board in front of the camera
RigidPose random_board_in_camera(Rng& rng) {
  const Vec3 axis(rng.normal(), rng.normal(), rng.normal());
  const double angle = rng.uniform(0.15, 0.9);
  return RigidPose(Eigen::Quaterniond(Eigen::AngleAxisd(angle, axis.normalized())),
                   Vec3(rng.uniform(-40, 40), rng.uniform(-40, 40), rng.uniform(150, 350)));
}

std::vector<std::pair<Vec2, Vec2>> project_board(const CheckerboardSpec& spec, const Intrinsics& k,
                                                 const RigidPose& board_in_camera, Rng* noise_rng,
                                                 double sigma) {
  const Camera cam(k, RigidPose(), 100000, 100000);  // bounds irrelevant here
  std::vector<std::pair<Vec2, Vec2>> corr;
  for (int i = 0; i < spec.corner_count(); ++i) {
    const Vec2 bp = board_corner_position(spec, i);
    Vec2 px = project(cam, board_in_camera.apply(Vec3(bp.x(), bp.y(), 0.0)));
    if (noise_rng && sigma > 0.0)
      px += Vec2(noise_rng->normal(0.0, sigma), noise_rng->normal(0.0, sigma));
    corr.emplace_back(bp, px);
  }
  return corr;
}

}  // namespace

TEST_CASE("homography: unit square to itself is the identity") {
  const std::vector<std::pair<Vec2, Vec2>> corr = {
      {{0, 0}, {0, 0}}, {{1, 0}, {1, 0}}, {{1, 1}, {1, 1}}, {{0, 1}, {0, 1}}};
  const Mat3 h = estimate_homography(corr);
  const Mat3 expected = normalized(Mat3::Identity());
  CHECK((h - expected).norm() < 1e-9);
}

TEST_CASE("homography: generate-and-recover at machine precision") {
  Rng rng(21);
  int done = 0;
  while (done < 25) {
    Mat3 truth;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) truth(r, c) = rng.uniform(-1, 1);
    truth(2, 2) += 2.0;  // keep it away from singular
    const Eigen::JacobiSVD<Mat3> svd(truth);
    if (svd.singularValues()(0) / svd.singularValues()(2) > 100.0) continue;

    std::vector<std::pair<Vec2, Vec2>> corr;
    bool usable = true;
    for (int i = 0; i < 20 && usable; ++i) {
      const Vec2 p(rng.uniform(-1, 1), rng.uniform(-1, 1));
      const Vec3 q = truth * Vec3(p.x(), p.y(), 1.0);
      if (std::abs(q.z()) < 0.1) usable = false;
      corr.emplace_back(p, Vec2(q.x() / q.z(), q.y() / q.z()));
    }
    if (!usable) continue;

    const Mat3 h = estimate_homography(corr);
    CHECK((h - normalized(truth)).norm() < 1e-9);
    ++done;
  }
}

TEST_CASE("homography: degenerate configurations are rejected") {
  const std::vector<std::pair<Vec2, Vec2>> three = {
      {{0, 0}, {0, 0}}, {{1, 0}, {1, 0}}, {{2, 0}, {2, 0}}};
  CHECK_THROWS_AS(estimate_homography(three), DegenerateConfiguration);

  std::vector<std::pair<Vec2, Vec2>> collinear;
  for (int i = 0; i < 20; ++i)
    collinear.emplace_back(Vec2(i, 2 * i), Vec2(i + 1, 2 * i - 1));
  CHECK_THROWS_AS(estimate_homography(collinear), DegenerateConfiguration);
}

TEST_CASE("zhang intrinsics: exact on noiseless synthetic boards") {
  const Intrinsics truth(2000, 2000, 1224, 1024);  // paper-sized sensor center
  Rng rng(22);

  for (int count : {3, 10}) {
    std::vector<Mat3> hs;
    for (int i = 0; i < count; ++i)
      hs.push_back(analytic_homography(truth, random_board_in_camera(rng)));
    const Intrinsics est = init_intrinsics_zhang(hs);
    CHECK(std::abs(est.fx - truth.fx) / truth.fx < 1e-6);
    CHECK(std::abs(est.fy - truth.fy) / truth.fy < 1e-6);
    CHECK(std::abs(est.cx - truth.cx) / truth.cx < 1e-6);
    CHECK(std::abs(est.cy - truth.cy) / truth.cy < 1e-6);
  }

  // recovery through estimated homographies from projected corners
  const CheckerboardSpec board(10, 15, 5.0);
  std::vector<Mat3> hs;
  for (int i = 0; i < 10; ++i) {
    const auto corr = project_board(board, truth, random_board_in_camera(rng), nullptr, 0.0);
    hs.push_back(estimate_homography(corr));
  }
  const Intrinsics est = init_intrinsics_zhang(hs);
  CHECK(std::abs(est.fx - truth.fx) / truth.fx < 1e-3);
  CHECK(std::abs(est.fy - truth.fy) / truth.fy < 1e-3);
}

TEST_CASE("zhang intrinsics: fewer than three views is insufficient") {
  const Intrinsics truth(2000, 2000, 1224, 1024);
  Rng rng(23);
  std::vector<Mat3> hs = {analytic_homography(truth, random_board_in_camera(rng)),
                          analytic_homography(truth, random_board_in_camera(rng))};
  CHECK_THROWS_AS(init_intrinsics_zhang(hs), InsufficientViews);
}

TEST_CASE("zhang intrinsics: parallel boards are ill-conditioned") {
  const Intrinsics truth(2000, 2000, 1224, 1024);
  std::vector<Mat3> hs;
  for (int i = 0; i < 5; ++i) {
    const RigidPose pose(Eigen::Quaterniond::Identity(), Vec3(0, 0, 150.0 + 20.0 * i));
    hs.push_back(analytic_homography(truth, pose));
  }
  CHECK_THROWS_AS(init_intrinsics_zhang(hs), IllConditioned);
}

TEST_CASE("zhang intrinsics: 1% accuracy under 0.2 px noise, 100 views, 20 seeds") {
  const Intrinsics truth(2000, 2000, 1224, 1024);
  const CheckerboardSpec board(10, 15, 5.0);

  double fx_err = 0.0, fy_err = 0.0;
  const int seeds = 20;
  for (int seed = 0; seed < seeds; ++seed) {
    Rng pose_rng(1000 + seed);
    Rng noise_rng(2000 + seed);
    std::vector<Mat3> hs;
    for (int i = 0; i < 100; ++i) {
      const auto corr =
          project_board(board, truth, random_board_in_camera(pose_rng), &noise_rng, 0.2);
      hs.push_back(estimate_homography(corr));
    }
    const Intrinsics est = init_intrinsics_zhang(hs);
    fx_err += std::abs(est.fx - truth.fx) / truth.fx;
    fy_err += std::abs(est.fy - truth.fy) / truth.fy;
  }
  CHECK(fx_err / seeds < 0.01);
  CHECK(fy_err / seeds < 0.01);
}

TEST_CASE("board pose: recovered from its own noiseless homography") {
  const Intrinsics k(2000, 2000, 1224, 1024);
  Rng rng(24);
  for (int i = 0; i < 50; ++i) {
    const RigidPose truth = random_board_in_camera(rng);
    const RigidPose est = estimate_board_pose(k, analytic_homography(k, truth));
    CHECK(rotation_distance(est, truth) < 1e-6);
    CHECK((est.translation() - truth.translation()).norm() < 1e-6);
  }
}

TEST_CASE("board pose: frontal board at distance d") {
  const Intrinsics k(2000, 2000, 1224, 1024);
  const double d = 230.0;
  const RigidPose truth(Eigen::Quaterniond::Identity(), Vec3(0, 0, d));
  const RigidPose est = estimate_board_pose(k, analytic_homography(k, truth));
  CHECK(rotation_distance(est, RigidPose()) < 1e-9);
  CHECK((est.translation() - Vec3(0, 0, d)).norm() < 1e-9);
}

TEST_CASE("board pose: 20 degree tilt about x") {
  const Intrinsics k(2000, 2000, 1224, 1024);
  const double angle = 20.0 * M_PI / 180.0;
  const RigidPose truth = RigidPose::from_axis_angle(Vec3::UnitX(), angle, Vec3(5, -10, 260));
  const RigidPose est = estimate_board_pose(k, analytic_homography(k, truth));
  const Eigen::AngleAxisd aa(est.rotation());
  CHECK(std::abs(aa.angle() - angle) < 1e-6);
}

TEST_CASE("register_rig: single camera gets the identity") {
  std::map<std::pair<int, int>, RigidPose> observed;
  Rng rng(25);
  observed[{7, 0}] = random_board_in_camera(rng);
  observed[{7, 1}] = random_board_in_camera(rng);
  const auto world = register_rig(observed, 7);
  CHECK(world.size() == 1);
  CHECK(rotation_distance(world.at(7), RigidPose()) < 1e-15);
}

TEST_CASE("register_rig: 32-camera ring recovered from exact board poses") {
  const std::vector<Camera> rig = synth::build_rig(synth::RigSpec{});
  REQUIRE(rig.size() == 32);
  synth::SweepSchedule schedule;
  schedule.pose_count = 12;
  const std::vector<RigidPose> boards = synth::uniform_board_schedule(schedule);

  std::map<std::pair<int, int>, RigidPose> observed;
  for (std::size_t cam = 0; cam < rig.size(); ++cam)
    for (std::size_t f = 0; f < boards.size(); ++f)
      observed[{static_cast<int>(cam), static_cast<int>(f)}] = compose(rig[cam].pose, boards[f]);

  const auto world = register_rig(observed, 0);
  for (std::size_t cam = 0; cam < rig.size(); ++cam) {
    // estimated poses live in camera 0's frame; move ground truth there
    const RigidPose expected = compose(rig[cam].pose, invert(rig[0].pose));
    CHECK(rotation_distance(world.at(static_cast<int>(cam)), expected) < 1e-8);
    CHECK((world.at(static_cast<int>(cam)).translation() - expected.translation()).norm() < 1e-6);
  }
}

TEST_CASE("register_rig: disjoint clusters are reported") {
  Rng rng(26);
  std::map<std::pair<int, int>, RigidPose> observed;
  // cameras 0,1 share frames 0-2; cameras 5,6 share frames 10-12
  for (int f = 0; f < 3; ++f) {
    observed[{0, f}] = random_board_in_camera(rng);
    observed[{1, f}] = random_board_in_camera(rng);
  }
  for (int f = 10; f < 13; ++f) {
    observed[{5, f}] = random_board_in_camera(rng);
    observed[{6, f}] = random_board_in_camera(rng);
  }
  CHECK_THROWS_AS(register_rig(observed, 0), DisconnectedRig);
}

namespace {

struct SmallProblem {
  RigCalibration truth;
  std::vector<BoardObservation> observations;
  std::map<int, RigidPose> board_poses;
  CheckerboardSpec board{10, 15, 5.0};
};

SmallProblem make_problem(int columns, int poses, double noise_sigma, std::uint64_t seed) {
  SmallProblem p;
  synth::RigSpec spec;
  spec.column_count = columns;
  const std::vector<Camera> rig = synth::build_rig(spec);
  for (std::size_t i = 0; i < rig.size(); ++i) {
    p.truth.cameras.emplace(static_cast<int>(i), rig[i]);
    p.truth.per_camera_rms[static_cast<int>(i)] = 0.0;
  }
  synth::SweepSchedule schedule;
  schedule.pose_count = poses;
  const auto sweep = synth::sweep_checkerboard(
      p.board, rig, synth::uniform_board_schedule(schedule), {noise_sigma, seed});
  p.observations = sweep.observations;
  p.board_poses = sweep.board_poses;
  return p;
}

}  // namespace

TEST_CASE("bundle_adjust: ground-truth start is a fixed point") {
  const SmallProblem p = make_problem(16, 40, 0.0, 0);
  BAConfig config;
  config.threads = 2;
  const BAResult result = bundle_adjust(p.truth, p.observations, p.board, config);
  CHECK(result.accepted_costs.size() <= 3);  // initial value plus at most 2 accepted steps
  CHECK(result.calibration.rms_reprojection_px <= 1e-9);
}

TEST_CASE("bundle_adjust: accepted cost log is monotone under noise and jitter") {
  Rng rng(27);
  SmallProblem p = make_problem(4, 12, 0.3, 5);

  RigCalibration jittered = p.truth;
  for (auto& [id, cam] : jittered.cameras) {
    const Vec3 axis(rng.normal(), rng.normal(), rng.normal());
    const RigidPose tweak = RigidPose::from_axis_angle(
        axis.normalized(), rng.uniform(-0.01, 0.01),
        Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)));
    cam = Camera(Intrinsics(cam.intrinsics.fx * rng.uniform(0.99, 1.01),
                            cam.intrinsics.fy * rng.uniform(0.99, 1.01), cam.intrinsics.cx,
                            cam.intrinsics.cy),
                 compose(tweak, cam.pose), cam.width, cam.height);
  }

  const BAResult result = bundle_adjust(jittered, p.observations, p.board);
  REQUIRE(result.accepted_costs.size() >= 2);
  for (std::size_t i = 1; i < result.accepted_costs.size(); ++i)
    CHECK(result.accepted_costs[i] <= result.accepted_costs[i - 1]);
  CHECK(result.calibration.rms_reprojection_px <= 0.5);
}

TEST_CASE("bundle_adjust: flipped camera never increases the logged objective") {
  SmallProblem p = make_problem(4, 10, 0.0, 3);
  RigCalibration flipped = p.truth;
  Camera& victim = flipped.cameras.at(2);
  victim = Camera(victim.intrinsics,
                  compose(RigidPose::from_axis_angle(Vec3::UnitZ(), M_PI), victim.pose),
                  victim.width, victim.height);

  std::vector<double> log;
  try {
    const BAResult result = bundle_adjust(flipped, p.observations, p.board);
    log = result.accepted_costs;
  } catch (const NonConvergence& e) {
    log = e.accepted_costs;
  }
  REQUIRE(!log.empty());
  for (std::size_t i = 1; i < log.size(); ++i) CHECK(log[i] <= log[i - 1]);
}

TEST_CASE("reprojection jacobian matches central finite differences") {
  Rng rng(28);
  int done = 0;
  while (done < 20) {
    const Intrinsics k(rng.uniform(500, 2500), rng.uniform(500, 2500), rng.uniform(400, 1300),
                       rng.uniform(400, 1300), rng.uniform(-5, 5));
    const RigidPose cam_pose = test::random_pose(rng, 50.0);
    const RigidPose board_in_cam = random_board_in_camera(rng);
    const RigidPose board_pose = compose(invert(cam_pose), board_in_cam);
    const Vec2 board_point(rng.uniform(-30, 30), rng.uniform(-30, 30));
    const Vec2 observed(rng.uniform(0, 2448), rng.uniform(0, 2048));

    const ReprojectionJacobian jac =
        reprojection_jacobian(k, cam_pose, board_pose, board_point, observed);

    const double h = 1e-6;
    auto residual_at = [&](const Intrinsics& ki, const RigidPose& cp, const RigidPose& bp) {
      return reprojection_jacobian(ki, cp, bp, board_point, observed).residual;
    };
    auto check_column = [&](const Vec2& plus, const Vec2& minus, const Eigen::Vector2d& analytic) {
      const Eigen::Vector2d fd = (plus - minus) / (2.0 * h);
      for (int r = 0; r < 2; ++r)
        CHECK(std::abs(fd(r) - analytic(r)) / std::max(1.0, std::abs(analytic(r))) < 1e-4);
    };

    // intrinsics
    for (int i = 0; i < 5; ++i) {
      double f[5] = {k.fx, k.fy, k.cx, k.cy, k.skew};
      f[i] += h;
      const Intrinsics kp(f[0], f[1], f[2], f[3], f[4]);
      f[i] -= 2 * h;
      const Intrinsics km(f[0], f[1], f[2], f[3], f[4]);
      check_column(residual_at(kp, cam_pose, board_pose), residual_at(km, cam_pose, board_pose),
                   jac.d_intrinsics.col(i));
    }
    // camera and board pose (left increment: rotation first, then translation)
    for (int i = 0; i < 6; ++i) {
      Eigen::Matrix<double, 6, 1> d = Eigen::Matrix<double, 6, 1>::Zero();
      d(i) = h;
      auto perturb = [&](const RigidPose& pose, double sign) {
        const Vec3 w = sign * d.head<3>();
        const Vec3 dt = sign * d.tail<3>();
        const Eigen::Quaterniond dq =
            w.norm() < 1e-18 ? Eigen::Quaterniond::Identity()
                             : Eigen::Quaterniond(Eigen::AngleAxisd(w.norm(), w.normalized()));
        return RigidPose(dq * pose.rotation(), pose.translation() + dt);
      };
      check_column(residual_at(k, perturb(cam_pose, 1), board_pose),
                   residual_at(k, perturb(cam_pose, -1), board_pose), jac.d_camera.col(i));
      check_column(residual_at(k, cam_pose, perturb(board_pose, 1)),
                   residual_at(k, cam_pose, perturb(board_pose, -1)), jac.d_board.col(i));
    }
    ++done;
  }
}

TEST_CASE("calibrate_rig: gauge invariance") {
  // the same physical scene expressed in two world frames must produce
  // matching calibrations once both are anchored at the reference camera
  synth::RigSpec spec;
  spec.column_count = 8;
  const std::vector<Camera> rig = synth::build_rig(spec);
  synth::SweepSchedule schedule;
  schedule.pose_count = 25;
  const std::vector<RigidPose> boards = synth::uniform_board_schedule(schedule);
  const CheckerboardSpec board(10, 15, 5.0);

  Rng rng(29);
  const RigidPose gauge = test::random_pose(rng, 300.0);

  std::vector<Camera> rig_b;
  for (const Camera& cam : rig)
    rig_b.emplace_back(cam.intrinsics, compose(cam.pose, invert(gauge)), cam.width, cam.height);
  std::vector<RigidPose> boards_b;
  for (const RigidPose& b : boards) boards_b.push_back(compose(gauge, b));

  const auto sweep_a = synth::sweep_checkerboard(board, rig, boards, {});
  const auto sweep_b = synth::sweep_checkerboard(board, rig_b, boards_b, {});

  const BAResult a = calibrate_rig(sweep_a.observations, board);
  const BAResult b = calibrate_rig(sweep_b.observations, board);

  CHECK(std::abs(a.calibration.rms_reprojection_px - b.calibration.rms_reprojection_px) < 1e-9);
  for (const auto& [id, cam_a] : a.calibration.cameras) {
    const Camera& cam_b = b.calibration.cameras.at(id);
    CHECK(rotation_distance(cam_a.pose, cam_b.pose) < 1e-6);
    CHECK((cam_a.pose.translation() - cam_b.pose.translation()).norm() < 1e-6);
    CHECK(std::abs(cam_a.intrinsics.fx - cam_b.intrinsics.fx) < 1e-3);
  }
}

TEST_CASE("calibrate_rig: nonzero skew is recovered when refinement is enabled") {
  synth::RigSpec spec;
  spec.column_count = 6;
  spec.intrinsics = Intrinsics(2000, 2000, 1224, 1024, 1.5);
  const std::vector<Camera> rig = synth::build_rig(spec);
  synth::SweepSchedule schedule;
  schedule.pose_count = 30;
  const CheckerboardSpec board(10, 15, 5.0);
  const auto sweep =
      synth::sweep_checkerboard(board, rig, synth::uniform_board_schedule(schedule), {});

  CalibrationConfig config;
  config.zhang.zero_skew = false;
  config.ba.refine_skew = true;
  const BAResult result = calibrate_rig(sweep.observations, board, config);
  for (const auto& [id, cam] : result.calibration.cameras) {
    CHECK(std::abs(cam.intrinsics.skew - 1.5) < 1e-3);
    CHECK(std::abs(cam.intrinsics.fx - 2000.0) < 1e-2);
  }

  // the default configuration pins skew at zero
  CalibrationConfig pinned;
  const BAResult zero = calibrate_rig(sweep.observations, board, pinned);
  for (const auto& [id, cam] : zero.calibration.cameras) CHECK(cam.intrinsics.skew == 0.0);
}

TEST_CASE("calibrate_rig: rejects duplicate observations") {
  const SmallProblem p = make_problem(2, 6, 0.0, 1);
  std::vector<BoardObservation> dup = p.observations;
  dup.push_back(dup.front());
  CHECK_THROWS_AS(calibrate_rig(dup, p.board), InvalidArgument);
}
