// SPDX-License-Identifier: Apache-2.0

#include "mocap/calibration.hpp"

#include <fmt/format.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "mocap/parallel.hpp"

namespace mocap {

namespace {

Mat3 skew3(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return m;
}

Eigen::Quaterniond quat_exp(const Vec3& w) {
  const double angle = w.norm();
  if (angle < 1e-12)
    return Eigen::Quaterniond(1.0, 0.5 * w.x(), 0.5 * w.y(), 0.5 * w.z()).normalized();
  return Eigen::Quaterniond(Eigen::AngleAxisd(angle, w / angle));
}

// Sign-aligned arithmetic quaternion mean; adequate for the small spreads
// produced by co-observation averaging.
Eigen::Quaterniond quaternion_mean(const std::vector<Eigen::Quaterniond>& qs) {
  Eigen::Vector4d acc = Eigen::Vector4d::Zero();
  for (const auto& q : qs) {
    Eigen::Vector4d c = q.coeffs();
    if (c.dot(qs.front().coeffs()) < 0.0) c = -c;
    acc += c;
  }
  Eigen::Quaterniond mean;
  mean.coeffs() = acc;
  return mean.normalized();
}

RigidPose average_poses(const std::vector<RigidPose>& poses) {
  std::vector<Eigen::Quaterniond> qs;
  qs.reserve(poses.size());
  Vec3 t = Vec3::Zero();
  for (const RigidPose& p : poses) {
    qs.push_back(p.rotation());
    t += p.translation();
  }
  return RigidPose(quaternion_mean(qs), t / static_cast<double>(poses.size()));
}

struct Normalization {
  Mat3 transform = Mat3::Identity();
  std::vector<Vec2> points;
};

// Hartley normalization: centroid to the origin, mean distance sqrt(2).
Normalization normalize_points(std::span<const Vec2> pts) {
  Vec2 centroid = Vec2::Zero();
  for (const Vec2& p : pts) centroid += p;
  centroid /= static_cast<double>(pts.size());

  double mean_dist = 0.0;
  for (const Vec2& p : pts) mean_dist += (p - centroid).norm();
  mean_dist /= static_cast<double>(pts.size());
  const double s = mean_dist < 1e-12 ? 1.0 : std::sqrt(2.0) / mean_dist;

  Normalization out;
  out.transform << s, 0.0, -s * centroid.x(), 0.0, s, -s * centroid.y(), 0.0, 0.0, 1.0;
  out.points.reserve(pts.size());
  for (const Vec2& p : pts) out.points.emplace_back(s * (p - centroid));
  return out;
}

}  // namespace

CheckerboardSpec::CheckerboardSpec(int rows, int cols, double square_size)
    : rows(rows), cols(cols), square_size(square_size) {
  if (rows < 3 || cols < 3)
    throw InvalidArgument(fmt::format("checkerboard: needs >= 3x3 inner corners, got {}x{}", rows, cols));
  if (!(square_size > 0.0) || !std::isfinite(square_size))
    throw InvalidArgument("checkerboard: square size must be positive");
}

Vec2 board_corner_position(const CheckerboardSpec& spec, int index) {
  if (index < 0 || index >= spec.corner_count())
    throw InvalidArgument(fmt::format("board index {} out of range [0, {})", index, spec.corner_count()));
  const int row = index / spec.cols;
  const int col = index % spec.cols;
  return {(col - 0.5 * (spec.cols - 1)) * spec.square_size,
          (row - 0.5 * (spec.rows - 1)) * spec.square_size};
}

Mat3 estimate_homography(std::span<const std::pair<Vec2, Vec2>> correspondences) {
  const std::size_t n = correspondences.size();
  if (n < 4)
    throw DegenerateConfiguration(
        fmt::format("homography needs >= 4 correspondences, got {}", n));

  std::vector<Vec2> board(n), image(n);
  for (std::size_t i = 0; i < n; ++i) {
    board[i] = correspondences[i].first;
    image[i] = correspondences[i].second;
  }
  const Normalization bn = normalize_points(board);
  const Normalization in = normalize_points(image);

  Eigen::MatrixXd a(2 * n, 9);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = bn.points[i].x(), y = bn.points[i].y();
    const double u = in.points[i].x(), v = in.points[i].y();
    a.row(2 * i) << -x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u;
    a.row(2 * i + 1) << 0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v;
  }

  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  if (sv(7) <= 1e-10 * sv(0))
    throw DegenerateConfiguration("homography design matrix has rank < 8");

  const Eigen::VectorXd h = svd.matrixV().col(8);
  Mat3 hn;
  hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);

  Mat3 homography = in.transform.inverse() * hn * bn.transform;
  homography /= homography.norm();

  // canonical sign: largest-magnitude entry positive
  int r = 0, c = 0;
  homography.cwiseAbs().maxCoeff(&r, &c);
  if (homography(r, c) < 0.0) homography = -homography;
  return homography;
}

namespace {

Eigen::Matrix<double, 6, 1> conic_row(const Mat3& h, int i, int j) {
  Eigen::Matrix<double, 6, 1> v;
  v << h(0, i) * h(0, j), h(0, i) * h(1, j) + h(1, i) * h(0, j), h(1, i) * h(1, j),
      h(2, i) * h(0, j) + h(0, i) * h(2, j), h(2, i) * h(1, j) + h(1, i) * h(2, j),
      h(2, i) * h(2, j);
  return v;
}

}  // namespace

Intrinsics init_intrinsics_zhang(std::span<const Mat3> homographies, const ZhangConfig& config) {
  if (homographies.size() < 3)
    throw InsufficientViews(
        fmt::format("closed-form intrinsics need >= 3 homographies, got {}", homographies.size()));

  Eigen::MatrixXd v(2 * homographies.size(), 6);
  for (std::size_t k = 0; k < homographies.size(); ++k) {
    v.row(2 * k) = conic_row(homographies[k], 0, 1).transpose();
    v.row(2 * k + 1) = (conic_row(homographies[k], 0, 0) - conic_row(homographies[k], 1, 1)).transpose();
  }

  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(v, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  if (sv(4) <= 0.0 || sv(0) / sv(4) > 1e12)
    throw IllConditioned("absolute-conic system is ill-conditioned; board orientations too similar");

  const Eigen::VectorXd b = svd.matrixV().col(5);
  const double b11 = b(0), b12 = b(1), b22 = b(2), b13 = b(3), b23 = b(4), b33 = b(5);

  const double denom = b11 * b22 - b12 * b12;
  const double v0 = (b12 * b13 - b11 * b23) / denom;
  const double lambda = b33 - (b13 * b13 + v0 * (b12 * b13 - b11 * b23)) / b11;
  const double fx2 = lambda / b11;
  const double fy2 = lambda * b11 / denom;
  if (!(fx2 > 0.0) || !(fy2 > 0.0))
    throw IllConditioned("recovered image of the absolute conic is not positive definite");

  const double fx = std::sqrt(fx2);
  const double fy = std::sqrt(fy2);
  double skew = -b12 * fx2 * fy / lambda;
  const double u0 = skew * v0 / fy - b13 * fx2 / lambda;
  if (config.zero_skew) skew = 0.0;

  if (!(std::isfinite(fx) && std::isfinite(fy) && std::isfinite(u0) && std::isfinite(v0) &&
        std::isfinite(skew)))
    throw IllConditioned("closed-form intrinsics are non-finite");
  return Intrinsics(fx, fy, u0, v0, skew);
}

RigidPose estimate_board_pose(const Intrinsics& intrinsics, const Mat3& homography) {
  const Mat3 kinv = intrinsics.matrix().inverse();
  const Vec3 r1p = kinv * homography.col(0);
  const Vec3 r2p = kinv * homography.col(1);
  const double n1 = r1p.norm();
  const double n2 = r2p.norm();
  if (n1 < 1e-12 || n2 < 1e-12)
    throw IllConditioned("homography decomposition: vanishing rotation columns");

  double scale = 2.0 / (n1 + n2);
  Vec3 t = scale * (kinv * homography.col(2));
  if (t.z() < 0.0) {  // board must sit in front of the camera
    scale = -scale;
    t = -t;
  }

  const Vec3 r1 = scale * r1p;
  const Vec3 r2 = scale * r2p;
  Mat3 r;
  r.col(0) = r1;
  r.col(1) = r2;
  r.col(2) = r1.cross(r2);

  Eigen::JacobiSVD<Mat3> svd(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 u = svd.matrixU();
  if ((u * svd.matrixV().transpose()).determinant() < 0.0) u.col(2) *= -1.0;
  return RigidPose::from_matrix(u * svd.matrixV().transpose(), t);
}

std::map<int, RigidPose> register_rig(
    const std::map<std::pair<int, int>, RigidPose>& board_poses_in_cameras, int reference_camera) {
  std::set<int> camera_ids;
  std::map<int, std::vector<std::pair<int, RigidPose>>> by_frame;
  for (const auto& [key, pose] : board_poses_in_cameras) {
    camera_ids.insert(key.first);
    by_frame[key.second].emplace_back(key.first, pose);
  }
  if (camera_ids.empty()) throw InvalidArgument("register_rig: no observations");
  if (!camera_ids.count(reference_camera))
    throw InvalidArgument(fmt::format("register_rig: reference camera {} has no observations",
                                      reference_camera));

  // relative poses T(i<-j) mapping camera-j coordinates into camera i,
  // one estimate per co-observed frame, then averaged per edge
  std::map<std::pair<int, int>, std::vector<RigidPose>> edge_samples;
  for (const auto& [frame, entries] : by_frame) {
    for (std::size_t a = 0; a < entries.size(); ++a)
      for (std::size_t b = a + 1; b < entries.size(); ++b) {
        const auto& [cam_i, p_i] = entries[a];
        const auto& [cam_j, p_j] = entries[b];
        edge_samples[{cam_i, cam_j}].push_back(compose(p_i, invert(p_j)));
      }
  }

  std::map<std::pair<int, int>, RigidPose> edges;
  std::map<int, std::vector<std::pair<int, const RigidPose*>>> adjacency;  // cam -> (other, T)
  for (const auto& [key, samples] : edge_samples) edges[key] = average_poses(samples);
  for (const auto& [key, pose] : edges) {
    adjacency[key.first].emplace_back(key.second, &pose);
    adjacency[key.second].emplace_back(key.first, &pose);
  }

  // breadth-first initialization from the reference camera
  std::map<int, RigidPose> world;  // world frame = reference camera frame
  world[reference_camera] = RigidPose();
  std::vector<int> queue{reference_camera};
  for (std::size_t head = 0; head < queue.size(); ++head) {
    const int j = queue[head];
    for (const auto& [i, t] : adjacency[j]) {
      if (world.count(i)) continue;
      // edge is stored as T(first<-second)
      world[i] = (edges.count({i, j})) ? compose(*t, world[j]) : compose(invert(*t), world[j]);
      queue.push_back(i);
    }
  }

  if (world.size() != camera_ids.size()) {
    std::string missing;
    for (int id : camera_ids)
      if (!world.count(id)) missing += fmt::format(" {}", id);
    throw DisconnectedRig(
        fmt::format("cameras not reachable from reference {}:{}", reference_camera, missing));
  }

  // Gauss-Seidel relaxation so every co-observation path contributes, not
  // just the spanning tree
  for (int sweep = 0; sweep < 64; ++sweep) {
    double max_change = 0.0;
    for (int i : camera_ids) {
      if (i == reference_camera) continue;
      std::vector<RigidPose> candidates;
      for (const auto& [j, t] : adjacency[i]) {
        candidates.push_back(edges.count({i, j}) ? compose(*t, world[j])
                                                 : compose(invert(*t), world[j]));
      }
      const RigidPose updated = average_poses(candidates);
      max_change = std::max(max_change, (updated.translation() - world[i].translation()).norm());
      max_change = std::max(max_change, rotation_distance(updated, world[i]));
      world[i] = updated;
    }
    if (max_change < 1e-14) break;
  }
  return world;
}

// --- bundle adjustment ------------------------------------------------------

namespace {

struct CornerJacobian {
  Vec2 residual;
  Eigen::Matrix<double, 2, 5> d_intr;
  Eigen::Matrix<double, 2, 6> d_cam;
  Eigen::Matrix<double, 2, 6> d_board;
  bool in_front = true;
};

struct PlainIntrinsics {
  double fx, fy, cx, cy, skew;
};

CornerJacobian corner_jacobian(const PlainIntrinsics& k, const Mat3& rc, const Vec3& tc,
                               const Mat3& rb, const Vec3& tb, const Vec2& board_point,
                               const Vec2& observed) {
  CornerJacobian out;
  const Vec3 xb(board_point.x(), board_point.y(), 0.0);
  const Vec3 xw = rb * xb + tb;
  const Vec3 xc = rc * xw + tc;
  if (xc.z() <= 1e-9) {
    out.in_front = false;
    return out;
  }

  const double iz = 1.0 / xc.z();
  const double xn = xc.x() * iz;
  const double yn = xc.y() * iz;
  out.residual = Vec2(k.fx * xn + k.skew * yn + k.cx - observed.x(),
                      k.fy * yn + k.cy - observed.y());

  Eigen::Matrix<double, 2, 3> dpi;
  dpi << k.fx * iz, k.skew * iz, -(k.fx * xc.x() + k.skew * xc.y()) * iz * iz,
      0.0, k.fy * iz, -k.fy * xc.y() * iz * iz;

  out.d_intr << xn, 0.0, 1.0, 0.0, yn,
                0.0, yn, 0.0, 1.0, 0.0;
  out.d_cam.leftCols<3>() = dpi * (-skew3(xc - tc));
  out.d_cam.rightCols<3>() = dpi;
  out.d_board.leftCols<3>() = dpi * rc * (-skew3(xw - tb));
  out.d_board.rightCols<3>() = dpi * rc;
  return out;
}

struct PreparedObs {
  int cam_idx;
  int frame_idx;
  std::vector<std::pair<Vec2, Vec2>> corners;  // (board point cm, observed px)
};

struct BAState {
  std::vector<PlainIntrinsics> intr;
  std::vector<RigidPose> cam_pose;
  std::vector<RigidPose> board_pose;
};

class BAProblem {
 public:
  BAProblem(const RigCalibration& initial, std::span<const BoardObservation> boards,
            const CheckerboardSpec& spec, const BAConfig& config)
      : config_(config) {
    for (const auto& [id, cam] : initial.cameras) camera_ids_.push_back(id);
    for (std::size_t i = 0; i < camera_ids_.size(); ++i) camera_index_[camera_ids_[i]] = i;

    reference_id_ = config.reference_camera >= 0 ? config.reference_camera : camera_ids_.front();
    if (!camera_index_.count(reference_id_))
      throw InvalidArgument(fmt::format("reference camera {} not in calibration", reference_id_));

    state_.intr.reserve(camera_ids_.size());
    state_.cam_pose.reserve(camera_ids_.size());
    for (int id : camera_ids_) {
      const Camera& cam = initial.cameras.at(id);
      state_.intr.push_back({cam.intrinsics.fx, cam.intrinsics.fy, cam.intrinsics.cx,
                             cam.intrinsics.cy, cam.intrinsics.skew});
      state_.cam_pose.push_back(cam.pose);
      image_sizes_.emplace_back(cam.width, cam.height);
    }

    // board world poses: decompose each usable observation's homography and
    // average per frame; frames with no usable init are excluded
    std::map<int, std::vector<RigidPose>> frame_candidates;
    std::set<int> cameras_seen;
    for (const BoardObservation& obs : boards) {
      if (!camera_index_.count(obs.camera_id))
        throw UnknownCamera(fmt::format("observation references camera {}", obs.camera_id));
      cameras_seen.insert(obs.camera_id);
      if (obs.corners.size() < 4) continue;
      std::vector<std::pair<Vec2, Vec2>> corr;
      corr.reserve(obs.corners.size());
      for (const auto& [idx, px] : obs.corners)
        corr.emplace_back(board_corner_position(spec, idx), px);
      try {
        const Mat3 h = estimate_homography(corr);
        const Camera& cam = initial.cameras.at(obs.camera_id);
        const RigidPose board_in_cam = estimate_board_pose(cam.intrinsics, h);
        frame_candidates[obs.frame_id].push_back(compose(invert(cam.pose), board_in_cam));
      } catch (const Error&) {
        // degenerate single observation; the frame can still be initialized
        // from other cameras
      }
    }
    for (int id : camera_ids_)
      if (!cameras_seen.count(id))
        throw InvalidArgument(fmt::format("camera {} has no observations", id));

    for (const auto& [frame, candidates] : frame_candidates) {
      frame_ids_.push_back(frame);
      frame_index_[frame] = frame_ids_.size() - 1;
      state_.board_pose.push_back(average_poses(candidates));
    }
    if (frame_ids_.empty()) throw InvalidArgument("no board pose could be initialized");

    for (const BoardObservation& obs : boards) {
      if (!frame_index_.count(obs.frame_id) || obs.corners.empty()) continue;
      PreparedObs p;
      p.cam_idx = static_cast<int>(camera_index_.at(obs.camera_id));
      p.frame_idx = static_cast<int>(frame_index_.at(obs.frame_id));
      p.corners.reserve(obs.corners.size());
      for (const auto& [idx, px] : obs.corners)
        p.corners.emplace_back(board_corner_position(spec, idx), px);
      corner_count_ += p.corners.size();
      observations_.push_back(std::move(p));
    }

    n_intr_ = config.refine_skew ? 5 : 4;
    block_ = n_intr_ + 6;
    n_params_ = camera_ids_.size() * block_ + frame_ids_.size() * 6;
  }

  std::size_t parameter_count() const { return n_params_; }
  std::size_t corner_count() const { return corner_count_; }
  const BAState& state() const { return state_; }
  BAState& state() { return state_; }
  int reference_id() const { return reference_id_; }

  std::size_t cam_base(int ci) const { return ci * block_; }
  std::size_t board_base(int fi) const { return camera_ids_.size() * block_ + fi * 6; }

  // cost of a state; +inf when any corner is behind a camera or non-finite
  double evaluate_cost(const BAState& s) const {
    std::vector<double> costs(observations_.size());
    parallel_for(observations_.size(), config_.threads, [&](std::size_t oi) {
      const PreparedObs& obs = observations_[oi];
      const Mat3 rc = s.cam_pose[obs.cam_idx].rotation_matrix();
      const Vec3& tc = s.cam_pose[obs.cam_idx].translation();
      const Mat3 rb = s.board_pose[obs.frame_idx].rotation_matrix();
      const Vec3& tb = s.board_pose[obs.frame_idx].translation();
      const PlainIntrinsics& k = s.intr[obs.cam_idx];
      double c = 0.0;
      for (const auto& [bp, px] : obs.corners) {
        const Vec3 xc = rc * (rb * Vec3(bp.x(), bp.y(), 0.0) + tb) + tc;
        if (xc.z() <= 1e-9) {
          c = std::numeric_limits<double>::infinity();
          break;
        }
        const double iz = 1.0 / xc.z();
        const double xn = xc.x() * iz;
        const double yn = xc.y() * iz;
        const double u = k.fx * xn + k.skew * yn + k.cx - px.x();
        const double v = k.fy * yn + k.cy - px.y();
        c += u * u + v * v;
      }
      costs[oi] = c;
    });
    double total = 0.0;
    for (double c : costs) total += c;  // fixed order, thread-count independent
    return std::isfinite(total) ? total : std::numeric_limits<double>::infinity();
  }

  // accumulates the normal equations H = J^T J, g = J^T r
  double evaluate_full(const BAState& s, Eigen::MatrixXd& h, Eigen::VectorXd& g) const {
    const int m = block_ + 6;
    struct Slot {
      Eigen::MatrixXd h_local;
      Eigen::VectorXd g_local;
      double cost = 0.0;
    };
    std::vector<Slot> slots(observations_.size());

    parallel_for(observations_.size(), config_.threads, [&](std::size_t oi) {
      const PreparedObs& obs = observations_[oi];
      Slot& slot = slots[oi];
      slot.h_local = Eigen::MatrixXd::Zero(m, m);
      slot.g_local = Eigen::VectorXd::Zero(m);

      const Mat3 rc = s.cam_pose[obs.cam_idx].rotation_matrix();
      const Vec3& tc = s.cam_pose[obs.cam_idx].translation();
      const Mat3 rb = s.board_pose[obs.frame_idx].rotation_matrix();
      const Vec3& tb = s.board_pose[obs.frame_idx].translation();
      const PlainIntrinsics& k = s.intr[obs.cam_idx];

      Eigen::Matrix<double, 2, Eigen::Dynamic> j(2, m);
      for (const auto& [bp, px] : obs.corners) {
        const CornerJacobian cj = corner_jacobian(k, rc, tc, rb, tb, bp, px);
        if (!cj.in_front) {
          slot.cost = std::numeric_limits<double>::infinity();
          return;
        }
        j.leftCols(n_intr_) = cj.d_intr.leftCols(n_intr_);
        j.middleCols(n_intr_, 6) = cj.d_cam;
        j.rightCols(6) = cj.d_board;
        slot.h_local.noalias() += j.transpose() * j;
        slot.g_local.noalias() += j.transpose() * cj.residual;
        slot.cost += cj.residual.squaredNorm();
      }
    });

    h.setZero(n_params_, n_params_);
    g.setZero(n_params_);
    double cost = 0.0;
    for (std::size_t oi = 0; oi < observations_.size(); ++oi) {
      const PreparedObs& obs = observations_[oi];
      const Slot& slot = slots[oi];
      cost += slot.cost;
      if (!std::isfinite(cost)) return std::numeric_limits<double>::infinity();

      std::vector<std::size_t> idx(m);
      for (int a = 0; a < block_; ++a) idx[a] = cam_base(obs.cam_idx) + a;
      for (int a = 0; a < 6; ++a) idx[block_ + a] = board_base(obs.frame_idx) + a;
      for (int a = 0; a < m; ++a) {
        g(idx[a]) += slot.g_local(a);
        for (int b = 0; b < m; ++b) h(idx[a], idx[b]) += slot.h_local(a, b);
      }
    }

    // gauge: freeze the reference camera's pose
    const std::size_t frozen = cam_base(camera_index_.at(reference_id_)) + n_intr_;
    for (std::size_t a = frozen; a < frozen + 6; ++a) {
      h.row(a).setZero();
      h.col(a).setZero();
      h(a, a) = 1.0;
      g(a) = 0.0;
    }
    return cost;
  }

  BAState apply_step(const BAState& s, const Eigen::VectorXd& delta) const {
    BAState out = s;
    for (std::size_t ci = 0; ci < camera_ids_.size(); ++ci) {
      const std::size_t base = cam_base(ci);
      out.intr[ci].fx += delta(base + 0);
      out.intr[ci].fy += delta(base + 1);
      out.intr[ci].cx += delta(base + 2);
      out.intr[ci].cy += delta(base + 3);
      if (n_intr_ == 5) out.intr[ci].skew += delta(base + 4);
      const Vec3 w = delta.segment<3>(base + n_intr_);
      const Vec3 dt = delta.segment<3>(base + n_intr_ + 3);
      out.cam_pose[ci] = RigidPose(quat_exp(w) * s.cam_pose[ci].rotation(),
                                   s.cam_pose[ci].translation() + dt);
    }
    for (std::size_t fi = 0; fi < frame_ids_.size(); ++fi) {
      const std::size_t base = board_base(fi);
      const Vec3 w = delta.segment<3>(base);
      const Vec3 dt = delta.segment<3>(base + 3);
      out.board_pose[fi] = RigidPose(quat_exp(w) * s.board_pose[fi].rotation(),
                                     s.board_pose[fi].translation() + dt);
    }
    return out;
  }

  BAResult finalize(const BAState& s, std::vector<double> accepted_costs, int iterations,
                    double grad_norm, double lambda) const {
    BAResult result;
    result.accepted_costs = std::move(accepted_costs);
    result.iterations = iterations;
    result.final_gradient_norm = grad_norm;
    result.final_lambda = lambda;

    for (std::size_t ci = 0; ci < camera_ids_.size(); ++ci) {
      const PlainIntrinsics& k = s.intr[ci];
      if (!(k.fx > 0.0 && k.fy > 0.0))
        throw NumericalFailure(fmt::format("camera {} refined to non-positive focal length",
                                           camera_ids_[ci]));
      result.calibration.cameras.emplace(
          camera_ids_[ci], Camera(Intrinsics(k.fx, k.fy, k.cx, k.cy, k.skew), s.cam_pose[ci],
                                  image_sizes_[ci].first, image_sizes_[ci].second));
    }
    for (std::size_t fi = 0; fi < frame_ids_.size(); ++fi)
      result.board_world_poses[frame_ids_[fi]] = s.board_pose[fi];

    // per-camera and total rms over the retained correspondences
    std::map<int, double> sq_sum;
    std::map<int, std::size_t> count;
    double total_sq = 0.0;
    for (const PreparedObs& obs : observations_) {
      const Mat3 rc = s.cam_pose[obs.cam_idx].rotation_matrix();
      const Vec3& tc = s.cam_pose[obs.cam_idx].translation();
      const Mat3 rb = s.board_pose[obs.frame_idx].rotation_matrix();
      const Vec3& tb = s.board_pose[obs.frame_idx].translation();
      const PlainIntrinsics& k = s.intr[obs.cam_idx];
      const int id = camera_ids_[obs.cam_idx];
      for (const auto& [bp, px] : obs.corners) {
        const CornerJacobian cj = corner_jacobian(k, rc, tc, rb, tb, bp, px);
        const double sq = cj.in_front ? cj.residual.squaredNorm()
                                      : std::numeric_limits<double>::infinity();
        sq_sum[id] += sq;
        count[id] += 1;
        total_sq += sq;
      }
    }
    for (int id : camera_ids_)
      result.calibration.per_camera_rms[id] =
          count[id] ? std::sqrt(sq_sum[id] / count[id]) : 0.0;
    result.calibration.rms_reprojection_px =
        corner_count_ ? std::sqrt(total_sq / corner_count_) : 0.0;
    return result;
  }

 private:
  BAConfig config_;
  std::vector<int> camera_ids_;
  std::map<int, std::size_t> camera_index_;
  std::vector<std::pair<int, int>> image_sizes_;
  std::vector<int> frame_ids_;
  std::map<int, std::size_t> frame_index_;
  std::vector<PreparedObs> observations_;
  std::size_t corner_count_ = 0;
  int reference_id_ = -1;
  int n_intr_ = 4;
  int block_ = 10;
  std::size_t n_params_ = 0;
  BAState state_;
};

}  // namespace

ReprojectionJacobian reprojection_jacobian(const Intrinsics& intrinsics,
                                           const RigidPose& camera_pose,
                                           const RigidPose& board_pose, const Vec2& board_point,
                                           const Vec2& observed_px) {
  const PlainIntrinsics k{intrinsics.fx, intrinsics.fy, intrinsics.cx, intrinsics.cy,
                          intrinsics.skew};
  const CornerJacobian cj =
      corner_jacobian(k, camera_pose.rotation_matrix(), camera_pose.translation(),
                      board_pose.rotation_matrix(), board_pose.translation(), board_point,
                      observed_px);
  if (!cj.in_front) throw PointBehindCamera("board corner behind camera");
  return {cj.residual, cj.d_intr, cj.d_cam, cj.d_board};
}

BAResult bundle_adjust(const RigCalibration& initial, std::span<const BoardObservation> boards,
                       const CheckerboardSpec& spec, const BAConfig& config) {
  if (initial.cameras.empty()) throw InvalidArgument("bundle_adjust: empty calibration");
  BAProblem problem(initial, boards, spec, config);

  Eigen::MatrixXd h;
  Eigen::VectorXd g;
  BAState state = problem.state();
  // the accept decision and the iteration log use evaluate_cost exclusively
  // so the logged objective is exactly monotone
  double cost = problem.evaluate_cost(state);
  if (!std::isfinite(cost))
    throw NumericalFailure("bundle_adjust: initial reprojection cost is non-finite");
  problem.evaluate_full(state, h, g);

  std::vector<double> accepted{cost};
  double lambda = config.initial_lambda;
  // below this the objective is floating-point dust (rms < 1e-10 px)
  const double cost_floor = static_cast<double>(problem.corner_count()) * 1e-20;
  bool converged = cost <= cost_floor;
  int iter = 0;

  while (!converged && iter < config.max_iterations) {
    ++iter;
    if (g.cwiseAbs().maxCoeff() < config.gradient_tolerance) {
      converged = true;
      break;
    }

    Eigen::MatrixXd damped = h;
    for (Eigen::Index i = 0; i < damped.rows(); ++i)
      damped(i, i) += lambda * std::max(h(i, i), 1e-12);
    const Eigen::VectorXd delta = Eigen::LDLT<Eigen::MatrixXd>(damped).solve(-g);

    bool rejected = true;
    if (delta.allFinite()) {
      const BAState candidate = problem.apply_step(state, delta);
      const double new_cost = problem.evaluate_cost(candidate);
      if (new_cost < cost) {
        const double rel = (cost - new_cost) / std::max(cost, 1e-300);
        state = candidate;
        cost = new_cost;
        accepted.push_back(cost);
        lambda = std::max(lambda * config.lambda_down, 1e-12);
        rejected = false;
        if (!std::isfinite(problem.evaluate_full(state, h, g)))
          throw NumericalFailure("bundle_adjust: cost became non-finite");
        if (rel < config.relative_cost_tolerance || cost <= cost_floor) converged = true;
      }
    }
    if (rejected) {
      lambda *= config.lambda_up;
      if (lambda > 1e12) converged = true;  // step size at numerical floor
    }
  }

  const double grad_norm = g.size() ? g.cwiseAbs().maxCoeff() : 0.0;
  if (!converged)
    throw NonConvergence(
        fmt::format("bundle_adjust: no convergence after {} iterations (|g|_inf={:.3e}, lambda={:.3e})",
                    iter, grad_norm, lambda),
        accepted, grad_norm, lambda);
  return problem.finalize(state, std::move(accepted), iter, grad_norm, lambda);
}

double reprojection_rms(const RigCalibration& calibration,
                        const std::map<int, RigidPose>& board_world_poses,
                        std::span<const BoardObservation> boards, const CheckerboardSpec& spec) {
  double sq = 0.0;
  std::size_t n = 0;
  for (const BoardObservation& obs : boards) {
    const auto cam_it = calibration.cameras.find(obs.camera_id);
    if (cam_it == calibration.cameras.end())
      throw UnknownCamera(fmt::format("observation references camera {}", obs.camera_id));
    const auto pose_it = board_world_poses.find(obs.frame_id);
    if (pose_it == board_world_poses.end()) continue;
    for (const auto& [idx, px] : obs.corners) {
      const Vec2 bp = board_corner_position(spec, idx);
      const Vec3 world = pose_it->second.apply(Vec3(bp.x(), bp.y(), 0.0));
      sq += (project(cam_it->second, world) - px).squaredNorm();
      ++n;
    }
  }
  return n ? std::sqrt(sq / n) : 0.0;
}

namespace {

// one trim pass: drop correspondences whose residual norm exceeds
// max(factor * MAD, 1e-6 px)
std::vector<BoardObservation> trim_correspondences(const RigCalibration& calibration,
                                                   const std::map<int, RigidPose>& board_poses,
                                                   std::span<const BoardObservation> boards,
                                                   const CheckerboardSpec& spec, double factor,
                                                   std::size_t* dropped) {
  std::vector<double> norms;
  for (const BoardObservation& obs : boards) {
    const Camera& cam = calibration.cameras.at(obs.camera_id);
    const auto pose_it = board_poses.find(obs.frame_id);
    if (pose_it == board_poses.end()) continue;
    for (const auto& [idx, px] : obs.corners) {
      const Vec2 bp = board_corner_position(spec, idx);
      norms.push_back((project(cam, pose_it->second.apply(Vec3(bp.x(), bp.y(), 0.0))) - px).norm());
    }
  }
  auto median_of = [](std::vector<double> v) {
    std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
    return v[v.size() / 2];
  };
  const double med = median_of(norms);
  std::vector<double> dev;
  dev.reserve(norms.size());
  for (double r : norms) dev.push_back(std::abs(r - med));
  const double threshold = std::max(factor * median_of(dev), 1e-6);

  std::vector<BoardObservation> trimmed;
  trimmed.reserve(boards.size());
  *dropped = 0;
  for (const BoardObservation& obs : boards) {
    const Camera& cam = calibration.cameras.at(obs.camera_id);
    const auto pose_it = board_poses.find(obs.frame_id);
    BoardObservation keep{obs.camera_id, obs.frame_id, {}};
    for (const auto& [idx, px] : obs.corners) {
      const Vec2 bp = board_corner_position(spec, idx);
      const bool outlier =
          pose_it != board_poses.end() &&
          (project(cam, pose_it->second.apply(Vec3(bp.x(), bp.y(), 0.0))) - px).norm() > threshold;
      if (outlier)
        ++*dropped;
      else
        keep.corners.emplace_back(idx, px);
    }
    if (!keep.corners.empty()) trimmed.push_back(std::move(keep));
  }
  return trimmed;
}

}  // namespace

BAResult calibrate_rig(std::span<const BoardObservation> boards, const CheckerboardSpec& spec,
                       const CalibrationConfig& config) {
  if (boards.empty()) throw InvalidArgument("calibrate_rig: no observations");

  std::set<std::pair<int, int>> seen;
  for (const BoardObservation& obs : boards)
    if (!seen.insert({obs.camera_id, obs.frame_id}).second)
      throw InvalidArgument(fmt::format("duplicate observation for camera {} frame {}",
                                        obs.camera_id, obs.frame_id));

  // per-camera homographies and board poses
  std::map<int, std::vector<Mat3>> homographies;
  std::map<std::pair<int, int>, Mat3> homography_by_obs;
  for (const BoardObservation& obs : boards) {
    if (obs.corners.size() < 4) continue;
    std::vector<std::pair<Vec2, Vec2>> corr;
    corr.reserve(obs.corners.size());
    for (const auto& [idx, px] : obs.corners)
      corr.emplace_back(board_corner_position(spec, idx), px);
    try {
      const Mat3 h = estimate_homography(corr);
      homographies[obs.camera_id].push_back(h);
      homography_by_obs[{obs.camera_id, obs.frame_id}] = h;
    } catch (const DegenerateConfiguration&) {
      // unusable view (e.g. a single visible corner row); skip for init
    }
  }

  std::map<int, Intrinsics> intrinsics;
  for (const auto& [cam_id, hs] : homographies)
    intrinsics[cam_id] = init_intrinsics_zhang(hs, config.zhang);

  std::map<std::pair<int, int>, RigidPose> board_in_camera;
  for (const auto& [key, h] : homography_by_obs)
    board_in_camera[key] = estimate_board_pose(intrinsics.at(key.first), h);

  int reference = config.ba.reference_camera;
  if (reference < 0) reference = intrinsics.begin()->first;
  const std::map<int, RigidPose> camera_poses = register_rig(board_in_camera, reference);

  RigCalibration initial;
  for (const auto& [cam_id, k] : intrinsics)
    initial.cameras.emplace(cam_id, Camera(k, camera_poses.at(cam_id), config.image_width,
                                           config.image_height));

  BAConfig ba = config.ba;
  ba.reference_camera = reference;
  BAResult result = bundle_adjust(initial, boards, spec, ba);

  if (config.trim_outliers) {
    std::size_t dropped = 0;
    const std::vector<BoardObservation> trimmed =
        trim_correspondences(result.calibration, result.board_world_poses, boards, spec,
                             config.trim_mad_factor, &dropped);
    if (dropped > 0) {
      BAResult rerun = bundle_adjust(result.calibration, trimmed, spec, ba);
      // keep the full iteration history for monotonicity inspection
      rerun.accepted_costs.insert(rerun.accepted_costs.begin(), result.accepted_costs.begin(),
                                  result.accepted_costs.end());
      return rerun;
    }
  }
  return result;
}

}  // namespace mocap
