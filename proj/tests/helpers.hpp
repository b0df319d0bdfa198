// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "mocap/geometry.hpp"
#include "mocap/rng.hpp"

namespace test {

using mocap::Camera;
using mocap::Intrinsics;
using mocap::Mat3;
using mocap::RigidPose;
using mocap::Rng;
using mocap::Vec2;
using mocap::Vec3;

inline Eigen::Quaterniond random_rotation(Rng& rng) {
  Eigen::Quaterniond q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
  while (q.norm() < 1e-6) q = Eigen::Quaterniond(rng.normal(), rng.normal(), rng.normal(), rng.normal());
  q.normalize();
  return q;
}

inline RigidPose random_pose(Rng& rng, double translation_scale = 100.0) {
  return RigidPose(random_rotation(rng),
                   Vec3(rng.uniform(-translation_scale, translation_scale),
                        rng.uniform(-translation_scale, translation_scale),
                        rng.uniform(-translation_scale, translation_scale)));
}

inline Camera random_camera(Rng& rng) {
  const Intrinsics k(rng.uniform(800.0, 2500.0), rng.uniform(800.0, 2500.0),
                     rng.uniform(1100.0, 1350.0), rng.uniform(900.0, 1150.0),
                     rng.uniform(-2.0, 2.0));
  return Camera(k, random_pose(rng), 2448, 2048);
}

inline std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// unique scratch directory, removed on destruction
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::uint64_t counter = 0;
    dir_ = std::filesystem::temp_directory_path() /
           ("mocap_test_" + tag + "_" + std::to_string(counter++));
    std::filesystem::create_directories(dir_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(dir_, ec);
  }
  const std::filesystem::path& path() const { return dir_; }

 private:
  std::filesystem::path dir_;
};

}  // namespace test
