// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <fstream>
#include <functional>
#include <sstream>

#include "helpers.hpp"
#include "mocap/analysis.hpp"
#include "mocap/io.hpp"
#include "mocap/synth.hpp"

using namespace mocap;
using test::Rng;

namespace {

template <typename Writer>
std::string to_string_via(Writer&& writer) {
  std::ostringstream out;
  writer(out);
  return out.str();
}

SkeletonSequence random_sequence(int frames, std::uint64_t seed) {
  return synth::animate_skeleton(synth::random_motion_spec(body25_model(), frames, 30.0, seed));
}

}  // namespace

TEST_CASE("format_double: shortest round-trip decimals") {
  CHECK(io::format_double(0.1) == "0.1");
  CHECK(io::format_double(1.0) == "1");
  CHECK(io::format_double(-2.5e-7) == "-2.5e-07");
  CHECK(io::format_double(1224.0) == "1224");
}

TEST_CASE("calibration file: 10,000 random camera records round-trip bit-identically") {
  Rng rng(61);
  io::CalibrationFile file;
  file.board = CheckerboardSpec(10, 15, 5.0);
  file.rig.rms_reprojection_px = 0.1234567890123456789;
  for (int i = 0; i < 10000; ++i) {
    file.rig.cameras.emplace(i, test::random_camera(rng));
    file.rig.per_camera_rms[i] = rng.uniform(0, 1);
  }

  const std::string first = to_string_via([&](std::ostream& o) { io::write_calibration(file, o); });
  std::istringstream in(first);
  const io::CalibrationFile parsed = io::read_calibration(in);
  const std::string second =
      to_string_via([&](std::ostream& o) { io::write_calibration(parsed, o); });
  CHECK(first == second);

  // read-of-write reproduces the in-memory values exactly
  for (const auto& [id, cam] : file.rig.cameras) {
    const Camera& back = parsed.rig.cameras.at(id);
    CHECK(back.intrinsics.fx == cam.intrinsics.fx);
    CHECK(back.intrinsics.skew == cam.intrinsics.skew);
    CHECK((back.pose.rotation().coeffs() - cam.pose.rotation().coeffs()).norm() == 0.0);
    CHECK((back.pose.translation() - cam.pose.translation()).norm() == 0.0);
    CHECK(back.width == cam.width);
  }
}

TEST_CASE("observations, skeletons, sequences, bodies, reports all round-trip") {
  const std::vector<Camera> rig = synth::build_rig(synth::RigSpec{});
  const CheckerboardSpec board(10, 15, 5.0);
  synth::SweepSchedule schedule;
  schedule.pose_count = 4;
  const auto sweep =
      synth::sweep_checkerboard(board, rig, synth::uniform_board_schedule(schedule), {0.3, 5});

  const std::string obs_text =
      to_string_via([&](std::ostream& o) { io::write_observations(sweep.observations, o); });
  {
    std::istringstream in(obs_text);
    const auto parsed = io::read_observations(in);
    const std::string again =
        to_string_via([&](std::ostream& o) { io::write_observations(parsed, o); });
    CHECK(obs_text == again);
  }

  const SkeletonSequence seq = random_sequence(6, 62);
  const auto views = synth::project_sequence(seq, rig, {0.5, 0.1, 7});
  std::vector<Skeleton2D> flat;
  for (const auto& f : views) flat.insert(flat.end(), f.begin(), f.end());
  const std::string sk2_text =
      to_string_via([&](std::ostream& o) { io::write_skeleton2d(flat, o); });
  {
    std::istringstream in(sk2_text);
    const auto parsed = io::read_skeleton2d(in);
    REQUIRE(parsed.size() == flat.size());
    const std::string again =
        to_string_via([&](std::ostream& o) { io::write_skeleton2d(parsed, o); });
    CHECK(sk2_text == again);
  }

  std::vector<Skeleton3D> skeletons;
  for (int f = 0; f < seq.frame_count(); ++f) {
    Skeleton3D s;
    s.model = seq.model;
    s.frame_id = f;
    s.joints.resize(25);
    Rng rng(63 + f);
    for (int j = 0; j < 25; ++j) {
      s.joints[j].position = seq.frames[f][j].position;
      s.joints[j].valid = rng.uniform() > 0.2;
      s.joints[j].rms_px = rng.uniform(0, 1);
      s.joints[j].view_count = static_cast<int>(rng.uniform(2, 32));
    }
    skeletons.push_back(std::move(s));
  }
  const std::string sk3_text =
      to_string_via([&](std::ostream& o) { io::write_skeleton3d(skeletons, o); });
  {
    std::istringstream in(sk3_text);
    const auto parsed = io::read_skeleton3d(in);
    const std::string again =
        to_string_via([&](std::ostream& o) { io::write_skeleton3d(parsed, o); });
    CHECK(sk3_text == again);
  }

  SkeletonSequence labeled = seq;
  labeled.subject = "student one";  // labels may contain spaces
  const std::string seq_text =
      to_string_via([&](std::ostream& o) { io::write_sequence(labeled, o); });
  {
    std::istringstream in(seq_text);
    const SkeletonSequence parsed = io::read_sequence(in);
    CHECK(parsed.subject == "student one");
    CHECK(parsed.frame_rate == labeled.frame_rate);
    const std::string again =
        to_string_via([&](std::ostream& o) { io::write_sequence(parsed, o); });
    CHECK(seq_text == again);
    for (int f = 0; f < labeled.frame_count(); ++f)
      for (int j = 0; j < 25; ++j)
        CHECK((parsed.frames[f][j].position - labeled.frames[f][j].position).norm() == 0.0);
  }

  const StandardBody body = StandardBody::from_sequence(seq);
  const std::string body_text =
      to_string_via([&](std::ostream& o) { io::write_standard_body(body, o); });
  {
    std::istringstream in(body_text);
    const StandardBody parsed = io::read_standard_body(in);
    const std::string again =
        to_string_via([&](std::ostream& o) { io::write_standard_body(parsed, o); });
    CHECK(body_text == again);
  }

  const ComparisonReport report = compare(random_sequence(12, 64), random_sequence(12, 65));
  const std::string report_text =
      to_string_via([&](std::ostream& o) { io::write_report(report, o); });
  {
    std::istringstream in(report_text);
    const ComparisonReport parsed = io::read_report(in);
    CHECK(parsed.mean_angle_error_deg == report.mean_angle_error_deg);
    const std::string again =
        to_string_via([&](std::ostream& o) { io::write_report(parsed, o); });
    CHECK(report_text == again);
  }
}

TEST_CASE("sequence file: header-only input is rejected") {
  std::istringstream in("mocap-sequence v1\nmodel body25 25\nframe_rate 30\nsubject x\n");
  CHECK_THROWS_AS(io::read_sequence(in), ParseError);
}

TEST_CASE("readers reject malformed input with structured errors") {
  {
    std::istringstream in("mocap-observations v2\n");
    CHECK_THROWS_AS(io::read_observations(in), VersionMismatch);
  }
  {
    std::istringstream in("mocap-sequence v1\n");
    CHECK_THROWS_AS(io::read_observations(in), ParseError);
  }
  {
    std::istringstream in("mocap-observations v1\n1 2 3 4\n");
    CHECK_THROWS_AS(io::read_observations(in), ParseError);
  }
  {
    std::istringstream in("mocap-observations v1\n1 2 3 nan 5\n");
    CHECK_THROWS_AS(io::read_observations(in), ParseError);
  }
  {
    std::istringstream in("mocap-observations v1\n0 0 1 9 9\n0 0 1 9 9\n");
    CHECK_THROWS_AS(io::read_observations(in), ParseError);  // duplicate corner
  }
  {  // unknown key carries its line number
    std::istringstream in(
        "mocap-calibration v1\nboard.rows 10\nboard.cols 15\nboard.square_size 5\n"
        "camera.count 0\nrms.total 0\nboard.color blue\n");
    try {
      io::read_calibration(in);
      CHECK(false);
    } catch (const ParseError& e) {
      CHECK(std::string(e.what()).find("line 7") != std::string::npos);
      CHECK(std::string(e.what()).find("board.color") != std::string::npos);
    }
  }
  {
    std::istringstream in("mocap-skeleton2d v1\nmodel body99 25\n");
    CHECK_THROWS_AS(io::read_skeleton2d(in), ParseError);
  }
  {
    std::istringstream in("mocap-skeleton2d v1\nmodel body25 25\n0 0 40 1 1 0.5\n");
    CHECK_THROWS_AS(io::read_skeleton2d(in), ParseError);  // joint out of range
  }
  {
    std::istringstream in("mocap-skeleton2d v1\nmodel body25 25\n0 0 4 1 1 1.5\n");
    CHECK_THROWS_AS(io::read_skeleton2d(in), ParseError);  // confidence out of range
  }
}

TEST_CASE("parsers survive random mutations with structured errors only") {
  // every failure must surface as a mocap::Error; no crashes, no raw
  //exceptions, regardless of how a canonical file is damaged
  const std::vector<Camera> rig = synth::build_rig(synth::RigSpec{});
  const SkeletonSequence seq = random_sequence(4, 80);

  io::CalibrationFile calib;
  calib.board = CheckerboardSpec(10, 15, 5.0);
  for (int i = 0; i < 4; ++i) calib.rig.cameras.emplace(i, rig[i]);

  std::vector<std::pair<std::string, std::function<void(const std::string&)>>> cases;
  cases.emplace_back(
      to_string_via([&](std::ostream& o) { io::write_calibration(calib, o); }),
      [](const std::string& text) {
        std::istringstream in(text);
        io::read_calibration(in);
      });
  cases.emplace_back(to_string_via([&](std::ostream& o) { io::write_sequence(seq, o); }),
                     [](const std::string& text) {
                       std::istringstream in(text);
                       io::read_sequence(in);
                     });
  const ComparisonReport report = compare(seq, seq);
  cases.emplace_back(to_string_via([&](std::ostream& o) { io::write_report(report, o); }),
                     [](const std::string& text) {
                       std::istringstream in(text);
                       io::read_report(in);
                     });
  cases.emplace_back(
      to_string_via([&](std::ostream& o) { io::write_standard_body(StandardBody::from_sequence(seq), o); }),
      [](const std::string& text) {
        std::istringstream in(text);
        io::read_standard_body(in);
      });

  Rng rng(81);
  const std::string alphabet = "0123456789.-+eE abcdefgh\n\t";
  for (const auto& [canonical, reader] : cases) {
    for (int it = 0; it < 300; ++it) {
      std::string mutated = canonical;
      const int edits = 1 + static_cast<int>(rng.uniform(0, 4));
      for (int e = 0; e < edits; ++e) {
        const std::size_t pos = static_cast<std::size_t>(rng.uniform(0, mutated.size()));
        const char c = alphabet[static_cast<std::size_t>(rng.uniform(0, alphabet.size()))];
        switch (static_cast<int>(rng.uniform(0, 3))) {
          case 0: mutated[std::min(pos, mutated.size() - 1)] = c; break;
          case 1: mutated.insert(pos, 1, c); break;
          default: if (!mutated.empty()) mutated.erase(std::min(pos, mutated.size() - 1), 1);
        }
      }
      try {
        reader(mutated);  // accepting a harmless mutation is fine
      } catch (const Error&) {
        // structured failure: exactly what the contract requires
      }
    }
  }
  CHECK(true);  // reaching this point means no unstructured failure escaped
}

TEST_CASE("scan_dataset: fixture tree with a missing modality") {
  test::TempDir tmp("scan");
  const auto root = tmp.path();
  std::ofstream(root / "manifest.txt")
      << "mocap-manifest v1\n"
      << "sample s002 3 subj1 good 48\n"
      << "sample s001 1 subj2 - 96\n"
      << "sample s003 24 subj1 poor 48\n";
  for (const std::string id : {"s001", "s002", "s003"}) {
    std::filesystem::create_directories(root / id / "rgb");
    std::filesystem::create_directories(root / id / "depth");
    std::ofstream(root / id / "skeleton2d.sk2") << "mocap-skeleton2d v1\nmodel body25 25\n";
    if (id != "s002")
      std::ofstream(root / id / "skeleton3d.sk3") << "mocap-skeleton3d v1\nmodel body25 25\n";
  }

  const io::ScanResult scan = io::scan_dataset(root);
  REQUIRE(scan.samples.size() == 3);
  CHECK(scan.samples[0].id == "s001");  // lexicographic ordering
  CHECK(scan.samples[1].id == "s002");
  CHECK(scan.samples[0].action_class == 1);
  CHECK(scan.samples[0].quality.empty());
  CHECK(scan.samples[1].quality == "good");
  CHECK(scan.samples[1].has_skeleton2d);
  CHECK(!scan.samples[1].has_skeleton3d);
  REQUIRE(scan.warnings.size() == 1);
  CHECK(scan.warnings[0].find("s002") != std::string::npos);
}

TEST_CASE("scan_dataset: empty root warns, bad class fails, missing root throws") {
  test::TempDir tmp("scan2");
  const io::ScanResult empty = io::scan_dataset(tmp.path());
  CHECK(empty.samples.empty());
  REQUIRE(empty.warnings.size() == 1);
  CHECK(empty.warnings[0].find("not-a-dataset") != std::string::npos);

  std::ofstream(tmp.path() / "manifest.txt") << "mocap-manifest v1\nsample s1 25 subj - 10\n";
  CHECK_THROWS_AS(io::scan_dataset(tmp.path()), ParseError);

  CHECK_THROWS_AS(io::scan_dataset(tmp.path() / "does_not_exist"), NotADataset);
}
