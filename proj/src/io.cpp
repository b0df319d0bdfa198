// SPDX-License-Identifier: Apache-2.0

#include "mocap/io.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

namespace mocap::io {

namespace fs = std::filesystem;

std::string format_double(double value) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

namespace {

std::ifstream open_input(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("cannot open '{}' for reading", path.string()));
  return in;
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);  // '\n' endings on every platform
  if (!out) throw IoError(fmt::format("cannot open '{}' for writing", path.string()));
  return out;
}

void finish_output(std::ofstream& out, const fs::path& path) {
  out.flush();
  if (!out) throw IoError(fmt::format("failed writing '{}'", path.string()));
}

class LineParser {
 public:
  explicit LineParser(std::istream& in) {
    std::string line;
    while (std::getline(in, line)) lines_.push_back(std::move(line));
  }

  bool done() const { return pos_ >= lines_.size(); }
  std::size_t remaining() const { return lines_.size() - pos_; }
  int line_number() const { return static_cast<int>(pos_) + 1; }  // next line to read, 1-based

  const std::string& next() {
    if (done()) throw ParseError(fmt::format("line {}: unexpected end of file", line_number()));
    return lines_[pos_++];
  }

  const std::string& peek() const {
    if (done()) throw ParseError(fmt::format("line {}: unexpected end of file", line_number()));
    return lines_[pos_];
  }

 private:
  std::vector<std::string> lines_;
  std::size_t pos_ = 0;
};

std::vector<std::string> tokenize(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream iss(line);
  std::string tok;
  while (iss >> tok) out.push_back(tok);
  return out;
}

double parse_double(const std::string& tok, int line) {
  double v = 0.0;
  const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (res.ec != std::errc{} || res.ptr != tok.data() + tok.size() || !std::isfinite(v))
    throw ParseError(fmt::format("line {}: '{}' is not a finite number", line, tok));
  return v;
}

int parse_int(const std::string& tok, int line) {
  int v = 0;
  const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (res.ec != std::errc{} || res.ptr != tok.data() + tok.size())
    throw ParseError(fmt::format("line {}: '{}' is not an integer", line, tok));
  return v;
}

// header line "mocap-<kind> v<N>"
void check_version(LineParser& parser, const std::string& kind) {
  const int line = parser.line_number();
  const std::vector<std::string> tok = tokenize(parser.next());
  const std::string expected = "mocap-" + kind;
  if (tok.size() != 2 || tok[0] != expected)
    throw ParseError(fmt::format("line {}: expected '{} v1' header", line, expected));
  if (tok[1] != "v1")
    throw VersionMismatch(fmt::format("line {}: unsupported {} version '{}'", line, expected, tok[1]));
}

// "model <name> <joint_count>"
SkeletonModelPtr parse_model_line(LineParser& parser) {
  const int line = parser.line_number();
  const std::vector<std::string> tok = tokenize(parser.next());
  if (tok.size() != 3 || tok[0] != "model")
    throw ParseError(fmt::format("line {}: expected 'model <name> <joint_count>'", line));
  const SkeletonModelPtr model = model_by_name(tok[1]);
  if (parse_int(tok[2], line) != model->joint_count())
    throw ParseError(fmt::format("line {}: model '{}' has {} joints, file says {}", line, tok[1],
                                 model->joint_count(), tok[2]));
  return model;
}

void write_model_line(std::ostream& out, const SkeletonModel& model) {
  out << "model " << model.name() << " " << model.joint_count() << "\n";
}

}  // namespace

// --- observations ------------------------------------------------------------

void write_observations(std::span<const BoardObservation> observations, std::ostream& out) {
  out << "mocap-observations v1\n";
  for (const BoardObservation& obs : observations)
    for (const auto& [idx, px] : obs.corners)
      out << obs.camera_id << " " << obs.frame_id << " " << idx << " " << format_double(px.x())
          << " " << format_double(px.y()) << "\n";
}

std::vector<BoardObservation> read_observations(std::istream& in) {
  LineParser parser(in);
  check_version(parser, "observations");

  std::vector<BoardObservation> out;
  while (!parser.done()) {
    const int line = parser.line_number();
    const std::vector<std::string> tok = tokenize(parser.next());
    if (tok.size() != 5)
      throw ParseError(fmt::format("line {}: expected 'camera frame index u v'", line));
    const int cam = parse_int(tok[0], line);
    const int frame = parse_int(tok[1], line);
    const int idx = parse_int(tok[2], line);
    if (idx < 0) throw ParseError(fmt::format("line {}: negative board index", line));
    const Vec2 px(parse_double(tok[3], line), parse_double(tok[4], line));

    if (out.empty() || out.back().camera_id != cam || out.back().frame_id != frame)
      out.push_back({cam, frame, {}});
    for (const auto& [existing, unused] : out.back().corners)
      if (existing == idx)
        throw ParseError(fmt::format("line {}: duplicate board index {} in observation", line, idx));
    out.back().corners.emplace_back(idx, px);
  }
  return out;
}

// --- calibration ---------------------------------------------------------------

void write_calibration(const CalibrationFile& calibration, std::ostream& out) {
  const CheckerboardSpec& b = calibration.board;
  out << "mocap-calibration v1\n";
  out << "board.rows " << b.rows << "\n";
  out << "board.cols " << b.cols << "\n";
  out << "board.square_size " << format_double(b.square_size) << "\n";
  out << "camera.count " << calibration.rig.cameras.size() << "\n";

  std::size_t k = 0;
  for (const auto& [id, cam] : calibration.rig.cameras) {
    const std::string p = fmt::format("camera.{}.", k++);
    const Intrinsics& in = cam.intrinsics;
    const Eigen::Quaterniond& q = cam.pose.rotation();
    const Vec3& t = cam.pose.translation();
    const auto rms_it = calibration.rig.per_camera_rms.find(id);
    out << p << "id " << id << "\n";
    out << p << "image_size " << cam.width << " " << cam.height << "\n";
    out << p << "intrinsics " << format_double(in.fx) << " " << format_double(in.fy) << " "
        << format_double(in.cx) << " " << format_double(in.cy) << " " << format_double(in.skew)
        << "\n";
    out << p << "rotation " << format_double(q.w()) << " " << format_double(q.x()) << " "
        << format_double(q.y()) << " " << format_double(q.z()) << "\n";
    out << p << "translation " << format_double(t.x()) << " " << format_double(t.y()) << " "
        << format_double(t.z()) << "\n";
    out << p << "rms "
        << format_double(rms_it == calibration.rig.per_camera_rms.end() ? 0.0 : rms_it->second)
        << "\n";
  }
  out << "rms.total " << format_double(calibration.rig.rms_reprojection_px) << "\n";
}

CalibrationFile read_calibration(std::istream& in) {
  LineParser parser(in);
  check_version(parser, "calibration");

  struct Entry {
    std::string value;
    int line;
  };
  std::map<std::string, Entry> kv;
  while (!parser.done()) {
    const int line = parser.line_number();
    const std::string& raw = parser.next();
    const std::size_t space = raw.find(' ');
    if (space == std::string::npos || space == 0)
      throw ParseError(fmt::format("line {}: expected 'key value'", line));
    const std::string key = raw.substr(0, space);
    if (!kv.emplace(key, Entry{raw.substr(space + 1), line}).second)
      throw ParseError(fmt::format("line {}: duplicate key '{}'", line, key));
  }

  auto take = [&](const std::string& key) -> Entry {
    const auto it = kv.find(key);
    if (it == kv.end()) throw ParseError(fmt::format("missing key '{}'", key));
    Entry e = it->second;
    kv.erase(it);
    return e;
  };
  auto take_tokens = [&](const std::string& key, std::size_t n) {
    const Entry e = take(key);
    const std::vector<std::string> tok = tokenize(e.value);
    if (tok.size() != n)
      throw ParseError(fmt::format("line {}: key '{}' expects {} values", e.line, key, n));
    return std::make_pair(tok, e.line);
  };

  CalibrationFile out;
  {
    const auto [rows, l1] = take_tokens("board.rows", 1);
    const auto [cols, l2] = take_tokens("board.cols", 1);
    const auto [size, l3] = take_tokens("board.square_size", 1);
    try {
      out.board = CheckerboardSpec(parse_int(rows[0], l1), parse_int(cols[0], l2),
                                   parse_double(size[0], l3));
    } catch (const InvalidArgument& e) {
      throw ParseError(fmt::format("line {}: {}", l1, e.what()));
    }
  }

  const auto [count_tok, count_line] = take_tokens("camera.count", 1);
  const int count = parse_int(count_tok[0], count_line);
  if (count < 0) throw ParseError(fmt::format("line {}: negative camera count", count_line));

  for (int k = 0; k < count; ++k) {
    const std::string p = fmt::format("camera.{}.", k);
    const auto [id_tok, id_line] = take_tokens(p + "id", 1);
    const auto [size_tok, size_line] = take_tokens(p + "image_size", 2);
    const auto [intr_tok, intr_line] = take_tokens(p + "intrinsics", 5);
    const auto [rot_tok, rot_line] = take_tokens(p + "rotation", 4);
    const auto [tr_tok, tr_line] = take_tokens(p + "translation", 3);
    const auto [rms_tok, rms_line] = take_tokens(p + "rms", 1);

    const int id = parse_int(id_tok[0], id_line);
    if (out.rig.cameras.count(id))
      throw ParseError(fmt::format("line {}: duplicate camera id {}", id_line, id));
    try {
      const Intrinsics intr(parse_double(intr_tok[0], intr_line), parse_double(intr_tok[1], intr_line),
                            parse_double(intr_tok[2], intr_line), parse_double(intr_tok[3], intr_line),
                            parse_double(intr_tok[4], intr_line));
      const Eigen::Quaterniond q(parse_double(rot_tok[0], rot_line), parse_double(rot_tok[1], rot_line),
                                 parse_double(rot_tok[2], rot_line), parse_double(rot_tok[3], rot_line));
      const Vec3 t(parse_double(tr_tok[0], tr_line), parse_double(tr_tok[1], tr_line),
                   parse_double(tr_tok[2], tr_line));
      out.rig.cameras.emplace(id, Camera(intr, RigidPose(q, t), parse_int(size_tok[0], size_line),
                                         parse_int(size_tok[1], size_line)));
    } catch (const InvalidArgument& e) {
      throw ParseError(fmt::format("line {}: {}", intr_line, e.what()));
    }
    out.rig.per_camera_rms[id] = parse_double(rms_tok[0], rms_line);
  }

  const auto [total_tok, total_line] = take_tokens("rms.total", 1);
  out.rig.rms_reprojection_px = parse_double(total_tok[0], total_line);

  if (!kv.empty())
    throw ParseError(fmt::format("line {}: unknown key '{}'", kv.begin()->second.line,
                                 kv.begin()->first));
  return out;
}

// --- 2D skeletons --------------------------------------------------------------

void write_skeleton2d(std::span<const Skeleton2D> skeletons, std::ostream& out) {
  out << "mocap-skeleton2d v1\n";
  if (skeletons.empty()) throw InvalidArgument("write_skeleton2d: nothing to write");
  write_model_line(out, *skeletons.front().model);
  for (const Skeleton2D& s : skeletons)
    for (std::size_t j = 0; j < s.joints.size(); ++j) {
      const Joint2D& joint = s.joints[j];
      out << s.frame_id << " " << s.camera_id << " " << j << " "
          << format_double(joint.position.x()) << " " << format_double(joint.position.y()) << " "
          << format_double(joint.confidence) << "\n";
    }
}

std::vector<Skeleton2D> read_skeleton2d(std::istream& in) {
  LineParser parser(in);
  check_version(parser, "skeleton2d");
  const SkeletonModelPtr model = parse_model_line(parser);

  std::vector<Skeleton2D> out;
  while (!parser.done()) {
    const int line = parser.line_number();
    const std::vector<std::string> tok = tokenize(parser.next());
    if (tok.size() != 6)
      throw ParseError(fmt::format("line {}: expected 'frame camera joint u v confidence'", line));
    const int frame = parse_int(tok[0], line);
    const int cam = parse_int(tok[1], line);
    const int joint = parse_int(tok[2], line);
    if (joint < 0 || joint >= model->joint_count())
      throw ParseError(fmt::format("line {}: joint index {} out of range", line, joint));
    const double confidence = parse_double(tok[5], line);
    if (confidence < 0.0 || confidence > 1.0)
      throw ParseError(fmt::format("line {}: confidence {} outside [0, 1]", line, tok[5]));

    if (out.empty() || out.back().frame_id != frame || out.back().camera_id != cam) {
      Skeleton2D s;
      s.model = model;
      s.frame_id = frame;
      s.camera_id = cam;
      s.joints.resize(model->joint_count());
      out.push_back(std::move(s));
    }
    Joint2D& slot = out.back().joints[joint];
    slot.position = Vec2(parse_double(tok[3], line), parse_double(tok[4], line));
    slot.confidence = confidence;
  }
  return out;
}

// --- 3D skeletons --------------------------------------------------------------

namespace {

void write_joint3d_line(std::ostream& out, int frame, int joint, const Vec3& p, bool valid,
                        double rms, int views) {
  out << frame << " " << joint << " " << format_double(p.x()) << " " << format_double(p.y())
      << " " << format_double(p.z()) << " " << (valid ? 1 : 0) << " " << format_double(rms) << " "
      << views << "\n";
}

struct Joint3DLine {
  int frame, joint;
  Vec3 position;
  bool valid;
  double rms;
  int views;
};

Joint3DLine parse_joint3d_line(const std::vector<std::string>& tok, int line, int joint_count) {
  if (tok.size() != 8)
    throw ParseError(fmt::format("line {}: expected 'frame joint x y z valid rms views'", line));
  Joint3DLine out;
  out.frame = parse_int(tok[0], line);
  out.joint = parse_int(tok[1], line);
  if (out.joint < 0 || out.joint >= joint_count)
    throw ParseError(fmt::format("line {}: joint index {} out of range", line, out.joint));
  out.position = Vec3(parse_double(tok[2], line), parse_double(tok[3], line),
                      parse_double(tok[4], line));
  const int valid = parse_int(tok[5], line);
  if (valid != 0 && valid != 1)
    throw ParseError(fmt::format("line {}: valid flag must be 0 or 1", line));
  out.valid = valid == 1;
  out.rms = parse_double(tok[6], line);
  out.views = parse_int(tok[7], line);
  if (out.views < 0) throw ParseError(fmt::format("line {}: negative view count", line));
  return out;
}

}  // namespace

void write_skeleton3d(std::span<const Skeleton3D> skeletons, std::ostream& out) {
  out << "mocap-skeleton3d v1\n";
  if (skeletons.empty()) throw InvalidArgument("write_skeleton3d: nothing to write");
  write_model_line(out, *skeletons.front().model);
  for (const Skeleton3D& s : skeletons)
    for (std::size_t j = 0; j < s.joints.size(); ++j) {
      const Joint3D& joint = s.joints[j];
      write_joint3d_line(out, s.frame_id, static_cast<int>(j), joint.position, joint.valid,
                         joint.rms_px, joint.view_count);
    }
}

std::vector<Skeleton3D> read_skeleton3d(std::istream& in) {
  LineParser parser(in);
  check_version(parser, "skeleton3d");
  const SkeletonModelPtr model = parse_model_line(parser);

  std::vector<Skeleton3D> out;
  while (!parser.done()) {
    const int line = parser.line_number();
    const Joint3DLine j = parse_joint3d_line(tokenize(parser.next()), line, model->joint_count());
    if (out.empty() || out.back().frame_id != j.frame) {
      Skeleton3D s;
      s.model = model;
      s.frame_id = j.frame;
      s.joints.resize(model->joint_count());
      out.push_back(std::move(s));
    }
    Joint3D& slot = out.back().joints[j.joint];
    slot.position = j.position;
    slot.valid = j.valid;
    slot.rms_px = j.rms;
    slot.view_count = j.views;
  }
  return out;
}

// --- sequences -------------------------------------------------------------------

void write_sequence(const SkeletonSequence& sequence, std::ostream& out) {
  if (!sequence.model) throw InvalidArgument("write_sequence: sequence has no model");
  if (sequence.frames.empty()) throw InvalidArgument("write_sequence: sequence has no frames");
  out << "mocap-sequence v1\n";
  write_model_line(out, *sequence.model);
  out << "frame_rate " << format_double(sequence.frame_rate) << "\n";
  out << (sequence.subject.empty() ? "subject" : "subject " + sequence.subject) << "\n";
  for (std::size_t f = 0; f < sequence.frames.size(); ++f)
    for (std::size_t j = 0; j < sequence.frames[f].size(); ++j) {
      const JointSample& s = sequence.frames[f][j];
      write_joint3d_line(out, static_cast<int>(f), static_cast<int>(j), s.position, s.valid, 0.0, 0);
    }
}

SkeletonSequence read_sequence(std::istream& in) {
  LineParser parser(in);
  check_version(parser, "sequence");

  SkeletonSequence out;
  out.model = parse_model_line(parser);
  {
    const int line = parser.line_number();
    const std::vector<std::string> tok = tokenize(parser.next());
    if (tok.size() != 2 || tok[0] != "frame_rate")
      throw ParseError(fmt::format("line {}: expected 'frame_rate <fps>'", line));
    out.frame_rate = parse_double(tok[1], line);
    if (!(out.frame_rate > 0.0))
      throw ParseError(fmt::format("line {}: frame rate must be positive", line));
  }
  {
    const int line = parser.line_number();
    const std::string& raw = parser.next();
    if (raw != "subject" && raw.rfind("subject ", 0) != 0)
      throw ParseError(fmt::format("line {}: expected 'subject <label>'", line));
    out.subject = raw == "subject" ? "" : raw.substr(8);
  }

  const int joints = out.model->joint_count();
  std::size_t index = 0;
  while (!parser.done()) {
    const int line = parser.line_number();
    const Joint3DLine j = parse_joint3d_line(tokenize(parser.next()), line, joints);
    const int expect_frame = static_cast<int>(index) / joints;
    const int expect_joint = static_cast<int>(index) % joints;
    if (j.frame != expect_frame || j.joint != expect_joint)
      throw ParseError(fmt::format("line {}: expected frame {} joint {} (rows are frame-major)",
                                   line, expect_frame, expect_joint));
    if (expect_joint == 0) out.frames.emplace_back(joints);
    out.frames.back()[j.joint] = {j.position, j.valid};
    ++index;
  }
  if (out.frames.empty()) throw ParseError("sequence has no frames (T >= 1 required)");
  if (index % joints != 0) throw ParseError("sequence ends mid-frame");
  return out;
}

// --- comparison reports -------------------------------------------------------------

void write_report(const ComparisonReport& report, std::ostream& out) {
  const int joints = static_cast<int>(report.trajectory_deviation_cm.size());
  const int triples = static_cast<int>(report.angle_deviation_deg.size());
  out << "mocap-report v1\n";
  out << "frames " << report.frame_count << "\n";
  out << "joints " << joints << "\n";
  out << "triples " << triples << "\n";
  out << "summary.mean_angle_error_deg " << format_double(report.mean_angle_error_deg) << "\n";
  out << "summary.mean_distance_error_cm " << format_double(report.mean_distance_error_cm) << "\n";
  out << "flags " << report.flagged.size() << "\n";
  for (const FlaggedInterval& f : report.flagged)
    out << "flag " << f.triple << " " << f.begin_frame << " " << f.end_frame << "\n";
  for (int f = 0; f < report.frame_count; ++f)
    for (int j = 0; j < joints; ++j)
      out << "trajectory " << f << " " << j << " " << int(report.trajectory_valid[j][f]) << " "
          << format_double(report.trajectory_deviation_cm[j][f]) << "\n";
  for (int f = 0; f < report.frame_count; ++f)
    for (int t = 0; t < triples; ++t)
      out << "angle " << f << " " << t << " " << int(report.angle_valid[t][f]) << " "
          << format_double(report.angle_deviation_deg[t][f]) << "\n";
}

ComparisonReport read_report(std::istream& in) {
  LineParser parser(in);
  check_version(parser, "report");

  auto expect_kv = [&](const std::string& key) {
    const int line = parser.line_number();
    const std::vector<std::string> tok = tokenize(parser.next());
    if (tok.size() != 2 || tok[0] != key)
      throw ParseError(fmt::format("line {}: expected '{} <value>'", line, key));
    return std::make_pair(tok[1], line);
  };

  ComparisonReport out;
  const auto [frames_tok, frames_line] = expect_kv("frames");
  out.frame_count = parse_int(frames_tok, frames_line);
  const auto [joints_tok, joints_line] = expect_kv("joints");
  const int joints = parse_int(joints_tok, joints_line);
  const auto [triples_tok, triples_line] = expect_kv("triples");
  const int triples = parse_int(triples_tok, triples_line);
  if (out.frame_count < 0 || joints < 0 || triples < 0)
    throw ParseError("report: negative dimensions");
  // the header must be consistent with the actual table size before anything
  // is allocated from it
  const std::size_t expected_rows =
      static_cast<std::size_t>(out.frame_count) * (static_cast<std::size_t>(joints) + triples);
  if (expected_rows > parser.remaining())
    throw ParseError(fmt::format("report: header promises {} rows but only {} lines remain",
                                 expected_rows, parser.remaining()));

  const auto [angle_tok, angle_line] = expect_kv("summary.mean_angle_error_deg");
  out.mean_angle_error_deg = parse_double(angle_tok, angle_line);
  const auto [dist_tok, dist_line] = expect_kv("summary.mean_distance_error_cm");
  out.mean_distance_error_cm = parse_double(dist_tok, dist_line);

  const auto [flag_tok, flag_line] = expect_kv("flags");
  const int flag_count = parse_int(flag_tok, flag_line);
  for (int i = 0; i < flag_count; ++i) {
    const int line = parser.line_number();
    const std::vector<std::string> tok = tokenize(parser.next());
    if (tok.size() != 4 || tok[0] != "flag")
      throw ParseError(fmt::format("line {}: expected 'flag <triple> <begin> <end>'", line));
    FlaggedInterval f;
    f.triple = parse_int(tok[1], line);
    f.begin_frame = parse_int(tok[2], line);
    f.end_frame = parse_int(tok[3], line);
    if (f.triple < 0 || f.triple >= triples || f.begin_frame < 0 || f.end_frame > out.frame_count ||
        f.begin_frame >= f.end_frame)
      throw ParseError(fmt::format("line {}: flag interval out of range", line));
    out.flagged.push_back(f);
  }

  out.trajectory_deviation_cm.assign(joints, std::vector<double>(out.frame_count, 0.0));
  out.trajectory_valid.assign(joints, std::vector<unsigned char>(out.frame_count, 0));
  out.angle_deviation_deg.assign(triples, std::vector<double>(out.frame_count, 0.0));
  out.angle_valid.assign(triples, std::vector<unsigned char>(out.frame_count, 0));

  auto read_rows = [&](const char* kind, int inner_count, auto& values, auto& valid) {
    for (int f = 0; f < out.frame_count; ++f)
      for (int i = 0; i < inner_count; ++i) {
        const int line = parser.line_number();
        const std::vector<std::string> tok = tokenize(parser.next());
        if (tok.size() != 5 || tok[0] != kind || parse_int(tok[1], line) != f ||
            parse_int(tok[2], line) != i)
          throw ParseError(fmt::format("line {}: expected '{} {} {} <valid> <deviation>'", line,
                                       kind, f, i));
        const int v = parse_int(tok[3], line);
        if (v != 0 && v != 1)
          throw ParseError(fmt::format("line {}: valid flag must be 0 or 1", line));
        const double d = parse_double(tok[4], line);
        if (d < 0.0) throw ParseError(fmt::format("line {}: negative deviation", line));
        values[i][f] = d;
        valid[i][f] = static_cast<unsigned char>(v);
      }
  };
  read_rows("trajectory", joints, out.trajectory_deviation_cm, out.trajectory_valid);
  read_rows("angle", triples, out.angle_deviation_deg, out.angle_valid);
  if (!parser.done())
    throw ParseError(fmt::format("line {}: trailing content", parser.line_number()));
  return out;
}

// --- standard bodies -------------------------------------------------------------

void write_standard_body(const StandardBody& body, std::ostream& out) {
  if (!body.model) throw InvalidArgument("write_standard_body: missing model");
  out << "mocap-body v1\n";
  write_model_line(out, *body.model);
  for (int j = 0; j < body.model->joint_count(); ++j) {
    if (j == body.model->root()) continue;
    out << "bone " << j << " " << format_double(body.bone_lengths[j]) << "\n";
  }
}

StandardBody read_standard_body(std::istream& in) {
  LineParser parser(in);
  check_version(parser, "body");
  const SkeletonModelPtr model = parse_model_line(parser);

  std::vector<double> lengths(model->joint_count(), 0.0);
  std::vector<char> seen(model->joint_count(), 0);
  while (!parser.done()) {
    const int line = parser.line_number();
    const std::vector<std::string> tok = tokenize(parser.next());
    if (tok.size() != 3 || tok[0] != "bone")
      throw ParseError(fmt::format("line {}: expected 'bone <joint> <length_cm>'", line));
    const int j = parse_int(tok[1], line);
    if (j < 0 || j >= model->joint_count() || j == model->root())
      throw ParseError(fmt::format("line {}: joint {} is not a boned joint", line, j));
    if (seen[j]) throw ParseError(fmt::format("line {}: duplicate bone for joint {}", line, j));
    seen[j] = 1;
    lengths[j] = parse_double(tok[2], line);
    if (!(lengths[j] > 0.0))
      throw ParseError(fmt::format("line {}: bone length must be positive", line));
  }
  for (int j = 0; j < model->joint_count(); ++j)
    if (j != model->root() && !seen[j])
      throw ParseError(fmt::format("missing bone length for joint {}", j));
  return StandardBody(model, std::move(lengths));
}

// --- dataset scanning ---------------------------------------------------------------

ScanResult scan_dataset(const fs::path& root) {
  if (!fs::exists(root))
    throw NotADataset(fmt::format("dataset root '{}' does not exist", root.string()));

  ScanResult result;
  const fs::path index = root / "manifest.txt";
  if (!fs::exists(index)) {
    result.warnings.push_back(
        fmt::format("not-a-dataset: no manifest.txt under '{}'", root.string()));
    return result;
  }

  std::ifstream in = open_input(index);
  LineParser parser(in);
  check_version(parser, "manifest");

  std::map<std::string, SampleManifest> by_id;
  while (!parser.done()) {
    const int line = parser.line_number();
    const std::vector<std::string> tok = tokenize(parser.next());
    if (tok.size() != 6 || tok[0] != "sample")
      throw ParseError(
          fmt::format("line {}: expected 'sample <id> <class> <subject> <quality|-> <frames>'", line));

    SampleManifest m;
    m.id = tok[1];
    m.action_class = parse_int(tok[2], line);
    if (m.action_class < 1 || m.action_class > 24)
      throw ParseError(
          fmt::format("line {}: action class {} outside [1, 24]", line, m.action_class));
    m.subject = tok[3];
    m.quality = tok[4] == "-" ? "" : tok[4];
    m.frame_count = parse_int(tok[5], line);
    if (m.frame_count < 0) throw ParseError(fmt::format("line {}: negative frame count", line));

    m.rgb_dir = fs::path(m.id) / "rgb";
    m.depth_dir = fs::path(m.id) / "depth";
    m.skeleton2d_file = fs::path(m.id) / "skeleton2d.sk2";
    m.skeleton3d_file = fs::path(m.id) / "skeleton3d.sk3";
    m.has_rgb = fs::is_directory(root / m.rgb_dir);
    m.has_depth = fs::is_directory(root / m.depth_dir);
    m.has_skeleton2d = fs::is_regular_file(root / m.skeleton2d_file);
    m.has_skeleton3d = fs::is_regular_file(root / m.skeleton3d_file);

    if (!by_id.emplace(m.id, m).second)
      throw ParseError(fmt::format("line {}: duplicate sample id '{}'", line, m.id));
  }

  for (auto& [id, m] : by_id) {  // std::map iteration is already lexicographic
    if (!m.has_rgb) result.warnings.push_back(fmt::format("sample {}: missing rgb", id));
    if (!m.has_depth) result.warnings.push_back(fmt::format("sample {}: missing depth", id));
    if (!m.has_skeleton2d)
      result.warnings.push_back(fmt::format("sample {}: missing skeleton2d", id));
    if (!m.has_skeleton3d)
      result.warnings.push_back(fmt::format("sample {}: missing skeleton3d", id));
    result.samples.push_back(std::move(m));
  }
  return result;
}

// --- path overloads -------------------------------------------------------------------

namespace {

template <typename WriteFn>
void to_path(const fs::path& path, WriteFn&& fn) {
  std::ofstream out = open_output(path);
  fn(out);
  finish_output(out, path);
}

template <typename ReadFn>
auto from_path(const fs::path& path, ReadFn&& fn) {
  std::ifstream in = open_input(path);
  return fn(in);
}

}  // namespace

void write_observations(std::span<const BoardObservation> observations, const fs::path& path) {
  to_path(path, [&](std::ostream& out) { write_observations(observations, out); });
}
std::vector<BoardObservation> read_observations(const fs::path& path) {
  return from_path(path, [](std::istream& in) { return read_observations(in); });
}

void write_calibration(const CalibrationFile& calibration, const fs::path& path) {
  to_path(path, [&](std::ostream& out) { write_calibration(calibration, out); });
}
CalibrationFile read_calibration(const fs::path& path) {
  return from_path(path, [](std::istream& in) { return read_calibration(in); });
}

void write_skeleton2d(std::span<const Skeleton2D> skeletons, const fs::path& path) {
  to_path(path, [&](std::ostream& out) { write_skeleton2d(skeletons, out); });
}
std::vector<Skeleton2D> read_skeleton2d(const fs::path& path) {
  return from_path(path, [](std::istream& in) { return read_skeleton2d(in); });
}

void write_skeleton3d(std::span<const Skeleton3D> skeletons, const fs::path& path) {
  to_path(path, [&](std::ostream& out) { write_skeleton3d(skeletons, out); });
}
std::vector<Skeleton3D> read_skeleton3d(const fs::path& path) {
  return from_path(path, [](std::istream& in) { return read_skeleton3d(in); });
}

void write_sequence(const SkeletonSequence& sequence, const fs::path& path) {
  to_path(path, [&](std::ostream& out) { write_sequence(sequence, out); });
}
SkeletonSequence read_sequence(const fs::path& path) {
  return from_path(path, [](std::istream& in) { return read_sequence(in); });
}

void write_report(const ComparisonReport& report, const fs::path& path) {
  to_path(path, [&](std::ostream& out) { write_report(report, out); });
}
ComparisonReport read_report(const fs::path& path) {
  return from_path(path, [](std::istream& in) { return read_report(in); });
}

void write_standard_body(const StandardBody& body, const fs::path& path) {
  to_path(path, [&](std::ostream& out) { write_standard_body(body, out); });
}
StandardBody read_standard_body(const fs::path& path) {
  return from_path(path, [](std::istream& in) { return read_standard_body(in); });
}

}  // namespace mocap::io
