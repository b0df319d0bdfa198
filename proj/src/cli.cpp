// SPDX-License-Identifier: Apache-2.0

#include "mocap/cli.hpp"

#include <fmt/format.h>

#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>

#include "mocap/analysis.hpp"
#include "mocap/calibration.hpp"
#include "mocap/errors.hpp"
#include "mocap/fusion.hpp"
#include "mocap/io.hpp"
#include "mocap/parallel.hpp"
#include "mocap/render.hpp"
#include "mocap/rng.hpp"
#include "mocap/synth.hpp"

namespace mocap::cli {

namespace {

namespace fs = std::filesystem;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = text.find(sep, start);
    out.push_back(text.substr(start, pos - start));
    if (pos == std::string::npos) return out;
    start = pos + 1;
  }
}

CheckerboardSpec parse_board(const std::string& text) {
  const std::vector<std::string> parts = split(text, 'x');
  try {
    if (parts.size() == 3)
      return CheckerboardSpec(std::stoi(parts[0]), std::stoi(parts[1]), std::stod(parts[2]));
  } catch (const std::exception&) {
  }
  throw UsageError(fmt::format("--board expects ROWSxCOLSxSQUARE_CM (e.g. 10x15x5), got '{}'", text));
}

std::pair<int, int> parse_size(const std::string& text) {
  const std::vector<std::string> parts = split(text, 'x');
  try {
    if (parts.size() == 2) {
      const int w = std::stoi(parts[0]);
      const int h = std::stoi(parts[1]);
      if (w > 0 && h > 0) return {w, h};
    }
  } catch (const std::exception&) {
  }
  throw UsageError(fmt::format("expected WIDTHxHEIGHT (e.g. 2448x2048), got '{}'", text));
}

// --- synth -------------------------------------------------------------------

struct SynthOptions {
  std::string out_dir;
  std::string board = "10x15x5";
  std::uint64_t seed = 0;
  int poses = 100;
  int columns = 16;
  double diameter = 450.0;
  double board_noise_px = 0.0;
  double skeleton_noise_px = 0.0;
  double dropout = 0.0;
  int frames = 48;
  double fps = 30.0;
};

void run_synth(const SynthOptions& opt, std::ostream& out) {
  const CheckerboardSpec board = parse_board(opt.board);
  fs::create_directories(opt.out_dir);
  const fs::path dir(opt.out_dir);

  synth::RigSpec rig_spec;
  rig_spec.column_count = opt.columns;
  rig_spec.diameter_cm = opt.diameter;
  const std::vector<Camera> cameras = synth::build_rig(rig_spec);

  io::CalibrationFile truth;
  truth.board = board;
  for (std::size_t i = 0; i < cameras.size(); ++i) {
    truth.rig.cameras.emplace(static_cast<int>(i), cameras[i]);
    truth.rig.per_camera_rms[static_cast<int>(i)] = 0.0;
  }
  io::write_calibration(truth, dir / "rig_truth.calib");

  synth::SweepSchedule schedule;
  schedule.pose_count = opt.poses;
  const std::vector<RigidPose> board_poses = synth::uniform_board_schedule(schedule);
  const synth::SweepResult sweep = synth::sweep_checkerboard(
      board, cameras, board_poses, {opt.board_noise_px, mix_seed(opt.seed, 1)});
  io::write_observations(sweep.observations, dir / "board_observations.obs");

  const synth::MotionSpec motion =
      synth::random_motion_spec(body25_model(), opt.frames, opt.fps, mix_seed(opt.seed, 2));
  const SkeletonSequence truth_seq = synth::animate_skeleton(motion);
  io::write_sequence(truth_seq, dir / "truth.seq");
  io::write_standard_body(StandardBody::from_sequence(truth_seq), dir / "standard_body.body");

  const auto views = synth::project_sequence(
      truth_seq, cameras, {opt.skeleton_noise_px, opt.dropout, mix_seed(opt.seed, 3)});
  std::vector<Skeleton2D> flat;
  for (const auto& frame_views : views)
    for (const Skeleton2D& v : frame_views) flat.push_back(v);
  io::write_skeleton2d(flat, dir / "skeleton2d.sk2");

  out << "cameras " << cameras.size() << "\n";
  out << "board observations " << sweep.observations.size() << "\n";
  out << "skeleton frames " << truth_seq.frame_count() << "\n";
  out << "wrote rig_truth.calib board_observations.obs skeleton2d.sk2 truth.seq standard_body.body\n";
}

// --- calibrate ----------------------------------------------------------------

struct CalibrateOptions {
  std::string observations;
  std::string board = "10x15x5";
  std::string out_file;
  std::string image_size = "2448x2048";
  int reference = -1;
  bool no_trim = false;
};

void run_calibrate(const CalibrateOptions& opt, int threads, std::ostream& out) {
  const CheckerboardSpec board = parse_board(opt.board);
  const auto [width, height] = parse_size(opt.image_size);
  const std::vector<BoardObservation> observations = io::read_observations(fs::path(opt.observations));

  CalibrationConfig config;
  config.ba.threads = threads;
  config.ba.reference_camera = opt.reference;
  config.trim_outliers = !opt.no_trim;
  config.image_width = width;
  config.image_height = height;

  const BAResult result = calibrate_rig(observations, board, config);
  io::write_calibration({board, result.calibration}, fs::path(opt.out_file));

  out << "cameras " << result.calibration.cameras.size() << "\n";
  out << "boards " << result.board_world_poses.size() << "\n";
  out << "iterations " << result.iterations << "\n";
  out << "rms " << io::format_double(result.calibration.rms_reprojection_px) << " px\n";
  for (const auto& [id, rms] : result.calibration.per_camera_rms)
    out << "camera " << id << " rms " << io::format_double(rms) << " px\n";
}

// --- fuse ----------------------------------------------------------------------

struct FuseOptions {
  std::string calibration;
  std::string skeletons;
  std::string out_file;
  std::string report_file;
  std::string truth_file;
  std::string sequence_file;  // optional .seq mirror of the fused output
  double fps = 30.0;
  double min_confidence = 0.3;
  int min_views = 2;
  bool pairwise = false;
};

void run_fuse(const FuseOptions& opt, int threads, std::ostream& out) {
  const io::CalibrationFile calib = io::read_calibration(fs::path(opt.calibration));
  const std::vector<Skeleton2D> views = io::read_skeleton2d(fs::path(opt.skeletons));
  if (views.empty()) throw InvalidArgument("no 2D skeletons in input");

  std::map<int, std::vector<Skeleton2D>> by_frame;
  for (const Skeleton2D& v : views) by_frame[v.frame_id].push_back(v);
  std::vector<const std::vector<Skeleton2D>*> frames;
  frames.reserve(by_frame.size());
  for (const auto& [frame, group] : by_frame) frames.push_back(&group);

  FusionConfig config{opt.min_confidence, opt.min_views, opt.pairwise};
  std::vector<Skeleton3D> fused(frames.size());
  std::vector<ReprojectionReport> reports(frames.size());
  parallel_for(frames.size(), threads, [&](std::size_t i) {
    fused[i] = fuse_skeleton(*frames[i], calib.rig, config);
    reports[i] = reprojection_report(fused[i], *frames[i], calib.rig, config);
  });
  io::write_skeleton3d(fused, fs::path(opt.out_file));

  if (!opt.sequence_file.empty()) {
    SkeletonSequence seq;
    seq.model = fused.front().model;
    seq.frame_rate = opt.fps;
    seq.subject = "fused";
    for (const Skeleton3D& s : fused) {
      std::vector<JointSample> frame(s.joints.size());
      for (std::size_t j = 0; j < s.joints.size(); ++j)
        frame[j] = {s.joints[j].position, s.joints[j].valid};
      seq.frames.push_back(std::move(frame));
    }
    io::write_sequence(seq, fs::path(opt.sequence_file));
  }

  const int joint_count = fused.front().model->joint_count();
  int valid = 0;
  double rms_sq = 0.0;
  std::size_t rms_n = 0;
  for (const Skeleton3D& s : fused)
    for (const Joint3D& j : s.joints)
      if (j.valid) {
        ++valid;
        rms_sq += j.rms_px * j.rms_px;
        ++rms_n;
      }

  if (!opt.report_file.empty()) {
    std::ofstream rep(opt.report_file, std::ios::binary);
    if (!rep) throw IoError(fmt::format("cannot open '{}' for writing", opt.report_file));
    rep << "mocap-fusion-report v1\n";
    for (int j = 0; j < joint_count; ++j) {
      double sq = 0.0;
      std::size_t n = 0;
      for (const ReprojectionReport& r : reports)
        for (const ReprojectionRow& row : r.rows)
          if (row.joint == j) {
            sq += row.residual_px * row.residual_px;
            ++n;
          }
      rep << "joint " << j << " rows " << n << " rms "
          << io::format_double(n ? std::sqrt(sq / n) : 0.0) << "\n";
    }
    for (std::size_t i = 0; i < reports.size(); ++i)
      for (const ReprojectionRow& row : reports[i].rows)
        if (row.outlier)
          rep << "outlier frame " << fused[i].frame_id << " joint " << row.joint << " camera "
              << row.camera_id << " residual " << io::format_double(row.residual_px) << "\n";
  }

  out << "frames " << fused.size() << "\n";
  out << "valid joints " << valid << "/" << fused.size() * joint_count << "\n";
  out << "mean joint rms " << io::format_double(rms_n ? std::sqrt(rms_sq / rms_n) : 0.0)
      << " px\n";

  if (!opt.truth_file.empty()) {
    const SkeletonSequence truth = io::read_sequence(fs::path(opt.truth_file));
    // the fused coordinates live in the calibration's gauge (reference camera
    // frame); remove that one global rigid transform before measuring
    std::vector<Vec3> from, to;
    for (const Skeleton3D& s : fused) {
      if (s.frame_id < 0 || s.frame_id >= truth.frame_count()) continue;
      for (int j = 0; j < joint_count; ++j)
        if (s.joints[j].valid && truth.frames[s.frame_id][j].valid) {
          from.push_back(s.joints[j].position);
          to.push_back(truth.frames[s.frame_id][j].position);
        }
    }
    double max_err = 0.0;
    if (from.size() >= 3) {
      const RigidPose gauge = kabsch_alignment(from, to);
      for (std::size_t i = 0; i < from.size(); ++i)
        max_err = std::max(max_err, (gauge.apply(from[i]) - to[i]).norm());
    }
    out << "max joint error vs truth " << io::format_double(max_err)
        << " cm (after rigid gauge alignment over " << from.size() << " joints)\n";
  }
}

// --- render -----------------------------------------------------------------------

struct RenderOptions {
  std::string field;
  std::string calibration;
  std::string out_file;
  int camera = 0;
  double near = 100.0;
  double far = 400.0;
  int samples = 64;
  bool stratified = false;
  std::uint64_t seed = 0;
  double scale = 1.0;
};

void run_render(const RenderOptions& opt, int threads, std::ostream& out) {
  if (!(opt.scale > 0.0) || opt.scale > 8.0)
    throw UsageError(fmt::format("--scale must be in (0, 8], got {}", opt.scale));

  const RadianceField field = load_field_spec(opt.field);
  const io::CalibrationFile calib = io::read_calibration(fs::path(opt.calibration));
  const auto cam_it = calib.rig.cameras.find(opt.camera);
  if (cam_it == calib.rig.cameras.end())
    throw UnknownCamera(fmt::format("camera {} not in calibration", opt.camera));

  Camera camera = cam_it->second;
  if (opt.scale != 1.0) {
    const Intrinsics& k = camera.intrinsics;
    camera = Camera(Intrinsics(k.fx * opt.scale, k.fy * opt.scale, k.cx * opt.scale,
                               k.cy * opt.scale, k.skew * opt.scale),
                    camera.pose, std::max(1, static_cast<int>(std::lround(camera.width * opt.scale))),
                    std::max(1, static_cast<int>(std::lround(camera.height * opt.scale))));
  }

  RenderConfig config;
  config.t_near = opt.near;
  config.t_far = opt.far;
  config.sample_count = opt.samples;
  config.stratified = opt.stratified;
  config.seed = opt.seed;

  const ImageBuffer image = render_image(field, camera, config, threads);
  write_ppm(image, opt.out_file);
  out << "wrote " << opt.out_file << " " << image.width << "x" << image.height << "\n";
}

// --- retarget ----------------------------------------------------------------------

struct RetargetOptions {
  std::string input;
  std::string body;
  std::string out_file;
};

void run_retarget(const RetargetOptions& opt, std::ostream& out) {
  const SkeletonSequence seq = io::read_sequence(fs::path(opt.input));
  const StandardBody body = io::read_standard_body(fs::path(opt.body));
  io::write_sequence(retarget(seq, body), fs::path(opt.out_file));
  out << "retargeted " << seq.frame_count() << " frames\n";
}

// --- compare ----------------------------------------------------------------------

struct CompareOptions {
  std::string student;
  std::string coach;
  std::string body;
  std::string out_file;
  double flag_threshold_deg = 10.0;
  int flag_min_frames = 3;
  bool no_align = false;
};

void run_compare(const CompareOptions& opt, std::ostream& out) {
  const SkeletonSequence student = io::read_sequence(fs::path(opt.student));
  const SkeletonSequence coach = io::read_sequence(fs::path(opt.coach));
  const StandardBody body = io::read_standard_body(fs::path(opt.body));

  CompareConfig config;
  config.flag_threshold_deg = opt.flag_threshold_deg;
  config.flag_min_frames = opt.flag_min_frames;
  config.align = !opt.no_align;

  const ComparisonReport report = compare(retarget(student, body), retarget(coach, body), config);
  io::write_report(report, fs::path(opt.out_file));

  out << "frames " << report.frame_count << "\n";
  out << "mean angle error " << io::format_double(report.mean_angle_error_deg) << " deg\n";
  out << "mean distance error " << io::format_double(report.mean_distance_error_cm) << " cm\n";
  const auto& triples = student.model->angle_triples();
  for (const FlaggedInterval& f : report.flagged)
    out << "flagged triple " << f.triple << " ("
        << student.model->joint_names()[triples[f.triple].center] << ") frames [" << f.begin_frame
        << ", " << f.end_frame << ")\n";
  if (report.flagged.empty()) out << "no flagged intervals\n";
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"multi-view motion-capture geometry toolkit"};
  app.name("mocap");
  app.require_subcommand(1);
  app.set_config("--config", "", "read options from an ini file (flags win)");
  int threads = default_thread_count();
  app.add_option("--threads", threads, "worker thread count")->capture_default_str();

  SynthOptions synth_opt;
  CLI::App* synth_cmd = app.add_subcommand("synth", "generate a synthetic ground-truth dataset");
  synth_cmd->add_option("--out", synth_opt.out_dir, "output directory")->required();
  synth_cmd->add_option("--seed", synth_opt.seed, "rng seed")->capture_default_str();
  synth_cmd->add_option("--board", synth_opt.board, "checkerboard ROWSxCOLSxSQUARE_CM")
      ->capture_default_str();
  synth_cmd->add_option("--poses", synth_opt.poses, "checkerboard sweep poses")
      ->capture_default_str();
  synth_cmd->add_option("--columns", synth_opt.columns, "rig columns")->capture_default_str();
  synth_cmd->add_option("--diameter", synth_opt.diameter, "rig diameter, cm")
      ->capture_default_str();
  synth_cmd->add_option("--noise-px", synth_opt.board_noise_px, "corner noise sigma, px")
      ->capture_default_str();
  synth_cmd
      ->add_option("--skeleton-noise-px", synth_opt.skeleton_noise_px, "2D joint noise sigma, px")
      ->capture_default_str();
  synth_cmd->add_option("--dropout", synth_opt.dropout, "per-joint per-view dropout rate")
      ->capture_default_str();
  synth_cmd->add_option("--frames", synth_opt.frames, "motion frames")->capture_default_str();
  synth_cmd->add_option("--fps", synth_opt.fps, "motion frame rate")->capture_default_str();

  CalibrateOptions cal_opt;
  CLI::App* cal_cmd = app.add_subcommand("calibrate", "calibrate a rig from board observations");
  cal_cmd->add_option("--observations", cal_opt.observations, "observation file")->required();
  cal_cmd->add_option("--board", cal_opt.board, "checkerboard ROWSxCOLSxSQUARE_CM")
      ->capture_default_str();
  cal_cmd->add_option("--out", cal_opt.out_file, "output calibration file")->required();
  cal_cmd->add_option("--image-size", cal_opt.image_size, "sensor WIDTHxHEIGHT")
      ->capture_default_str();
  cal_cmd->add_option("--reference", cal_opt.reference, "reference camera id (-1: lowest)")
      ->capture_default_str();
  cal_cmd->add_flag("--no-trim", cal_opt.no_trim, "skip the one-shot outlier trim");

  FuseOptions fuse_opt;
  CLI::App* fuse_cmd = app.add_subcommand("fuse", "triangulate 2D skeletons into 3D");
  fuse_cmd->add_option("--calibration", fuse_opt.calibration, "calibration file")->required();
  fuse_cmd->add_option("--skeletons", fuse_opt.skeletons, "2D skeleton file")->required();
  fuse_cmd->add_option("--out", fuse_opt.out_file, "output 3D skeleton file")->required();
  fuse_cmd->add_option("--report", fuse_opt.report_file, "reprojection report file");
  fuse_cmd->add_option("--truth", fuse_opt.truth_file, "ground-truth sequence for error summary");
  fuse_cmd->add_option("--sequence", fuse_opt.sequence_file,
                       "also write the fused result as a sequence file");
  fuse_cmd->add_option("--fps", fuse_opt.fps, "frame rate stamped on --sequence output")
      ->capture_default_str();
  fuse_cmd->add_option("--min-confidence", fuse_opt.min_confidence, "joint confidence gate")
      ->capture_default_str();
  fuse_cmd->add_option("--min-views", fuse_opt.min_views, "minimum contributing views")
      ->capture_default_str();
  fuse_cmd->add_flag("--pairwise", fuse_opt.pairwise, "average stereo pairs instead of one DLT");

  RenderOptions render_opt;
  CLI::App* render_cmd = app.add_subcommand("render", "render a field spec to a PPM image");
  render_cmd->add_option("--field", render_opt.field, "field spec (json)")->required();
  render_cmd->add_option("--calibration", render_opt.calibration, "calibration file")->required();
  render_cmd->add_option("--camera", render_opt.camera, "camera id")->capture_default_str();
  render_cmd->add_option("--out", render_opt.out_file, "output .ppm")->required();
  render_cmd->add_option("--near", render_opt.near, "near bound, cm")->capture_default_str();
  render_cmd->add_option("--far", render_opt.far, "far bound, cm")->capture_default_str();
  render_cmd->add_option("--samples", render_opt.samples, "samples per ray")->capture_default_str();
  render_cmd->add_flag("--stratified", render_opt.stratified, "jitter samples within segments");
  render_cmd->add_option("--seed", render_opt.seed, "rng seed")->capture_default_str();
  render_cmd->add_option("--scale", render_opt.scale, "image scale factor")->capture_default_str();

  RetargetOptions ret_opt;
  CLI::App* ret_cmd = app.add_subcommand("retarget", "retarget a sequence onto a standard body");
  ret_cmd->add_option("--input", ret_opt.input, "input sequence")->required();
  ret_cmd->add_option("--body", ret_opt.body, "standard body file")->required();
  ret_cmd->add_option("--out", ret_opt.out_file, "output sequence")->required();

  CompareOptions cmp_opt;
  CLI::App* cmp_cmd = app.add_subcommand("compare", "compare a student sequence against a coach");
  cmp_cmd->add_option("--student", cmp_opt.student, "student sequence")->required();
  cmp_cmd->add_option("--coach", cmp_opt.coach, "coach sequence")->required();
  cmp_cmd->add_option("--body", cmp_opt.body, "standard body file")->required();
  cmp_cmd->add_option("--out", cmp_opt.out_file, "output report file")->required();
  cmp_cmd->add_option("--flag-threshold-deg", cmp_opt.flag_threshold_deg, "flagging threshold")
      ->capture_default_str();
  cmp_cmd->add_option("--flag-min-frames", cmp_opt.flag_min_frames, "minimum flagged run length")
      ->capture_default_str();
  cmp_cmd->add_flag("--no-align", cmp_opt.no_align, "skip rigid alignment before comparison");

  try {
    std::vector<const char*> argv;
    argv.push_back("mocap");
    for (const std::string& a : args) argv.push_back(a.c_str());
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (synth_cmd->parsed()) run_synth(synth_opt, out);
    else if (cal_cmd->parsed()) run_calibrate(cal_opt, threads, out);
    else if (fuse_cmd->parsed()) run_fuse(fuse_opt, threads, out);
    else if (render_cmd->parsed()) run_render(render_opt, threads, out);
    else if (ret_cmd->parsed()) run_retarget(ret_opt, out);
    else if (cmp_cmd->parsed()) run_compare(cmp_opt, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    err << "error[" << e.code() << "]: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error[internal]: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace mocap::cli
