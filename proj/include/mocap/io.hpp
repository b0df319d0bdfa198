// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "mocap/analysis.hpp"
#include "mocap/calibration.hpp"
#include "mocap/skeleton.hpp"

// Line-oriented text formats with a versioned header line, documented in
// docs/FORMATS.md. Writers are deterministic (stable ordering, shortest
// round-trip float formatting); readers are strict and fail with line
// numbers. write(read(file)) reproduces a canonical file byte-for-byte.

namespace mocap::io {

// shortest decimal that parses back to the same double
std::string format_double(double value);

// --- observations (.obs) ----------------------------------------------------
void write_observations(std::span<const BoardObservation> observations, std::ostream& out);
void write_observations(std::span<const BoardObservation> observations,
                        const std::filesystem::path& path);
std::vector<BoardObservation> read_observations(std::istream& in);
std::vector<BoardObservation> read_observations(const std::filesystem::path& path);

// --- calibration (.calib) ---------------------------------------------------
struct CalibrationFile {
  CheckerboardSpec board;
  RigCalibration rig;
};
void write_calibration(const CalibrationFile& calibration, std::ostream& out);
void write_calibration(const CalibrationFile& calibration, const std::filesystem::path& path);
CalibrationFile read_calibration(std::istream& in);
CalibrationFile read_calibration(const std::filesystem::path& path);

// --- 2D skeletons (.sk2) ----------------------------------------------------
void write_skeleton2d(std::span<const Skeleton2D> skeletons, std::ostream& out);
void write_skeleton2d(std::span<const Skeleton2D> skeletons, const std::filesystem::path& path);
std::vector<Skeleton2D> read_skeleton2d(std::istream& in);
std::vector<Skeleton2D> read_skeleton2d(const std::filesystem::path& path);

// --- 3D skeletons (.sk3) ----------------------------------------------------
void write_skeleton3d(std::span<const Skeleton3D> skeletons, std::ostream& out);
void write_skeleton3d(std::span<const Skeleton3D> skeletons, const std::filesystem::path& path);
std::vector<Skeleton3D> read_skeleton3d(std::istream& in);
std::vector<Skeleton3D> read_skeleton3d(const std::filesystem::path& path);

// --- sequences (.seq) -------------------------------------------------------
void write_sequence(const SkeletonSequence& sequence, std::ostream& out);
void write_sequence(const SkeletonSequence& sequence, const std::filesystem::path& path);
SkeletonSequence read_sequence(std::istream& in);
SkeletonSequence read_sequence(const std::filesystem::path& path);

// --- comparison reports (.report) --------------------------------------------
void write_report(const ComparisonReport& report, std::ostream& out);
void write_report(const ComparisonReport& report, const std::filesystem::path& path);
ComparisonReport read_report(std::istream& in);
ComparisonReport read_report(const std::filesystem::path& path);

// --- standard bodies (.body) --------------------------------------------------
void write_standard_body(const StandardBody& body, std::ostream& out);
void write_standard_body(const StandardBody& body, const std::filesystem::path& path);
StandardBody read_standard_body(std::istream& in);
StandardBody read_standard_body(const std::filesystem::path& path);

// --- dataset scanning ---------------------------------------------------------

struct SampleManifest {
  std::string id;
  int action_class = 0;  // 1..24
  std::string subject;
  std::string quality;  // empty when unlabeled
  int frame_count = 0;
  // modality paths relative to the dataset root, with presence flags
  std::filesystem::path rgb_dir, depth_dir, skeleton2d_file, skeleton3d_file;
  bool has_rgb = false, has_depth = false, has_skeleton2d = false, has_skeleton3d = false;
};

struct ScanResult {
  std::vector<SampleManifest> samples;  // lexicographic by id
  std::vector<std::string> warnings;    // missing modalities, missing index
};

// Reads <root>/manifest.txt and checks each sample's modalities on disk.
// A missing manifest yields an empty list plus a not-a-dataset warning;
// a nonexistent root throws NotADataset.
ScanResult scan_dataset(const std::filesystem::path& root);

}  // namespace mocap::io
