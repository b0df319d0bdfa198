// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace mocap {

// Base of every structured failure. `code()` is a stable, grep-able
// identifier; `what()` carries the human-readable detail.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

struct PointBehindCamera : Error {
  explicit PointBehindCamera(const std::string& m) : Error("point-behind-camera", m) {}
};
struct DegenerateConfiguration : Error {
  explicit DegenerateConfiguration(const std::string& m) : Error("degenerate-configuration", m) {}
};
struct InsufficientViews : Error {
  explicit InsufficientViews(const std::string& m) : Error("insufficient-views", m) {}
};
struct IllConditioned : Error {
  explicit IllConditioned(const std::string& m) : Error("ill-conditioned", m) {}
};
struct DisconnectedRig : Error {
  explicit DisconnectedRig(const std::string& m) : Error("disconnected-rig", m) {}
};
struct NumericalFailure : Error {
  explicit NumericalFailure(const std::string& m) : Error("numerical-failure", m) {}
};
struct FrameMismatch : Error {
  explicit FrameMismatch(const std::string& m) : Error("frame-mismatch", m) {}
};
struct UnknownCamera : Error {
  explicit UnknownCamera(const std::string& m) : Error("unknown-camera", m) {}
};
struct DegenerateGeometry : Error {
  explicit DegenerateGeometry(const std::string& m) : Error("degenerate-geometry", m) {}
};
struct InvalidBounds : Error {
  explicit InvalidBounds(const std::string& m) : Error("invalid-bounds", m) {}
};
struct TopologyMismatch : Error {
  explicit TopologyMismatch(const std::string& m) : Error("topology-mismatch", m) {}
};
struct ZeroLengthBone : Error {
  explicit ZeroLengthBone(const std::string& m) : Error("zero-length-bone", m) {}
};
struct DegenerateAlignment : Error {
  explicit DegenerateAlignment(const std::string& m) : Error("degenerate-alignment", m) {}
};
struct ModelMismatch : Error {
  explicit ModelMismatch(const std::string& m) : Error("model-mismatch", m) {}
};
struct ParseError : Error {
  explicit ParseError(const std::string& m) : Error("parse-error", m) {}
};
struct VersionMismatch : Error {
  explicit VersionMismatch(const std::string& m) : Error("version-mismatch", m) {}
};
struct NotADataset : Error {
  explicit NotADataset(const std::string& m) : Error("not-a-dataset", m) {}
};
struct InvalidSpec : Error {
  explicit InvalidSpec(const std::string& m) : Error("invalid-spec", m) {}
};
struct InvalidArgument : Error {
  explicit InvalidArgument(const std::string& m) : Error("invalid-argument", m) {}
};
struct IoError : Error {
  explicit IoError(const std::string& m) : Error("io-error", m) {}
};

}  // namespace mocap
