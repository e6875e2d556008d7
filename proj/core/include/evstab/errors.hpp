#pragma once

#include <stdexcept>
#include <string>

namespace evstab {

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct ParseError : Error {
  ParseError(const std::string& msg, std::size_t line)
      : Error(msg + " (line " + std::to_string(line) + ")"), line(line) {}
  std::size_t line;
};

struct NonMonotonicTimestamps : Error {
  using Error::Error;
};
struct InvalidCalibration : Error {
  using Error::Error;
};
struct UnsupportedFormat : Error {
  using Error::Error;
};
struct TruncatedFile : Error {
  using Error::Error;
};
struct IoError : Error {
  using Error::Error;
};
struct NonUnitQuaternion : Error {
  using Error::Error;
};
struct InsufficientSamples : Error {
  using Error::Error;
};
struct OutOfRange : Error {
  using Error::Error;
};
struct DivergentUndistortion : Error {
  using Error::Error;
};
struct DegenerateWindow : Error {
  using Error::Error;
};
struct NoTexture : Error {
  using Error::Error;
};
struct InsufficientFlow : Error {
  using Error::Error;
};
struct DegenerateGeometry : Error {
  using Error::Error;
};
struct LengthMismatch : Error {
  using Error::Error;
};
struct NoValidTracks : Error {
  using Error::Error;
};
struct PlaneBehindCamera : Error {
  using Error::Error;
};
struct PointNotOnPlane : Error {
  using Error::Error;
};
struct InputMismatch : Error {
  using Error::Error;
};
struct InvalidConfig : Error {
  using Error::Error;
};

}  // namespace evstab
