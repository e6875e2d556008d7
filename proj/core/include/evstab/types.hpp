#pragma once

#include <Eigen/Core>

#include "evstab/quat.hpp"

namespace evstab {

/// One brightness-change report. Coordinates are real-valued so warped
/// events keep sub-pixel precision; raw sensor events land on integers.
struct Event {
  double t = 0;   // seconds
  double x = 0;   // pixels
  double y = 0;   // pixels
  int p = 1;      // polarity, +1 or -1

  Eigen::Vector2d pos() const { return {x, y}; }
};

struct ImuSample {
  double t = 0;              // seconds
  Eigen::Vector3d accel;     // m/s^2, specific force in body frame
  Eigen::Vector3d gyro;      // rad/s, body frame
};

struct PoseSample {
  double t = 0;
  Eigen::Vector3d position;  // meters, world frame
  Quat orientation;          // body-to-world
};

}  // namespace evstab
