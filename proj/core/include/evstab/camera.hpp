#pragma once

#include <Eigen/Core>

namespace evstab {

/// Pinhole intrinsics with plumb-bob (radial-tangential) distortion.
struct CameraModel {
  double fx = 0, fy = 0;
  double cx = 0, cy = 0;
  double k1 = 0, k2 = 0, k3 = 0;
  double p1 = 0, p2 = 0;
  int width = 0, height = 0;

  CameraModel() = default;
  CameraModel(double fx, double fy, double cx, double cy, int width, int height,
              double k1 = 0, double k2 = 0, double p1 = 0, double p2 = 0, double k3 = 0);

  bool has_distortion() const {
    return k1 != 0 || k2 != 0 || k3 != 0 || p1 != 0 || p2 != 0;
  }
  bool in_bounds(double x, double y) const {
    return x >= 0.0 && x <= width - 1.0 && y >= 0.0 && y <= height - 1.0;
  }
  bool in_bounds(const Eigen::Vector2d& p) const { return in_bounds(p.x(), p.y()); }

  Eigen::Matrix3d K() const;
  Eigen::Matrix3d K_inv() const;
};

/// Pinhole-only pixel -> normalized coordinates (ignores distortion).
Eigen::Vector2d pixel_to_normalized(const CameraModel& c, const Eigen::Vector2d& x_px);
/// Pinhole-only normalized -> pixel coordinates (ignores distortion).
Eigen::Vector2d normalized_to_pixel(const CameraModel& c, const Eigen::Vector2d& x_n);

/// Apply the plumb-bob distortion model to normalized coordinates.
Eigen::Vector2d distort_normalized(const CameraModel& c, const Eigen::Vector2d& x_n);
/// Forward-project an undistorted normalized point to a raw (distorted) pixel.
Eigen::Vector2d distort_to_pixel(const CameraModel& c, const Eigen::Vector2d& x_n);

}  // namespace evstab
