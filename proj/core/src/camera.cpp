#include "evstab/camera.hpp"

#include "evstab/errors.hpp"

namespace evstab {

CameraModel::CameraModel(double fx_, double fy_, double cx_, double cy_, int width_, int height_,
                         double k1_, double k2_, double p1_, double p2_, double k3_)
    : fx(fx_), fy(fy_), cx(cx_), cy(cy_), k1(k1_), k2(k2_), k3(k3_), p1(p1_), p2(p2_),
      width(width_), height(height_) {
  if (fx <= 0 || fy <= 0) throw InvalidCalibration("focal lengths must be positive");
  if (cx < 0 || cx >= width || cy < 0 || cy >= height)
    throw InvalidCalibration("principal point outside the sensor");
}

Eigen::Matrix3d CameraModel::K() const {
  Eigen::Matrix3d k;
  k << fx, 0, cx, 0, fy, cy, 0, 0, 1;
  return k;
}

Eigen::Matrix3d CameraModel::K_inv() const {
  Eigen::Matrix3d k;
  k << 1.0 / fx, 0, -cx / fx, 0, 1.0 / fy, -cy / fy, 0, 0, 1;
  return k;
}

Eigen::Vector2d pixel_to_normalized(const CameraModel& c, const Eigen::Vector2d& x_px) {
  return {(x_px.x() - c.cx) / c.fx, (x_px.y() - c.cy) / c.fy};
}

Eigen::Vector2d normalized_to_pixel(const CameraModel& c, const Eigen::Vector2d& x_n) {
  return {c.fx * x_n.x() + c.cx, c.fy * x_n.y() + c.cy};
}

Eigen::Vector2d distort_normalized(const CameraModel& c, const Eigen::Vector2d& x_n) {
  const double x = x_n.x(), y = x_n.y();
  const double r2 = x * x + y * y;
  const double radial = 1.0 + r2 * (c.k1 + r2 * (c.k2 + r2 * c.k3));
  const double xd = x * radial + 2.0 * c.p1 * x * y + c.p2 * (r2 + 2.0 * x * x);
  const double yd = y * radial + c.p1 * (r2 + 2.0 * y * y) + 2.0 * c.p2 * x * y;
  return {xd, yd};
}

Eigen::Vector2d distort_to_pixel(const CameraModel& c, const Eigen::Vector2d& x_n) {
  return normalized_to_pixel(c, distort_normalized(c, x_n));
}

}  // namespace evstab
