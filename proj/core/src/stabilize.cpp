#include "evstab/stabilize.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "evstab/attitude.hpp"
#include "evstab/errors.hpp"

namespace evstab {

namespace {

constexpr double kInvTol = 1e-10;
constexpr int kInvIters = 20;
constexpr double kFarAway = 1e9;  // sentinel for points that cannot project

}  // namespace

Eigen::Vector2d UndistortLut::at(double x, double y) const {
  int x0 = static_cast<int>(x);
  int y0 = static_cast<int>(y);
  if (x0 >= width - 1) x0 = width - 2;
  if (y0 >= height - 1) y0 = height - 2;
  if (x0 < 0) x0 = 0;
  if (y0 < 0) y0 = 0;
  const double ax = x - x0;
  const double ay = y - y0;
  const std::size_t i00 = static_cast<std::size_t>(y0) * width + x0;
  const std::size_t i01 = i00 + width;
  const double wx0 = 1 - ax, wy0 = 1 - ay;
  const double u = wy0 * (wx0 * ux[i00] + ax * ux[i00 + 1]) +
                   ay * (wx0 * ux[i01] + ax * ux[i01 + 1]);
  const double v = wy0 * (wx0 * uy[i00] + ax * uy[i00 + 1]) +
                   ay * (wx0 * uy[i01] + ax * uy[i01 + 1]);
  return {u, v};
}

UndistortLut build_undistort_lut(const CameraModel& c) {
  UndistortLut lut;
  lut.width = c.width;
  lut.height = c.height;
  const std::size_t n = static_cast<std::size_t>(c.width) * c.height;
  lut.ux.resize(n);
  lut.uy.resize(n);

  if (!c.has_distortion()) {
    lut.identity = true;
    for (int y = 0; y < c.height; ++y)
      for (int x = 0; x < c.width; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * c.width + x;
        lut.ux[i] = x;
        lut.uy[i] = y;
      }
    return lut;
  }

  lut.identity = false;
  for (int py = 0; py < c.height; ++py) {
    for (int px = 0; px < c.width; ++px) {
      const double xd = (px - c.cx) / c.fx;
      const double yd = (py - c.cy) / c.fy;
      double x = xd, y = yd;
      bool converged = false;
      for (int it = 0; it < kInvIters; ++it) {
        const double r2 = x * x + y * y;
        const double radial = 1.0 + r2 * (c.k1 + r2 * (c.k2 + r2 * c.k3));
        const double tx = 2.0 * c.p1 * x * y + c.p2 * (r2 + 2.0 * x * x);
        const double ty = c.p1 * (r2 + 2.0 * y * y) + 2.0 * c.p2 * x * y;
        const double xn = (xd - tx) / radial;
        const double yn = (yd - ty) / radial;
        if (!std::isfinite(xn) || !std::isfinite(yn)) break;
        const double step = std::max(std::abs(xn - x), std::abs(yn - y));
        x = xn;
        y = yn;
        if (step < kInvTol) {
          converged = true;
          break;
        }
      }
      if (!converged)
        throw DivergentUndistortion("undistortion failed to converge at pixel (" +
                                    std::to_string(px) + ", " + std::to_string(py) + ")");
      const std::size_t i = static_cast<std::size_t>(py) * c.width + px;
      lut.ux[i] = c.fx * x + c.cx;
      lut.uy[i] = c.fy * y + c.cy;
    }
  }
  return lut;
}

StabilizerState make_stabilizer_state(const CameraModel& c, double threshold_px) {
  StabilizerState st;
  st.threshold_px = threshold_px > 0 ? threshold_px : c.width / 6.0;
  return st;
}

Eigen::Matrix3d stabilization_homography(const CameraModel& c, const Quat& q_ref,
                                         const Quat& q_C) {
  const Quat q_star = quat_mul(quat_conj(q_ref), q_C);
  return c.K() * quat_to_rot(q_star) * c.K_inv();
}

Event stabilize_event(const Event& e, const Quat& q_C, const StabilizerState& state,
                      const CameraModel& c, const UndistortLut& lut) {
  Event out = e;
  Eigen::Vector2d u = lut.identity ? Eigen::Vector2d(e.x, e.y) : lut.at(e.x, e.y);
  const Quat q_star = quat_mul(quat_conj(state.q_ref), q_C);
  const Eigen::Vector3d v =
      q_star.rotate({(u.x() - c.cx) / c.fx, (u.y() - c.cy) / c.fy, 1.0});
  if (v.z() < 1e-9) {
    out.x = kFarAway;
    out.y = kFarAway;
    return out;
  }
  out.x = c.fx * v.x() / v.z() + c.cx;
  out.y = c.fy * v.y() / v.z() + c.cy;
  return out;
}

void stabilize_events(const std::vector<Event>& events, const AttitudeTrack& track,
                      const StabilizerState& state, const CameraModel& c,
                      const UndistortLut& lut, std::vector<Event>& out) {
  out.reserve(out.size() + events.size());
  const Quat q_ref_conj = quat_conj(state.q_ref);
  for (const Event& e : events) {
    const Quat q_star = quat_mul(q_ref_conj, track.at(e.t));
    Eigen::Vector2d u = lut.identity ? Eigen::Vector2d(e.x, e.y) : lut.at(e.x, e.y);
    const Eigen::Vector3d v =
        q_star.rotate({(u.x() - c.cx) / c.fx, (u.y() - c.cy) / c.fy, 1.0});
    Event s = e;
    if (v.z() < 1e-9) {
      s.x = kFarAway;
      s.y = kFarAway;
    } else {
      s.x = c.fx * v.x() / v.z() + c.cx;
      s.y = c.fy * v.y() / v.z() + c.cy;
    }
    out.push_back(s);
  }
}

ImageGrid stabilize_frame(const ImageGrid& img, const Quat& q_C, const StabilizerState& state,
                          const CameraModel& c, const UndistortLut& lut, ImageGrid* mask) {
  if (img.width != c.width || img.height != c.height)
    throw InvalidConfig("frame size does not match camera model");
  ImageGrid out(img.width, img.height, img.t);
  if (mask) *mask = ImageGrid(img.width, img.height, img.t);

  const Quat q_star = quat_mul(quat_conj(state.q_ref), q_C);
  const Rot3 R_inv = quat_to_rot(quat_conj(q_star));

  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const Eigen::Vector3d v = R_inv * Eigen::Vector3d((x - c.cx) / c.fx, (y - c.cy) / c.fy, 1.0);
      if (v.z() < 1e-9) continue;
      const Eigen::Vector2d xn(v.x() / v.z(), v.y() / v.z());
      const Eigen::Vector2d src = c.has_distortion() ? distort_to_pixel(c, xn)
                                                     : normalized_to_pixel(c, xn);
      if (!img.contains(src.x(), src.y())) continue;
      out.at(x, y) = img.sample(src.x(), src.y());
      if (mask) mask->at(x, y) = 1.0;
    }
  }
  return out;
}

double principal_point_displacement(const CameraModel& c, const Quat& q_ref, const Quat& q_C) {
  const Quat q_star = quat_mul(quat_conj(q_ref), q_C);
  const Eigen::Vector3d v = q_star.rotate(Eigen::Vector3d::UnitZ());
  if (v.z() < 1e-9) return std::numeric_limits<double>::infinity();
  const double dx = c.fx * v.x() / v.z();
  const double dy = c.fy * v.y() / v.z();
  return std::hypot(dx, dy);
}

bool maybe_saccade(StabilizerState& state, const Quat& q_C, const CameraModel& c) {
  if (!state.has_ref) {
    state.q_ref = q_C;
    state.has_ref = true;
    return false;
  }
  if (principal_point_displacement(c, state.q_ref, q_C) > state.threshold_px) {
    state.q_ref = q_C;
    ++state.saccade_count;
    return true;
  }
  return false;
}

}  // namespace evstab
