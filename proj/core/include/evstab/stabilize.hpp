#pragma once

#include <vector>

#include <Eigen/Core>

#include "evstab/camera.hpp"
#include "evstab/image_grid.hpp"
#include "evstab/quat.hpp"
#include "evstab/types.hpp"

namespace evstab {

/// Per-pixel undistortion map: integer raw pixel -> undistorted sub-pixel
/// coordinate. With zero distortion the map is the identity.
struct UndistortLut {
  int width = 0;
  int height = 0;
  bool identity = true;
  std::vector<double> ux, uy;  // row-major, width*height each

  /// Bilinear interpolation of the map; (x, y) must lie inside the sensor.
  Eigen::Vector2d at(double x, double y) const;
};

/// Iterative inversion of the plumb-bob model at every pixel (fixed point,
/// 20 iterations, tolerance 1e-10). Throws DivergentUndistortion when any
/// pixel fails to converge — a sign of implausible coefficients.
UndistortLut build_undistort_lut(const CameraModel& c);

/// Reference orientation and saccade bookkeeping.
struct StabilizerState {
  Quat q_ref;
  double threshold_px = 0;  // default W/6, set by make_stabilizer_state
  int saccade_count = 0;
  bool has_ref = false;
};

StabilizerState make_stabilizer_state(const CameraModel& c, double threshold_px = -1.0);

/// H = K R(q*) K^-1 with q* = q_ref' q_C, mapping current-view undistorted
/// pixels into the reference view.
Eigen::Matrix3d stabilization_homography(const CameraModel& c, const Quat& q_ref,
                                         const Quat& q_C);

/// Undistort via the LUT, then rotate into the reference view. Keeps t and
/// p; output coordinates are real-valued and may land outside the sensor —
/// callers filter on bounds.
Event stabilize_event(const Event& e, const Quat& q_C, const StabilizerState& state,
                      const CameraModel& c, const UndistortLut& lut);

/// Batch form: one attitude-interpolated q* per event, amortized over a
/// monotone time cursor. Appends to `out`.
class AttitudeTrack;
void stabilize_events(const std::vector<Event>& events, const AttitudeTrack& track,
                      const StabilizerState& state, const CameraModel& c,
                      const UndistortLut& lut, std::vector<Event>& out);

/// Inverse-warp the frame into the reference view: for each output pixel,
/// apply H^-1 then the forward distortion, and sample bilinearly. Pixels
/// that fall outside the source are 0; `mask` (if given) is 1 on valid
/// output pixels and 0 elsewhere.
ImageGrid stabilize_frame(const ImageGrid& img, const Quat& q_C, const StabilizerState& state,
                          const CameraModel& c, const UndistortLut& lut,
                          ImageGrid* mask = nullptr);

/// Displacement of the warped principal point from (cx, cy), in pixels.
double principal_point_displacement(const CameraModel& c, const Quat& q_ref, const Quat& q_C);

/// Reset the reference to q_C when the warped principal point has moved
/// strictly more than threshold_px. Returns true on reset.
bool maybe_saccade(StabilizerState& state, const Quat& q_C, const CameraModel& c);

}  // namespace evstab
