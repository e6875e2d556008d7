#pragma once

#include <vector>

#include "evstab/quat.hpp"
#include "evstab/types.hpp"

namespace evstab {

enum class AttitudeSource { GroundTruth, ImuFilter };

/// Time-indexed camera orientation q_C(t), queried by slerp.
///
/// Orientations are stored already re-expressed in the camera frame
/// (q_C = q_o q_I q_o'); q_o is kept only for reference.
class AttitudeTrack {
 public:
  AttitudeTrack() = default;
  /// Takes ownership; enforces >= 2 samples, strictly increasing t, and
  /// hemisphere continuity (q[i] is flipped so dot(q[i-1], q[i]) >= 0).
  AttitudeTrack(std::vector<double> times, std::vector<Quat> quats, AttitudeSource source,
                const Quat& q_o = Quat::identity());

  /// Slerp between bracketing samples. Queries up to kExtrapolationTol
  /// outside [t_first, t_last] clamp to the nearest endpoint; farther
  /// queries throw OutOfRange.
  Quat at(double t) const;

  std::size_t size() const { return t_.size(); }
  double t_first() const { return t_.front(); }
  double t_last() const { return t_.back(); }
  const std::vector<double>& times() const { return t_; }
  const std::vector<Quat>& quats() const { return q_; }
  AttitudeSource source() const { return source_; }
  const Quat& q_o() const { return q_o_; }

  static constexpr double kExtrapolationTol = 0.010;  // seconds

 private:
  std::vector<double> t_;
  std::vector<Quat> q_;
  AttitudeSource source_ = AttitudeSource::GroundTruth;
  Quat q_o_;
};

/// Re-express an IMU-frame orientation in the camera frame: q_o q_I q_o'.
Quat imu_to_camera(const Quat& q_I, const Quat& q_o);

/// Camera attitude from a pose trajectory; positions are discarded.
AttitudeTrack from_poses(const std::vector<PoseSample>& poses, const Quat& q_o = Quat::identity());

/// Gyro integration q <- q * exp(w_avg dt) (trapezoidal gyro average) with a
/// slerp tilt correction toward the accelerometer gravity direction, weight
/// `gain` per sample. A stationary sensor reads accel = (0, 0, +9.81): body
/// +z up. Initial tilt comes from the first accel sample; yaw starts at zero
/// and is unobservable, so it drifts with the gyro bias.
AttitudeTrack fuse_imu(const std::vector<ImuSample>& samples, double gain,
                       const Quat& q_o = Quat::identity());

}  // namespace evstab
