#include "evstab/attitude.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

#include "evstab/errors.hpp"

namespace evstab {

namespace {

// Shortest-arc rotation taking unit vector u onto unit vector v.
Quat rotation_between(const Eigen::Vector3d& u, const Eigen::Vector3d& v) {
  const double d = u.dot(v);
  const Eigen::Vector3d c = u.cross(v);
  const double cn = c.norm();
  if (cn < 1e-14) {
    if (d > 0) return Quat::identity();
    // antiparallel: pick any axis orthogonal to u
    Eigen::Vector3d axis = u.cross(Eigen::Vector3d::UnitX());
    if (axis.norm() < 1e-6) axis = u.cross(Eigen::Vector3d::UnitY());
    return Quat::from_axis_angle(axis.normalized(), M_PI);
  }
  const double angle = std::atan2(cn, d);
  return Quat::from_axis_angle(c / cn, angle);
}

}  // namespace

AttitudeTrack::AttitudeTrack(std::vector<double> times, std::vector<Quat> quats,
                             AttitudeSource source, const Quat& q_o)
    : t_(std::move(times)), q_(std::move(quats)), source_(source), q_o_(q_o) {
  if (t_.size() != q_.size()) throw LengthMismatch("times/quats size mismatch");
  if (t_.size() < 2) throw InsufficientSamples("attitude track needs >= 2 samples");
  for (std::size_t i = 1; i < t_.size(); ++i) {
    if (!(t_[i] > t_[i - 1]))
      throw NonMonotonicTimestamps("attitude sample times must be strictly increasing");
    if (q_[i - 1].dot(q_[i]) < 0) {
      q_[i].w = -q_[i].w;
      q_[i].x = -q_[i].x;
      q_[i].y = -q_[i].y;
      q_[i].z = -q_[i].z;
    }
  }
}

Quat AttitudeTrack::at(double t) const {
  if (t_.empty()) throw InsufficientSamples("empty attitude track");
  if (t < t_.front()) {
    if (t_.front() - t > kExtrapolationTol)
      throw OutOfRange("attitude query before track start");
    return q_.front();
  }
  if (t >= t_.back()) {
    if (t - t_.back() > kExtrapolationTol) throw OutOfRange("attitude query after track end");
    return q_.back();
  }
  const auto it = std::upper_bound(t_.begin(), t_.end(), t);
  const std::size_t i = static_cast<std::size_t>(it - t_.begin());
  const double s = (t - t_[i - 1]) / (t_[i] - t_[i - 1]);
  return quat_slerp(q_[i - 1], q_[i], s);
}

Quat imu_to_camera(const Quat& q_I, const Quat& q_o) {
  return quat_mul(quat_mul(q_o, q_I), quat_conj(q_o));
}

AttitudeTrack from_poses(const std::vector<PoseSample>& poses, const Quat& q_o) {
  if (poses.size() < 2) throw InsufficientSamples("from_poses needs >= 2 poses");
  std::vector<double> t;
  std::vector<Quat> q;
  t.reserve(poses.size());
  q.reserve(poses.size());
  for (const PoseSample& p : poses) {
    if (!t.empty() && p.t <= t.back()) continue;  // drop duplicate timestamps
    t.push_back(p.t);
    q.push_back(imu_to_camera(p.orientation, q_o));
  }
  return AttitudeTrack(std::move(t), std::move(q), AttitudeSource::GroundTruth, q_o);
}

AttitudeTrack fuse_imu(const std::vector<ImuSample>& samples, double gain, const Quat& q_o) {
  if (samples.size() < 2) throw InsufficientSamples("fuse_imu needs >= 2 samples");
  if (gain < 0.0 || gain > 1.0) throw InvalidConfig("fuse_imu gain must be in [0,1]");

  const Eigen::Vector3d up = Eigen::Vector3d::UnitZ();

  // Initial tilt from the first accelerometer reading; yaw = 0.
  Quat q = Quat::identity();
  {
    const double n = samples.front().accel.norm();
    if (n > 1e-9) q = rotation_between(samples.front().accel / n, up);
  }

  std::vector<double> t;
  std::vector<Quat> out;
  t.reserve(samples.size());
  out.reserve(samples.size());
  t.push_back(samples.front().t);
  out.push_back(imu_to_camera(q, q_o));

  for (std::size_t i = 1; i < samples.size(); ++i) {
    const ImuSample& a = samples[i - 1];
    const ImuSample& b = samples[i];
    const double dt = b.t - a.t;
    if (!(dt > 0)) continue;

    const Eigen::Vector3d w_avg = 0.5 * (a.gyro + b.gyro);
    q = quat_mul(q, Quat::exp(w_avg * dt));

    if (gain > 0.0) {
      const double an = b.accel.norm();
      if (an > 1e-9) {
        const Eigen::Vector3d up_est = q.rotate(b.accel / an);
        const Quat corr = rotation_between(up_est, up);
        q = quat_mul(quat_slerp(Quat::identity(), corr, gain), q);
      }
    }

    t.push_back(b.t);
    out.push_back(imu_to_camera(q, q_o));
  }

  if (t.size() < 2) throw InsufficientSamples("fuse_imu needs >= 2 distinct timestamps");
  return AttitudeTrack(std::move(t), std::move(out), AttitudeSource::ImuFilter, q_o);
}

}  // namespace evstab
