#pragma once

#include <Eigen/Core>

namespace evstab {

using Rot3 = Eigen::Matrix3d;

/// Unit quaternion, Hamilton convention, components ordered (w, x, y, z).
/// Constructors normalize; inputs further than 1e-3 from unit norm are
/// rejected with NonUnitQuaternion.
struct Quat {
  double w = 1.0, x = 0.0, y = 0.0, z = 0.0;

  Quat() = default;
  Quat(double w, double x, double y, double z);

  static Quat identity() { return Quat(); }
  /// exp(axis*angle/2): rotation of `angle` radians about a unit axis.
  static Quat from_axis_angle(const Eigen::Vector3d& axis, double angle);
  /// Quaternion exponential of the rotation vector r (angle*axis).
  static Quat exp(const Eigen::Vector3d& r);

  double norm() const;
  Quat normalized() const;
  Quat conj() const { return Quat(w, -x, -y, -z); }
  Eigen::Vector3d vec() const { return {x, y, z}; }
  double dot(const Quat& o) const { return w * o.w + x * o.x + y * o.y + z * o.z; }

  /// Rotation vector (angle*axis) of this quaternion; inverse of exp().
  Eigen::Vector3d log() const;

  /// Rotate a 3-vector by this quaternion.
  Eigen::Vector3d rotate(const Eigen::Vector3d& v) const;

  /// Angle in radians between the rotations of *this and o (sign-insensitive).
  double angle_to(const Quat& o) const;
};

Rot3 quat_to_rot(const Quat& q);
Quat quat_mul(const Quat& a, const Quat& b);
Quat quat_conj(const Quat& q);
/// Shortest-arc spherical interpolation; s in [0,1].
Quat quat_slerp(const Quat& a, const Quat& b, double s);

inline Quat operator*(const Quat& a, const Quat& b) { return quat_mul(a, b); }

bool is_rotation_matrix(const Rot3& R, double tol = 1e-9);

}  // namespace evstab
