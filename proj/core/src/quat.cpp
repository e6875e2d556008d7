#include "evstab/quat.hpp"

#include <Eigen/Dense>

#include <cmath>

#include "evstab/errors.hpp"

namespace evstab {

namespace {
constexpr double kUnitTol = 1e-3;     // reject beyond this
constexpr double kRenormTol = 1e-6;   // silently renormalize within this
}  // namespace

Quat::Quat(double w_, double x_, double y_, double z_) : w(w_), x(x_), y(y_), z(z_) {
  const double n = norm();
  if (std::abs(n - 1.0) > kUnitTol)
    throw NonUnitQuaternion("quaternion norm " + std::to_string(n) + " deviates from 1 by more than 1e-3");
  // only renormalize beyond kRenormTol so unit inputs keep their exact bits
  // (sign flips and conjugation must be lossless)
  if (std::abs(n - 1.0) > kRenormTol) {
    w /= n;
    x /= n;
    y /= n;
    z /= n;
  }
}

double Quat::norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }

Quat Quat::normalized() const {
  Quat q;
  const double n = norm();
  q.w = w / n;
  q.x = x / n;
  q.y = y / n;
  q.z = z / n;
  return q;
}

Quat Quat::from_axis_angle(const Eigen::Vector3d& axis, double angle) {
  const Eigen::Vector3d u = axis.normalized();
  const double h = 0.5 * angle;
  const double s = std::sin(h);
  return Quat(std::cos(h), s * u.x(), s * u.y(), s * u.z());
}

Quat Quat::exp(const Eigen::Vector3d& r) {
  const double angle = r.norm();
  if (angle < 1e-14) {
    // first-order expansion keeps exp well behaved near zero
    Quat q;
    q.w = 1.0;
    q.x = 0.5 * r.x();
    q.y = 0.5 * r.y();
    q.z = 0.5 * r.z();
    return q.normalized();
  }
  return from_axis_angle(r / angle, angle);
}

Eigen::Vector3d Quat::log() const {
  const double vn = std::sqrt(x * x + y * y + z * z);
  if (vn < 1e-14) return Eigen::Vector3d::Zero();
  const double angle = 2.0 * std::atan2(vn, w);
  return Eigen::Vector3d(x, y, z) * (angle / vn);
}

Eigen::Vector3d Quat::rotate(const Eigen::Vector3d& v) const {
  // v' = v + 2*u x (u x v + w*v), u = (x,y,z)
  const Eigen::Vector3d u(x, y, z);
  const Eigen::Vector3d t = 2.0 * u.cross(v);
  return v + w * t + u.cross(t);
}

double Quat::angle_to(const Quat& o) const {
  const double d = std::min(1.0, std::abs(dot(o)));
  return 2.0 * std::acos(d);
}

Rot3 quat_to_rot(const Quat& q_in) {
  const double n = q_in.norm();
  if (std::abs(n - 1.0) > kUnitTol)
    throw NonUnitQuaternion("quat_to_rot: norm deviates from 1 by more than 1e-3");
  Quat q = q_in;
  if (std::abs(n - 1.0) > kRenormTol) q = q_in.normalized();

  const double w = q.w, x = q.x, y = q.y, z = q.z;
  Rot3 R;
  R << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
       2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
       2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return R;
}

Quat quat_mul(const Quat& a, const Quat& b) {
  Quat q;
  q.w = a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z;
  q.x = a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y;
  q.y = a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x;
  q.z = a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w;
  return q.normalized();
}

Quat quat_conj(const Quat& q) { return q.conj(); }

Quat quat_slerp(const Quat& a, const Quat& b_in, double s) {
  Quat b = b_in;
  double d = a.dot(b);
  if (d < 0.0) {  // shortest arc
    b.w = -b.w;
    b.x = -b.x;
    b.y = -b.y;
    b.z = -b.z;
    d = -d;
  }
  if (d > 1.0 - 1e-12) {
    // nearly parallel: linear blend then renormalize
    Quat q;
    q.w = a.w + s * (b.w - a.w);
    q.x = a.x + s * (b.x - a.x);
    q.y = a.y + s * (b.y - a.y);
    q.z = a.z + s * (b.z - a.z);
    return q.normalized();
  }
  const double th = std::acos(d);
  const double sa = std::sin((1.0 - s) * th) / std::sin(th);
  const double sb = std::sin(s * th) / std::sin(th);
  Quat q;
  q.w = sa * a.w + sb * b.w;
  q.x = sa * a.x + sb * b.x;
  q.y = sa * a.y + sb * b.y;
  q.z = sa * a.z + sb * b.z;
  return q.normalized();
}

bool is_rotation_matrix(const Rot3& R, double tol) {
  const Rot3 err = R.transpose() * R - Rot3::Identity();
  return err.cwiseAbs().maxCoeff() <= tol && std::abs(R.determinant() - 1.0) <= tol;
}

}  // namespace evstab
