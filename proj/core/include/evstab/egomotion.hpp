#pragma once

#include <vector>

#include <Eigen/Core>

#include "evstab/camera.hpp"
#include "evstab/optical_flow.hpp"

namespace evstab {

/// Translational block of the feature sensitivity matrix at a normalized
/// image point: flow = A(x) V rho + B(x) w.
Eigen::Matrix<double, 2, 3> sensitivity_A(const Eigen::Vector2d& x);
/// Rotational block of the feature sensitivity matrix.
Eigen::Matrix<double, 2, 3> sensitivity_B(const Eigen::Vector2d& x);

struct VelocityEstimate {
  Eigen::Vector3d V = Eigen::Vector3d::UnitZ();  // unit direction
  double residual = 0;                           // weighted RMS of the final residuals
  std::vector<double> weights;                   // per-sample, in [0,1]
  std::vector<double> inverse_depths;            // up to global scale, clamped positive
  int iterations = 0;
};

struct FullMotionEstimate {
  Eigen::Vector3d V = Eigen::Vector3d::UnitZ();
  Eigen::Vector3d omega = Eigen::Vector3d::Zero();  // rad/s
  double residual = 0;
  std::vector<double> weights;
  int iterations = 0;
};

struct SolverOptions {
  int irls_rounds = 5;      // 0 = plain unweighted least squares
  int gn_iters = 30;
  double gn_tol = 1e-10;    // step tolerance, radians
  double converge_tol = 1e-8;  // full solver: change in V per alternation, radians
  int max_alternations = 50;
  double cond_limit = 1e8;  // degeneracy: sigma1/sigma2 of the constraint matrix
  double flow_floor = 1e-12;
};

/// Unit icosphere vertices after `subdivisions` of an icosahedron
/// (12 / 42 / 162 / 642 vertices for 0..3). Deterministic order; cached.
const std::vector<Eigen::Vector3d>& icosphere_directions(int subdivisions = 3);

/// Translation-only direction solver. Residual per sample is the flow
/// component orthogonal to the predicted translational direction field,
/// r_i = (a_i^perp . f_i)/|a_i| with a_i = A(x_i) V; the cost is minimized
/// over the unit sphere by an icosphere seed plus tangent-plane
/// Gauss-Newton, with Cauchy IRLS reweighting. The sign of V is fixed by a
/// positive-depth vote.
VelocityEstimate erlv_solve(const FlowSet& flows, const CameraModel& c,
                            const SolverOptions& opts = {});

/// Full-motion baseline: alternate a linear (rho, omega) solve against a
/// spherical V update on the omega-compensated flow.
FullMotionEstimate erl_full_solve(const FlowSet& flows, const CameraModel& c,
                                  const SolverOptions& opts = {});

/// Mean angle (degrees) between paired unit directions; pairs whose ground
/// truth speed is below `speed_floor` are excluded (direction undefined).
double mae_angle(const std::vector<Eigen::Vector3d>& estimates,
                 const std::vector<Eigen::Vector3d>& gt_velocities,
                 double speed_floor = 0.01);

}  // namespace evstab
