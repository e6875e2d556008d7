#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "evstab/camera.hpp"
#include "evstab/image_grid.hpp"
#include "evstab/optical_flow.hpp"
#include "evstab/quat.hpp"
#include "evstab/types.hpp"

namespace evstab::sim {

/// amp * sin(2*pi*freq*t + phase)
struct Sinusoid {
  double amp = 0, freq = 0, phase = 0;
  double value(double t) const;
  double deriv(double t) const;
  double accel(double t) const;
};

struct Channel {
  double offset = 0;
  std::vector<Sinusoid> terms;
  double value(double t) const;
  double deriv(double t) const;
  double accel(double t) const;
};

/// Smooth 6-DOF trajectory: world position p(t) plus x-y-z Euler angles
/// composed as q(t) = qz(c) qy(b) qx(a), all channels sums of sinusoids so
/// every derivative is analytic.
struct Trajectory {
  Channel pos[3];
  Channel ang[3];  // radians: a (about x), b (about y), c (about z)
  double t0 = 0, t1 = 10.0;

  Eigen::Vector3d position(double t) const;
  Quat orientation(double t) const;  // body-to-world
  Eigen::Vector3d velocity_world(double t) const;
  Eigen::Vector3d accel_world(double t) const;
  Eigen::Vector3d omega_body(double t) const;  // rad/s
};

enum class TextureKind { Checkerboard, Blobs };

/// One textured plane. The texture is baked into a bitmap at construction
/// so intensity lookups are a bilinear fetch; (u, v) are meters in the
/// plane frame spanned by e_u, e_v around P0.
struct Scene {
  Eigen::Vector3d P0 = {0, 0, 1.5};
  Eigen::Vector3d e_u = {1, 0, 0};
  Eigen::Vector3d e_v = {0, 1, 0};
  Eigen::Vector3d n = {0, 0, 1};
  double extent = 4.0;  // half-extent, m
  TextureKind kind = TextureKind::Blobs;
  unsigned seed = 1;

  int tex_size = 0;
  std::vector<float> tex;
  double background = 0.5;

  double intensity(double u, double v) const;

  /// Soft-edged checkerboard, cell size in meters.
  static Scene checkerboard(double cell_m, double contrast = 0.8, double distance = 1.5);
  /// Sparse smooth blobs from seeded value noise; feature_px controls the
  /// baked blob scale in texels (2048 texels across 2*extent).
  static Scene blobs(unsigned seed, double contrast = 0.55, double distance = 1.5,
                     int feature_px = 24, double coverage = 0.25);

  /// Tilt the plane about its e_u axis (depth gradient across the image).
  void tilt_about_u(double radians);
};

/// Homography taking plane coordinates (u, v, 1) to undistorted homogeneous
/// pixels at time t.
Eigen::Matrix3d plane_to_pixel_h(const Scene& s, const Trajectory& tr, const CameraModel& c,
                                 double t);

/// World point seen at an undistorted pixel; throws PointNotOnPlane when
/// the ray misses the plane or its textured extent.
Eigen::Vector3d plane_point(const Scene& s, const Trajectory& tr, const CameraModel& c, double t,
                            const Eigen::Vector2d& undistorted_px);

/// Undistorted pixel projection of a world point; throws PlaneBehindCamera
/// when the point is behind the camera.
Eigen::Vector2d project_point(const Trajectory& tr, const CameraModel& c, double t,
                              const Eigen::Vector3d& P_w);

/// 2x supersampled perspective render with the lens distortion applied.
ImageGrid render_frame(const Scene& s, const Trajectory& tr, const CameraModel& c, double t);

/// Ideal threshold-crossing event model: per pixel, an event whenever the
/// log intensity moves by `threshold` from its value at the last event,
/// with crossing times linearly interpolated between 100 us micro-steps.
/// Output is globally time-sorted and bit-reproducible for any `jobs`.
std::vector<Event> generate_events(const Scene& s, const Trajectory& tr, const CameraModel& c,
                                   double threshold, double t0, double t1, int jobs = 1);

/// Optional degradations for robustness tests: Gaussian timestamp jitter
/// and uniform salt-and-pepper noise events (rate in events/s over the whole
/// array). Deterministic in `seed`; output is re-sorted.
std::vector<Event> add_noise(std::vector<Event> events, double jitter_sigma, double noise_rate,
                             double t0, double t1, int width, int height, unsigned seed);

/// Analytic flow (px/s) at undistorted pixel points.
FlowSet gt_flow(const Scene& s, const Trajectory& tr, const CameraModel& c, double t,
                const std::vector<Eigen::Vector2d>& points);

struct GtVelocity {
  Eigen::Vector3d dir = Eigen::Vector3d::Zero();  // unit, camera frame (zero if at rest)
  Eigen::Vector3d omega = Eigen::Vector3d::Zero();
  double speed = 0;  // m/s
};
GtVelocity gt_velocity(const Trajectory& tr, double t);

struct ExportConfig {
  std::string dir;
  double threshold = 0.3;
  double frame_rate = 25.0;
  double imu_rate = 200.0;
  double pose_rate = 1000.0;
  unsigned seed = 1;
  int jobs = 1;
  int gtflow_grid = 8;
  double jitter_sigma = 0;
  double noise_rate = 0;
};

/// Writes events.txt, images/ + images.txt, imu.txt, groundtruth.txt,
/// calib.txt, plane.txt, homographies.txt and gtflow/ under cfg.dir.
void export_sequence(const Scene& s, const Trajectory& tr, const CameraModel& c,
                     const ExportConfig& cfg);

struct Preset {
  Scene scene;
  Trajectory traj;
  CameraModel camera;
  double threshold = 0.3;
  std::string name;
};

/// rot-dominant | mixed-6dof | fast-switching | pure-rotation.
Preset make_preset(const std::string& name, unsigned seed);

}  // namespace evstab::sim
