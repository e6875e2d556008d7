#include "evstab/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>
#include <thread>

#include <Eigen/Dense>

#include "evstab/egomotion.hpp"
#include "evstab/errors.hpp"
#include "evstab/io.hpp"
#include "evstab/stabilize.hpp"

namespace evstab::sim {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
constexpr double kGravity = 9.81;
constexpr double kMicroStep = 100e-6;
}  // namespace

double Sinusoid::value(double t) const { return amp * std::sin(kTwoPi * freq * t + phase); }
double Sinusoid::deriv(double t) const {
  return amp * kTwoPi * freq * std::cos(kTwoPi * freq * t + phase);
}
double Sinusoid::accel(double t) const {
  const double w = kTwoPi * freq;
  return -amp * w * w * std::sin(w * t + phase);
}

double Channel::value(double t) const {
  double s = offset;
  for (const auto& term : terms) s += term.value(t);
  return s;
}
double Channel::deriv(double t) const {
  double s = 0;
  for (const auto& term : terms) s += term.deriv(t);
  return s;
}
double Channel::accel(double t) const {
  double s = 0;
  for (const auto& term : terms) s += term.accel(t);
  return s;
}

Eigen::Vector3d Trajectory::position(double t) const {
  return {pos[0].value(t), pos[1].value(t), pos[2].value(t)};
}

Quat Trajectory::orientation(double t) const {
  const Quat qx = Quat::from_axis_angle(Eigen::Vector3d::UnitX(), ang[0].value(t));
  const Quat qy = Quat::from_axis_angle(Eigen::Vector3d::UnitY(), ang[1].value(t));
  const Quat qz = Quat::from_axis_angle(Eigen::Vector3d::UnitZ(), ang[2].value(t));
  return qz * qy * qx;
}

Eigen::Vector3d Trajectory::velocity_world(double t) const {
  return {pos[0].deriv(t), pos[1].deriv(t), pos[2].deriv(t)};
}

Eigen::Vector3d Trajectory::accel_world(double t) const {
  return {pos[0].accel(t), pos[1].accel(t), pos[2].accel(t)};
}

Eigen::Vector3d Trajectory::omega_body(double t) const {
  // q = qz(c) qy(b) qx(a); body rate is the sum of each Euler rate rotated
  // into the body frame by the rotations applied after it.
  const double a = ang[0].value(t), b = ang[1].value(t);
  const double da = ang[0].deriv(t), db = ang[1].deriv(t), dc = ang[2].deriv(t);
  const Eigen::Matrix3d Rxt = Eigen::AngleAxisd(-a, Eigen::Vector3d::UnitX()).toRotationMatrix();
  const Eigen::Matrix3d Ryt = Eigen::AngleAxisd(-b, Eigen::Vector3d::UnitY()).toRotationMatrix();
  return da * Eigen::Vector3d::UnitX() + Rxt * (db * Eigen::Vector3d::UnitY()) +
         Rxt * (Ryt * (dc * Eigen::Vector3d::UnitZ()));
}

double Scene::intensity(double u, double v) const {
  if (std::abs(u) > extent || std::abs(v) > extent || tex_size == 0) return background;
  const double scale = (tex_size - 1) / (2.0 * extent);
  double tu = (u + extent) * scale;
  double tv = (v + extent) * scale;
  tu = std::clamp(tu, 0.0, double(tex_size - 1));
  tv = std::clamp(tv, 0.0, double(tex_size - 1));
  const int iu = std::min(int(tu), tex_size - 2);
  const int iv = std::min(int(tv), tex_size - 2);
  const double fu = tu - iu, fv = tv - iv;
  const float* row0 = tex.data() + size_t(iv) * tex_size + iu;
  const float* row1 = row0 + tex_size;
  return (1 - fv) * ((1 - fu) * row0[0] + fu * row0[1]) +
         fv * ((1 - fu) * row1[0] + fu * row1[1]);
}

namespace {

constexpr int kTexSize = 2048;

void box_blur_rows(std::vector<float>& img, int n, int radius, std::vector<float>& scratch) {
  const double inv = 1.0 / (2 * radius + 1);
  for (int y = 0; y < n; ++y) {
    float* row = img.data() + size_t(y) * n;
    double acc = 0;
    for (int x = -radius; x <= radius; ++x) acc += row[std::clamp(x, 0, n - 1)];
    for (int x = 0; x < n; ++x) {
      scratch[x] = float(acc * inv);
      acc += row[std::min(x + radius + 1, n - 1)] - row[std::max(x - radius, 0)];
    }
    std::copy(scratch.begin(), scratch.begin() + n, row);
  }
}

void transpose(std::vector<float>& img, int n, std::vector<float>& scratch) {
  scratch.resize(img.size());
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) scratch[size_t(x) * n + y] = img[size_t(y) * n + x];
  img.swap(scratch);
}

}  // namespace

Scene Scene::checkerboard(double cell_m, double contrast, double distance) {
  Scene s;
  s.kind = TextureKind::Checkerboard;
  s.P0 = {0, 0, distance};
  s.tex_size = kTexSize;
  s.tex.resize(size_t(kTexSize) * kTexSize);
  // soft edges roughly 1.5 texels wide so event timing interpolates cleanly
  const double texel_m = 2.0 * s.extent / kTexSize;
  const double sharp = cell_m / (3.0 * texel_m);
  for (int iv = 0; iv < kTexSize; ++iv) {
    const double v = -s.extent + (iv + 0.5) * texel_m;
    for (int iu = 0; iu < kTexSize; ++iu) {
      const double u = -s.extent + (iu + 0.5) * texel_m;
      const double g = std::sin(M_PI * u / cell_m) * std::sin(M_PI * v / cell_m);
      s.tex[size_t(iv) * kTexSize + iu] = float(0.5 + 0.5 * contrast * std::tanh(sharp * g));
    }
  }
  return s;
}

Scene Scene::blobs(unsigned seed, double contrast, double distance, int feature_px,
                   double coverage) {
  Scene s;
  s.kind = TextureKind::Blobs;
  s.seed = seed;
  s.P0 = {0, 0, distance};
  s.tex_size = kTexSize;
  s.tex.resize(size_t(kTexSize) * kTexSize);

  std::mt19937 rng(seed);
  for (auto& v : s.tex) v = float((rng() >> 8) * (1.0 / 16777216.0));

  std::vector<float> scratch(kTexSize);
  const int radius = std::max(1, feature_px / 2);
  for (int pass = 0; pass < 3; ++pass) {
    box_blur_rows(s.tex, kTexSize, radius, scratch);
    transpose(s.tex, kTexSize, scratch);
    box_blur_rows(s.tex, kTexSize, radius, scratch);
    transpose(s.tex, kTexSize, scratch);
  }

  // keep the brightest `coverage` fraction as smooth islands on a flat floor
  std::vector<float> sorted = s.tex;
  const size_t lo_idx = size_t((1.0 - coverage) * (sorted.size() - 1));
  const size_t hi_idx = size_t((1.0 - coverage * 0.25) * (sorted.size() - 1));
  std::nth_element(sorted.begin(), sorted.begin() + lo_idx, sorted.end());
  const float lo = sorted[lo_idx];
  std::nth_element(sorted.begin(), sorted.begin() + hi_idx, sorted.end());
  const float hi = std::max(sorted[hi_idx], lo + 1e-6f);

  const float floor = float(0.5 - 0.5 * contrast);
  const float span = float(contrast);
  for (auto& v : s.tex) {
    float x = std::clamp((v - lo) / (hi - lo), 0.0f, 1.0f);
    x = x * x * (3.0f - 2.0f * x);
    v = floor + span * x;
  }
  s.background = floor;
  return s;
}

void Scene::tilt_about_u(double radians) {
  const Eigen::AngleAxisd rot(radians, e_u);
  e_v = rot * e_v;
  n = rot * n;
}

Eigen::Matrix3d plane_to_pixel_h(const Scene& s, const Trajectory& tr, const CameraModel& c,
                                 double t) {
  const Eigen::Matrix3d Rt = quat_to_rot(tr.orientation(t)).transpose();
  const Eigen::Vector3d p = tr.position(t);
  Eigen::Matrix3d M;
  M.col(0) = Rt * s.e_u;
  M.col(1) = Rt * s.e_v;
  M.col(2) = Rt * (s.P0 - p);
  return c.K() * M;
}

namespace {

struct PlaneView {
  // undistorted-pixel ray (x, y, 1) -> plane coords:
  // u = M.row(0)*r / M.row(2)*r, v = M.row(1)*r / M.row(2)*r (in meters),
  // and depth Z = k / (w . r).
  Eigen::Matrix3d M;
  Eigen::Vector3d w;  // camera-frame plane normal
  double k;           // (P0 - p) . n

  static PlaneView at(const Scene& s, const Trajectory& tr, double t) {
    PlaneView pv;
    const Eigen::Vector3d p = tr.position(t);
    const Eigen::Matrix3d Rt = quat_to_rot(tr.orientation(t)).transpose();
    pv.w = Rt * s.n;
    pv.k = (s.P0 - p).dot(s.n);
    const double du = (p - s.P0).dot(s.e_u);
    const double dv = (p - s.P0).dot(s.e_v);
    pv.M.row(0) = du * pv.w.transpose() + pv.k * (Rt * s.e_u).transpose();
    pv.M.row(1) = dv * pv.w.transpose() + pv.k * (Rt * s.e_v).transpose();
    pv.M.row(2) = pv.w.transpose();
    return pv;
  }
};

void check_plane_in_front(const Scene& s, const Trajectory& tr, double t) {
  const Eigen::Vector3d p = tr.position(t);
  const Eigen::Vector3d center_cam = quat_to_rot(tr.orientation(t)).transpose() * (s.P0 - p);
  if (center_cam.z() <= 1e-6)
    throw PlaneBehindCamera("plane center is behind the camera at t=" + std::to_string(t));
}

}  // namespace

Eigen::Vector3d plane_point(const Scene& s, const Trajectory& tr, const CameraModel& c, double t,
                            const Eigen::Vector2d& undistorted_px) {
  const Eigen::Vector2d xn = pixel_to_normalized(c, undistorted_px);
  const PlaneView pv = PlaneView::at(s, tr, t);
  const Eigen::Vector3d r(xn.x(), xn.y(), 1.0);
  const double denom = pv.w.dot(r);
  if (std::abs(denom) < 1e-12) throw PointNotOnPlane("ray parallel to plane");
  const double z = pv.k / denom;
  if (z <= 1e-9) throw PointNotOnPlane("ray leaves the plane behind the camera");
  const Eigen::Vector3d h = pv.M * r;
  const double u = h.x() / h.z(), v = h.y() / h.z();
  if (std::abs(u) > s.extent || std::abs(v) > s.extent)
    throw PointNotOnPlane("ray exits the textured extent");
  return s.P0 + u * s.e_u + v * s.e_v;
}

Eigen::Vector2d project_point(const Trajectory& tr, const CameraModel& c, double t,
                              const Eigen::Vector3d& P_w) {
  const Eigen::Vector3d pc = quat_to_rot(tr.orientation(t)).transpose() * (P_w - tr.position(t));
  if (pc.z() <= 1e-9) throw PlaneBehindCamera("point is behind the camera");
  return normalized_to_pixel(c, {pc.x() / pc.z(), pc.y() / pc.z()});
}

ImageGrid render_frame(const Scene& s, const Trajectory& tr, const CameraModel& c, double t) {
  check_plane_in_front(s, tr, t);
  const PlaneView pv = PlaneView::at(s, tr, t);
  const UndistortLut lut = build_undistort_lut(c);
  ImageGrid img(c.width, c.height, t);
  static const double offs[2] = {-0.25, 0.25};
  for (int y = 0; y < c.height; ++y) {
    for (int x = 0; x < c.width; ++x) {
      double acc = 0;
      for (double oy : offs) {
        for (double ox : offs) {
          const Eigen::Vector2d und = lut.at(x + ox, y + oy);
          const Eigen::Vector2d xn = pixel_to_normalized(c, und);
          const Eigen::Vector3d r(xn.x(), xn.y(), 1.0);
          const double denom = pv.w.dot(r);
          double value = s.background;
          if (std::abs(denom) > 1e-12 && pv.k / denom > 1e-9) {
            const Eigen::Vector3d h = pv.M * r;
            value = s.intensity(h.x() / h.z(), h.y() / h.z());
          }
          acc += value;
        }
      }
      img.at(x, y) = acc * 0.25;
    }
  }
  return img;
}

namespace {

struct EventOrder {
  bool operator()(const Event& a, const Event& b) const {
    if (a.t != b.t) return a.t < b.t;
    if (a.y != b.y) return a.y < b.y;
    return a.x < b.x;
  }
};

void event_band(const Scene& s, const Trajectory& tr, double threshold, double t0, double t1,
                int width, int y_begin, int y_end, const std::vector<double>& ray_x,
                const std::vector<double>& ray_y, std::vector<Event>& out) {
  const int n = (y_end - y_begin) * width;
  if (n <= 0) return;
  const size_t base = size_t(y_begin) * width;

  std::vector<double> log_ref(n), log_prev(n);
  const double k_step = threshold;

  const auto sample_band = [&](const PlaneView& pv, std::vector<double>& dst) {
    const double m00 = pv.M(0, 0), m01 = pv.M(0, 1), m02 = pv.M(0, 2);
    const double m10 = pv.M(1, 0), m11 = pv.M(1, 1), m12 = pv.M(1, 2);
    const double m20 = pv.M(2, 0), m21 = pv.M(2, 1), m22 = pv.M(2, 2);
    for (int i = 0; i < n; ++i) {
      const double rx = ray_x[base + i], ry = ray_y[base + i];
      const double hw = m20 * rx + m21 * ry + m22;
      double value = s.background;
      if (std::abs(hw) > 1e-12 && pv.k / hw > 1e-9) {
        const double inv = 1.0 / hw;
        value = s.intensity((m00 * rx + m01 * ry + m02) * inv, (m10 * rx + m11 * ry + m12) * inv);
      }
      dst[i] = std::log(std::max(value, 1e-3));
    }
  };

  std::vector<double> log_cur(n);
  sample_band(PlaneView::at(s, tr, t0), log_prev);
  log_ref = log_prev;

  const long steps = std::lround(std::ceil((t1 - t0) / kMicroStep - 1e-9));
  for (long step = 1; step <= steps; ++step) {
    const double tb = std::min(t0 + step * kMicroStep, t1);
    const double ta = t0 + (step - 1) * kMicroStep;
    sample_band(PlaneView::at(s, tr, tb), log_cur);
    for (int i = 0; i < n; ++i) {
      const double cur = log_cur[i];
      double ref = log_ref[i];
      if (cur - ref < k_step && ref - cur < k_step) {
        log_prev[i] = cur;
        continue;
      }
      const double prev = log_prev[i];
      const double slope = cur - prev;
      const int x = int((base + i) % size_t(width));
      const int y = int((base + i) / size_t(width));
      while (cur - ref >= k_step) {
        const double level = ref + k_step;
        double tc = tb;
        if (std::abs(slope) > 1e-15) tc = ta + (tb - ta) * std::clamp((level - prev) / slope, 0.0, 1.0);
        out.push_back(Event{tc, double(x), double(y), +1});
        ref = level;
      }
      while (ref - cur >= k_step) {
        const double level = ref - k_step;
        double tc = tb;
        if (std::abs(slope) > 1e-15) tc = ta + (tb - ta) * std::clamp((level - prev) / slope, 0.0, 1.0);
        out.push_back(Event{tc, double(x), double(y), -1});
        ref = level;
      }
      log_ref[i] = ref;
      log_prev[i] = cur;
    }
  }
}

}  // namespace

std::vector<Event> generate_events(const Scene& s, const Trajectory& tr, const CameraModel& c,
                                   double threshold, double t0, double t1, int jobs) {
  if (threshold <= 0) throw InvalidConfig("event threshold must be positive");
  if (t1 < t0) throw InvalidConfig("event span is reversed");
  check_plane_in_front(s, tr, t0);

  const int w = c.width, h = c.height;
  const UndistortLut lut = build_undistort_lut(c);
  std::vector<double> ray_x(size_t(w) * h), ray_y(size_t(w) * h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Eigen::Vector2d xn = pixel_to_normalized(c, lut.at(x, y));
      ray_x[size_t(y) * w + x] = xn.x();
      ray_y[size_t(y) * w + x] = xn.y();
    }
  }

  jobs = std::clamp(jobs, 1, h);
  std::vector<std::vector<Event>> bands(jobs);
  std::vector<std::thread> threads;
  threads.reserve(jobs);
  for (int j = 0; j < jobs; ++j) {
    const int y_begin = h * j / jobs;
    const int y_end = h * (j + 1) / jobs;
    threads.emplace_back([&, j, y_begin, y_end] {
      event_band(s, tr, threshold, t0, t1, w, y_begin, y_end, ray_x, ray_y, bands[j]);
    });
  }
  for (auto& th : threads) th.join();

  std::vector<Event> events;
  size_t total = 0;
  for (const auto& b : bands) total += b.size();
  events.reserve(total);
  for (auto& b : bands) events.insert(events.end(), b.begin(), b.end());
  std::stable_sort(events.begin(), events.end(), EventOrder{});
  return events;
}

std::vector<Event> add_noise(std::vector<Event> events, double jitter_sigma, double noise_rate,
                             double t0, double t1, int width, int height, unsigned seed) {
  std::mt19937 rng(seed);
  const auto uniform = [&rng](double lo, double hi) {
    return lo + (hi - lo) * ((rng() >> 8) * (1.0 / 16777216.0));
  };
  if (jitter_sigma > 0) {
    std::normal_distribution<double> jitter(0.0, jitter_sigma);
    for (auto& e : events) e.t = std::clamp(e.t + jitter(rng), t0, t1);
  }
  if (noise_rate > 0) {
    const long n = std::lround(noise_rate * (t1 - t0));
    events.reserve(events.size() + n);
    for (long i = 0; i < n; ++i) {
      Event e;
      e.t = uniform(t0, t1);
      e.x = double(int(uniform(0, width)));
      e.y = double(int(uniform(0, height)));
      e.p = rng() & 1 ? +1 : -1;
      events.push_back(e);
    }
  }
  std::stable_sort(events.begin(), events.end(), EventOrder{});
  return events;
}

FlowSet gt_flow(const Scene& s, const Trajectory& tr, const CameraModel& c, double t,
                const std::vector<Eigen::Vector2d>& points) {
  const PlaneView pv = PlaneView::at(s, tr, t);
  const GtVelocity gv = gt_velocity(tr, t);
  const Eigen::Vector3d V = gv.dir * gv.speed;

  FlowSet fs;
  fs.dt = 0;
  fs.source_kind = FlowSource::Frame;
  fs.samples.reserve(points.size());
  for (const auto& px : points) {
    const Eigen::Vector2d xn = pixel_to_normalized(c, px);
    const Eigen::Vector3d r(xn.x(), xn.y(), 1.0);
    const double denom = pv.w.dot(r);
    if (std::abs(denom) < 1e-12) throw PointNotOnPlane("ray parallel to plane");
    const double z = pv.k / denom;
    if (z <= 1e-9) throw PointNotOnPlane("ray leaves the plane behind the camera");
    const Eigen::Vector3d h = pv.M * r;
    if (std::abs(h.x() / h.z()) > s.extent || std::abs(h.y() / h.z()) > s.extent)
      throw PointNotOnPlane("ray exits the textured extent");
    const Eigen::Vector2d fn =
        sensitivity_A(xn) * (V / z) + sensitivity_B(xn) * gv.omega;
    FlowSample fsmp;
    fsmp.x = px;
    fsmp.f = {fn.x() * c.fx, fn.y() * c.fy};
    fsmp.quality = 1.0;
    fs.samples.push_back(fsmp);
  }
  return fs;
}

GtVelocity gt_velocity(const Trajectory& tr, double t) {
  GtVelocity gv;
  gv.omega = tr.omega_body(t);
  const Eigen::Vector3d v_cam = quat_to_rot(tr.orientation(t)).transpose() * tr.velocity_world(t);
  gv.speed = v_cam.norm();
  if (gv.speed > 0) gv.dir = v_cam / gv.speed;
  return gv;
}

namespace {

std::vector<ImuSample> synth_imu(const Trajectory& tr, double rate) {
  std::vector<ImuSample> out;
  const long n = std::lround(std::floor((tr.t1 - tr.t0) * rate)) + 1;
  out.reserve(n);
  for (long i = 0; i < n; ++i) {
    const double t = tr.t0 + i / rate;
    ImuSample s;
    s.t = t;
    s.gyro = tr.omega_body(t);
    s.accel = quat_to_rot(tr.orientation(t)).transpose() *
              (tr.accel_world(t) + Eigen::Vector3d(0, 0, kGravity));
    out.push_back(s);
  }
  return out;
}

std::vector<PoseSample> synth_poses(const Trajectory& tr, double rate) {
  std::vector<PoseSample> out;
  const long n = std::lround(std::floor((tr.t1 - tr.t0) * rate)) + 1;
  out.reserve(n);
  for (long i = 0; i < n; ++i) {
    const double t = tr.t0 + i / rate;
    out.push_back(PoseSample{t, tr.position(t), tr.orientation(t)});
  }
  return out;
}

}  // namespace

void export_sequence(const Scene& s, const Trajectory& tr, const CameraModel& c,
                     const ExportConfig& cfg) {
  namespace fs = std::filesystem;
  if (cfg.dir.empty()) throw InvalidConfig("export directory is empty");
  fs::create_directories(cfg.dir);
  fs::create_directories(cfg.dir + "/images");
  fs::create_directories(cfg.dir + "/gtflow");

  write_calib(c, cfg.dir + "/calib.txt");

  auto events = generate_events(s, tr, c, cfg.threshold, tr.t0, tr.t1, cfg.jobs);
  if (cfg.jitter_sigma > 0 || cfg.noise_rate > 0)
    events = add_noise(std::move(events), cfg.jitter_sigma, cfg.noise_rate, tr.t0, tr.t1,
                       c.width, c.height, cfg.seed);
  write_events(events, cfg.dir + "/events.txt");

  FILE* plane = std::fopen((cfg.dir + "/plane.txt").c_str(), "w");
  if (!plane) throw IoError("cannot open plane file in " + cfg.dir);
  std::fprintf(plane, "P0 %.17g %.17g %.17g\n", s.P0.x(), s.P0.y(), s.P0.z());
  std::fprintf(plane, "eu %.17g %.17g %.17g\n", s.e_u.x(), s.e_u.y(), s.e_u.z());
  std::fprintf(plane, "ev %.17g %.17g %.17g\n", s.e_v.x(), s.e_v.y(), s.e_v.z());
  std::fprintf(plane, "n %.17g %.17g %.17g\n", s.n.x(), s.n.y(), s.n.z());
  std::fprintf(plane, "extent %.17g\n", s.extent);
  std::fclose(plane);

  write_imu(synth_imu(tr, cfg.imu_rate), cfg.dir + "/imu.txt");
  write_poses(synth_poses(tr, cfg.pose_rate), cfg.dir + "/groundtruth.txt");

  FILE* img_list = std::fopen((cfg.dir + "/images.txt").c_str(), "w");
  FILE* hom = std::fopen((cfg.dir + "/homographies.txt").c_str(), "w");
  if (!img_list || !hom) {
    if (img_list) std::fclose(img_list);
    if (hom) std::fclose(hom);
    throw IoError("cannot open image list or homography file in " + cfg.dir);
  }

  const long n_frames = std::lround(std::floor((tr.t1 - tr.t0) * cfg.frame_rate)) + 1;
  for (long i = 0; i < n_frames; ++i) {
    const double t = tr.t0 + i / cfg.frame_rate;
    char name[64];
    std::snprintf(name, sizeof(name), "images/frame_%06ld.pgm", i);
    write_pgm(render_frame(s, tr, c, t), cfg.dir + "/" + name, 255);
    std::fprintf(img_list, "%.9f %s\n", t, name);

    const Eigen::Matrix3d H = plane_to_pixel_h(s, tr, c, t);
    std::fprintf(hom, "%.9f", t);
    for (int r = 0; r < 3; ++r)
      for (int col = 0; col < 3; ++col) std::fprintf(hom, " %.17g", H(r, col));
    std::fprintf(hom, "\n");

    // analytic flow on an interior grid, skipping rays that miss the texture
    std::vector<std::vector<std::string>> rows;
    const int g = std::max(cfg.gtflow_grid, 2);
    for (int gy = 0; gy < g; ++gy) {
      for (int gx = 0; gx < g; ++gx) {
        const double px = (gx + 0.5) * c.width / g;
        const double py = (gy + 0.5) * c.height / g;
        try {
          const FlowSet f = gt_flow(s, tr, c, t, {{px, py}});
          char buf[4][32];
          std::snprintf(buf[0], 32, "%.6f", px);
          std::snprintf(buf[1], 32, "%.6f", py);
          std::snprintf(buf[2], 32, "%.9g", f.samples[0].f.x());
          std::snprintf(buf[3], 32, "%.9g", f.samples[0].f.y());
          rows.push_back({buf[0], buf[1], buf[2], buf[3]});
        } catch (const PointNotOnPlane&) {
        }
      }
    }
    char flow_name[32];
    std::snprintf(flow_name, sizeof(flow_name), "/gtflow/flow_%06ld.csv", i);
    write_csv_report(rows, {"x", "y", "fx", "fy"}, cfg.dir + flow_name);
  }
  std::fclose(img_list);
  std::fclose(hom);
}

Preset make_preset(const std::string& name, unsigned seed) {
  CameraModel cam(199.0, 199.0, 120.0, 90.0, 240, 180);
  Trajectory tr;
  tr.t0 = 0;
  tr.t1 = 10.0;
  Scene scene = Scene::blobs(seed);
  scene.tilt_about_u(0.45);

  if (name == "rot-dominant") {
    tr.ang[0].terms = {{0.10, 0.62, 0.3}, {0.04, 1.31, 1.1}};
    tr.ang[1].terms = {{0.12, 0.53, 2.0}, {0.05, 1.17, 0.4}};
    tr.ang[2].terms = {{0.22, 0.71, 5.1}};
    tr.pos[0].terms = {{0.150, 0.43, 0.9}};
    tr.pos[1].terms = {{0.120, 0.37, 4.2}};
    tr.pos[2].terms = {{0.090, 0.29, 2.6}};
  } else if (name == "mixed-6dof") {
    tr.ang[0].terms = {{0.06, 0.55, 1.3}};
    tr.ang[1].terms = {{0.07, 0.47, 3.8}};
    tr.ang[2].terms = {{0.09, 0.81, 0.6}};
    tr.pos[0].terms = {{0.120, 0.47, 1.7}};
    tr.pos[1].terms = {{0.100, 0.59, 5.0}};
    tr.pos[2].terms = {{0.080, 0.41, 3.3}};
  } else if (name == "fast-switching") {
    tr.ang[0].terms = {{0.030, 2.30, 0.2}};
    tr.ang[1].terms = {{0.035, 2.70, 2.4}};
    tr.ang[2].terms = {{0.060, 2.50, 4.0}};
    tr.pos[0].terms = {{0.060, 1.10, 1.0}};
    tr.pos[1].terms = {{0.045, 0.90, 3.0}};
    tr.pos[2].terms = {{0.030, 0.70, 5.5}};
  } else if (name == "pure-rotation") {
    tr.t1 = 6.0;
    tr.ang[0].terms = {{0.10, 0.90, 0.7}};
    tr.ang[1].terms = {{0.12, 0.73, 2.9}};
    tr.ang[2].terms = {{0.18, 1.10, 4.4}};
  } else {
    throw InvalidConfig("unknown preset: " + name);
  }
  return Preset{std::move(scene), tr, cam, 0.3, name};
}

}  // namespace evstab::sim
