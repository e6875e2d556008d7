#include "evstab/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <thread>

#include <Eigen/Dense>
#include <json.hpp>

#include "evstab/attitude.hpp"
#include "evstab/egomotion.hpp"
#include "evstab/errors.hpp"
#include "evstab/io.hpp"
#include "evstab/optical_flow.hpp"
#include "evstab/representation.hpp"
#include "evstab/stabilize.hpp"
#include "evstab/window.hpp"

namespace evstab {
namespace {

namespace fsys = std::filesystem;
using nlohmann::json;

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

double median_of_copy(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  double m = v[mid];
  if (v.size() % 2 == 0) m = 0.5 * (m + *std::max_element(v.begin(), v.begin() + mid));
  return m;
}

void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  jobs = std::max(1, std::min<int>(jobs, int(n)));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(jobs);
  for (int j = 0; j < jobs; ++j) {
    pool.emplace_back([&] {
      try {
        for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

std::string fmt(double v, const char* spec = "%.9g") {
  char buf[40];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

void validate(const RunConfig& cfg) {
  if (cfg.dataset.empty()) throw InvalidConfig("dataset directory is required");
  if (cfg.mode != "events" && cfg.mode != "frames")
    throw InvalidConfig("mode must be 'events' or 'frames'");
  if (cfg.representation != "iwe" && cfg.representation != "ts" && cfg.representation != "frame")
    throw InvalidConfig("representation must be iwe, ts or frame");
  if ((cfg.mode == "frames") != (cfg.representation == "frame"))
    throw InvalidConfig("representation 'frame' requires mode 'frames' and vice versa");
  if (cfg.attitude != "gt" && cfg.attitude != "imu")
    throw InvalidConfig("attitude must be 'gt' or 'imu'");
  if (cfg.solver != "erlv" && cfg.solver != "erl")
    throw InvalidConfig("solver must be 'erlv' or 'erl'");
  if (cfg.window_space != "stabilized" && cfg.window_space != "raw")
    throw InvalidConfig("window-space must be 'stabilized' or 'raw'");
  if (cfg.metric_normalization != "per-track" && cfg.metric_normalization != "global")
    throw InvalidConfig("metric normalization must be 'per-track' or 'global'");
  if (cfg.jobs < 1) throw InvalidConfig("jobs must be >= 1");
}

struct Dataset {
  CameraModel cam;
  std::vector<Event> events;
  std::vector<PoseSample> poses;
  std::vector<ImuSample> imu;
  std::vector<std::pair<double, std::string>> frames;
  bool has_poses = false;
  bool has_imu = false;
  bool has_plane = false;
  Eigen::Vector3d plane_p0 = Eigen::Vector3d::Zero();
  Eigen::Vector3d plane_eu = Eigen::Vector3d::UnitX();
  Eigen::Vector3d plane_ev = Eigen::Vector3d::UnitY();
  Eigen::Vector3d plane_n = Eigen::Vector3d::UnitZ();
  std::map<std::string, std::string> hashes;
};

std::vector<std::pair<double, std::string>> read_image_list(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path);
  std::vector<std::pair<double, std::string>> out;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#') continue;
    const std::size_t sp = line.find(' ');
    if (sp == std::string::npos) throw ParseError("image list line lacks a path", out.size() + 1);
    char* end = nullptr;
    const double t = std::strtod(line.c_str(), &end);
    if (end == line.c_str()) throw ParseError("bad image timestamp", out.size() + 1);
    std::string name = line.substr(sp + 1);
    while (!name.empty() && (name.back() == '\r' || name.back() == ' ')) name.pop_back();
    out.emplace_back(t, name);
  }
  return out;
}

Dataset load_dataset(const RunConfig& cfg) {
  const std::string dir = cfg.dataset;
  Dataset ds{read_calib(dir + "/calib.txt")};
  ds.hashes["calib.txt"] = sha1_file(dir + "/calib.txt");

  if (cfg.mode == "events") {
    ds.events = read_events(dir + "/events.txt");
    ds.hashes["events.txt"] = sha1_file(dir + "/events.txt");
  } else {
    ds.frames = read_image_list(dir + "/images.txt");
    ds.hashes["images.txt"] = sha1_file(dir + "/images.txt");
  }

  if (fsys::exists(dir + "/groundtruth.txt")) {
    ds.poses = read_poses(dir + "/groundtruth.txt");
    ds.has_poses = ds.poses.size() >= 2;
    ds.hashes["groundtruth.txt"] = sha1_file(dir + "/groundtruth.txt");
  }
  if (cfg.attitude == "imu" || fsys::exists(dir + "/imu.txt")) {
    if (fsys::exists(dir + "/imu.txt")) {
      ds.imu = read_imu(dir + "/imu.txt");
      ds.has_imu = !ds.imu.empty();
      ds.hashes["imu.txt"] = sha1_file(dir + "/imu.txt");
    }
  }
  if (fsys::exists(dir + "/plane.txt")) {
    std::ifstream f(dir + "/plane.txt");
    std::string key;
    double extent = 0;
    Eigen::Vector3d* slots[4] = {&ds.plane_p0, &ds.plane_eu, &ds.plane_ev, &ds.plane_n};
    int found = 0;
    while (f >> key) {
      if (key == "extent") {
        f >> extent;
      } else {
        const int idx = key == "P0" ? 0 : key == "eu" ? 1 : key == "ev" ? 2 : key == "n" ? 3 : -1;
        if (idx < 0) throw ParseError("unknown plane field '" + key + "'", 0);
        f >> (*slots[idx]).x() >> (*slots[idx]).y() >> (*slots[idx]).z();
        ++found;
      }
    }
    ds.has_plane = found == 4;
    ds.hashes["plane.txt"] = sha1_file(dir + "/plane.txt");
  }
  return ds;
}

AttitudeTrack make_attitude(const RunConfig& cfg, const Dataset& ds) {
  if (cfg.attitude == "imu") {
    if (!ds.has_imu) throw InvalidConfig("attitude 'imu' needs imu.txt in the dataset");
    return fuse_imu(ds.imu, cfg.imu_gain, cfg.q_o);
  }
  if (!ds.has_poses) throw InvalidConfig("attitude 'gt' needs groundtruth.txt in the dataset");
  return from_poses(ds.poses, cfg.q_o);
}

/// Ground-truth camera-frame velocity from the pose file: central difference
/// of the interpolated position, rotated by the interpolated orientation.
struct GtMotion {
  std::vector<double> t;
  std::vector<Eigen::Vector3d> p;
  AttitudeTrack att;
  bool ok = false;

  static GtMotion from(const Dataset& ds) {
    GtMotion g;
    if (!ds.has_poses) return g;
    g.t.reserve(ds.poses.size());
    g.p.reserve(ds.poses.size());
    for (const auto& ps : ds.poses) {
      if (!g.t.empty() && ps.t <= g.t.back()) continue;
      g.t.push_back(ps.t);
      g.p.push_back(ps.position);
    }
    if (g.t.size() < 2) return g;
    g.att = from_poses(ds.poses);
    g.ok = true;
    return g;
  }

  Eigen::Vector3d pos_at(double tt) const {
    tt = std::clamp(tt, t.front(), t.back());
    const auto it = std::upper_bound(t.begin(), t.end(), tt);
    const std::size_t hi = std::min<std::size_t>(it - t.begin(), t.size() - 1);
    const std::size_t lo = hi == 0 ? 0 : hi - 1;
    const double span = t[hi] - t[lo];
    const double s = span > 0 ? (tt - t[lo]) / span : 0.0;
    return (1 - s) * p[lo] + s * p[hi];
  }

  Eigen::Vector3d vel_cam(double tt) const {
    const double h = 2e-3;
    const double a = std::max(t.front(), tt - h);
    const double b = std::min(t.back(), tt + h);
    if (b - a < 1e-9) return Eigen::Vector3d::Zero();
    const Eigen::Vector3d v_world = (pos_at(b) - pos_at(a)) / (b - a);
    const double tq = std::clamp(tt, t.front(), t.back());
    return quat_to_rot(att.at(tq)).transpose() * v_world;
  }
};

json config_to_json(const RunConfig& cfg) {
  json j;
  j["dataset"] = cfg.dataset;
  j["mode"] = cfg.mode;
  j["representation"] = cfg.representation;
  j["stabilization"] = cfg.stabilization;
  j["attitude"] = cfg.attitude;
  j["q_o"] = {cfg.q_o.w, cfg.q_o.x, cfg.q_o.y, cfg.q_o.z};
  j["imu_gain"] = cfg.imu_gain;
  j["saccade_px"] = cfg.saccade_px;
  j["window_space"] = cfg.window_space;
  j["tile_rows"] = cfg.tile_rows;
  j["tile_cols"] = cfg.tile_cols;
  j["area_threshold"] = cfg.area_threshold;
  j["sigma"] = cfg.sigma;
  j["cmax"] = cfg.cmax;
  j["cmax_rows"] = cfg.cmax_rows;
  j["cmax_cols"] = cfg.cmax_cols;
  j["cmax_cap"] = cfg.cmax_cap;
  j["tau0"] = cfg.tau0;
  j["alpha"] = cfg.alpha;
  j["lk_levels"] = cfg.lk_levels;
  j["lk_window"] = cfg.lk_window;
  j["max_corners"] = cfg.max_corners;
  j["solver"] = cfg.solver;
  j["irls_rounds"] = cfg.irls_rounds;
  j["min_speed_floor"] = cfg.min_speed_floor;
  j["tau_valid"] = cfg.tau_valid;
  j["metric_normalization"] = cfg.metric_normalization;
  j["jobs"] = cfg.jobs;
  j["seed"] = cfg.seed;
  return j;
}

void write_manifest(const std::string& command, const RunConfig& cfg,
                    const std::map<std::string, std::string>& hashes, const std::string& path) {
  json j;
  j["command"] = command;
  j["config"] = config_to_json(cfg);
  j["seed"] = cfg.seed;
  j["inputs"] = hashes;
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path);
  f << j.dump(2) << "\n";
}

/// A time-ordered sequence of representation images plus the bookkeeping
/// needed to pair them safely: validity, reference orientation, and whether
/// an image starts a fresh reference segment (a saccade fired just before).
struct RepSequence {
  std::vector<ImageGrid> images;
  std::vector<ImageGrid> masks;  // frames mode with stabilization, else empty
  std::vector<char> valid;
  std::vector<char> new_ref;
  std::vector<Quat> q_ref;
  std::vector<double> times;
  std::vector<std::pair<double, int>> saccade_log;
  int saccades = 0;
  int windows = 0;
};

RepSequence build_event_reps(const RunConfig& cfg, const Dataset& ds, const AttitudeTrack* att) {
  const CameraModel& cam = ds.cam;
  const UndistortLut lut = build_undistort_lut(cam);
  StabilizerState st = make_stabilizer_state(cam, cfg.saccade_px);
  WindowSlicer slicer(cfg.tile_rows, cfg.tile_cols, cfg.area_threshold, cam);

  const bool stab = cfg.stabilization;
  std::vector<EventWindow> windows;
  std::vector<char> new_ref_flags;
  RepSequence out;
  bool next_new_ref = false;

  for (const Event& e : ds.events) {
    Quat q_C = Quat::identity();
    if (stab) {
      if (e.t < att->t_first() - 0.009 || e.t > att->t_last() + 0.009) continue;
      q_C = att->at(e.t);
    }
    if (!st.has_ref) maybe_saccade(st, q_C, cam);
    const Event se = stabilize_event(e, stab ? q_C : st.q_ref, st, cam, lut);

    double count_x = se.x, count_y = se.y;
    if (cfg.window_space == "raw") {
      const Eigen::Vector2d und = lut.at(e.x, e.y);
      count_x = und.x();
      count_y = und.y();
    }
    if (auto w = slicer.push(se, count_x, count_y, st.q_ref)) {
      windows.push_back(std::move(*w));
      new_ref_flags.push_back(next_new_ref ? 1 : 0);
      next_new_ref = false;
      if (stab && maybe_saccade(st, q_C, cam)) {
        ++out.saccades;
        out.saccade_log.emplace_back(e.t, out.saccades);
        next_new_ref = true;
      }
    }
  }
  if (auto w = slicer.flush()) {
    windows.push_back(std::move(*w));
    new_ref_flags.push_back(next_new_ref ? 1 : 0);
  }

  const std::size_t n = windows.size();
  out.windows = int(n);
  out.images.resize(n);
  out.valid.assign(n, 0);
  out.new_ref = new_ref_flags;
  out.q_ref.resize(n);
  out.times.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.q_ref[i] = windows[i].q_ref;
    out.times[i] = windows[i].t_end;
  }

  if (cfg.representation == "iwe") {
    CmaxOptions co;
    co.tile_rows = cfg.cmax_rows;
    co.tile_cols = cfg.cmax_cols;
    co.cap = cfg.cmax_cap;
    co.sigma = cfg.sigma;
    parallel_for(n, cfg.jobs, [&](std::size_t i) {
      try {
        const WarpParams theta = cfg.cmax ? maximize_contrast(windows[i], cam, co) : WarpParams{};
        out.images[i] = render_iwe(windows[i], theta, cfg.sigma, cam);
        out.valid[i] = 1;
      } catch (const Error&) {
        out.valid[i] = 0;
      }
    });
  } else {
    TimeSurfaceState ts(cfg.tau0, cam.width, cam.height, cfg.alpha);
    for (std::size_t i = 0; i < n; ++i) {
      try {
        out.images[i] = render_time_surface(windows[i], ts);
        out.valid[i] = 1;
      } catch (const Error&) {
        out.valid[i] = 0;
      }
    }
  }
  return out;
}

RepSequence build_frame_reps(const RunConfig& cfg, const Dataset& ds, const AttitudeTrack* att) {
  const CameraModel& cam = ds.cam;
  const UndistortLut lut = build_undistort_lut(cam);
  StabilizerState st = make_stabilizer_state(cam, cfg.saccade_px);
  const bool stab = cfg.stabilization;

  RepSequence out;
  bool next_new_ref = false;
  for (const auto& [t, name] : ds.frames) {
    if (stab && (t < att->t_first() - 0.009 || t > att->t_last() + 0.009)) continue;
    ImageGrid img = read_pgm(cfg.dataset + "/" + name);
    img.t = t;
    out.new_ref.push_back(next_new_ref ? 1 : 0);
    next_new_ref = false;
    if (stab) {
      const Quat q_C = att->at(t);
      if (!st.has_ref) maybe_saccade(st, q_C, cam);
      ImageGrid mask;
      out.images.push_back(stabilize_frame(img, q_C, st, cam, lut, &mask));
      out.masks.push_back(std::move(mask));
      out.q_ref.push_back(st.q_ref);
      if (maybe_saccade(st, q_C, cam)) {
        ++out.saccades;
        out.saccade_log.emplace_back(t, out.saccades);
        next_new_ref = true;
      }
    } else {
      out.images.push_back(std::move(img));
      out.q_ref.push_back(Quat::identity());
    }
    out.times.push_back(t);
    out.valid.push_back(1);
  }
  out.windows = int(out.images.size());
  return out;
}

std::vector<Eigen::Vector2d> filter_by_mask(const std::vector<Eigen::Vector2d>& pts,
                                            const ImageGrid& mask, double margin) {
  std::vector<Eigen::Vector2d> kept;
  kept.reserve(pts.size());
  for (const auto& p : pts) {
    bool ok = true;
    for (double dy = -margin; dy <= margin && ok; dy += margin)
      for (double dx = -margin; dx <= margin && ok; dx += margin)
        ok = mask.sample(p.x() + dx, p.y() + dy) >= 0.5;
    if (ok) kept.push_back(p);
  }
  return kept;
}

}  // namespace

VelocityResult run_velocity(const RunConfig& cfg) {
  validate(cfg);
  const Dataset ds = load_dataset(cfg);
  const CameraModel& cam = ds.cam;

  AttitudeTrack att;
  if (cfg.stabilization) att = make_attitude(cfg, ds);
  const AttitudeTrack* att_ptr = cfg.stabilization ? &att : nullptr;
  const GtMotion gt = GtMotion::from(ds);

  const RepSequence reps = cfg.mode == "events" ? build_event_reps(cfg, ds, att_ptr)
                                                : build_frame_reps(cfg, ds, att_ptr);

  LkOptions lk;
  lk.levels = cfg.lk_levels;
  lk.window = cfg.lk_window;
  SolverOptions so;
  so.irls_rounds = cfg.irls_rounds;

  VelocityResult res;
  res.windows = reps.windows;
  res.saccades = reps.saccades;

  std::vector<double> disp_pool;
  for (std::size_t i = 1; i < reps.images.size(); ++i) {
    if (!reps.valid[i - 1] || !reps.valid[i] || reps.new_ref[i]) {
      ++res.pairs_skipped;
      continue;
    }
    std::vector<Eigen::Vector2d> corners;
    try {
      corners = detect_corners(reps.images[i - 1], cfg.max_corners);
    } catch (const Error&) {
      ++res.pairs_skipped;
      continue;
    }
    if (!reps.masks.empty())
      corners = filter_by_mask(corners, reps.masks[i - 1], cfg.lk_window / 2 + 1);

    FlowSet flow;
    try {
      flow = lk_flow(reps.images[i - 1], reps.images[i], corners, lk);
    } catch (const Error&) {
      ++res.pairs_skipped;
      continue;
    }
    if (flow.samples.size() < 3) {
      ++res.pairs_skipped;
      continue;
    }

    std::vector<double> disp;
    disp.reserve(flow.samples.size());
    for (const auto& s : flow.samples) disp.push_back(s.f.norm() * flow.dt);
    disp_pool.insert(disp_pool.end(), disp.begin(), disp.end());

    VelocityRow row;
    row.t = reps.times[i];
    row.n_flows = int(flow.samples.size());
    row.median_disp_px = median_of_copy(disp);

    const auto tick = std::chrono::steady_clock::now();
    Eigen::Vector3d v_est;
    try {
      if (cfg.solver == "erlv")
        v_est = erlv_solve(flow, cam, so).V;
      else
        v_est = erl_full_solve(flow, cam, so).V;
    } catch (const Error&) {
      ++res.pairs_skipped;
      continue;
    }
    row.solve_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - tick).count();

    const double t_mid = 0.5 * (reps.times[i - 1] + reps.times[i]);
    if (cfg.stabilization) {
      // flows live in the reference-orientation frame; bring the estimate
      // back into the camera frame at the measurement time
      const Quat q_star = reps.q_ref[i].conj() * att.at(t_mid);
      v_est = quat_to_rot(q_star).transpose() * v_est;
    }
    row.v_est = v_est;
    if (gt.ok) {
      row.v_gt = gt.vel_cam(t_mid);
      row.has_gt = true;
      const double speed = row.v_gt.norm();
      row.angle_err_deg =
          speed > 1e-12
              ? std::acos(std::clamp(v_est.dot(row.v_gt / speed), -1.0, 1.0)) * 180.0 / M_PI
              : kNan;
    } else {
      row.angle_err_deg = kNan;
    }
    res.rows.push_back(row);
  }

  std::vector<double> est_list_ms;
  std::vector<Eigen::Vector3d> ests, gts;
  for (const auto& r : res.rows) {
    est_list_ms.push_back(r.solve_ms);
    if (r.has_gt) {
      ests.push_back(r.v_est);
      gts.push_back(r.v_gt);
    }
  }
  res.median_solve_ms = median_of_copy(est_list_ms);
  res.median_flow_px = median_of_copy(disp_pool);
  try {
    res.mae_deg = ests.empty() ? kNan : mae_angle(ests, gts, cfg.min_speed_floor);
  } catch (const InsufficientSamples&) {
    res.mae_deg = kNan;
  }

  if (!cfg.out.empty()) {
    fsys::create_directories(cfg.out);
    std::vector<std::vector<std::string>> rows;
    for (const auto& r : res.rows) {
      std::vector<std::string> rec{fmt(r.t, "%.9f"),        fmt(r.v_est.x()), fmt(r.v_est.y()),
                                   fmt(r.v_est.z()),        "",               "",
                                   "",                      "",               std::to_string(r.n_flows),
                                   fmt(r.median_disp_px),   fmt(r.solve_ms)};
      if (r.has_gt) {
        rec[4] = fmt(r.v_gt.x());
        rec[5] = fmt(r.v_gt.y());
        rec[6] = fmt(r.v_gt.z());
        if (std::isfinite(r.angle_err_deg)) rec[7] = fmt(r.angle_err_deg);
      }
      rows.push_back(std::move(rec));
    }
    write_csv_report(rows,
                     {"t", "vx", "vy", "vz", "gx", "gy", "gz", "angle_err_deg", "n_flows",
                      "median_disp_px", "solve_ms"},
                     cfg.out + "/velocity.csv");

    std::vector<std::vector<std::string>> summary{
        {"mae_deg", std::isfinite(res.mae_deg) ? fmt(res.mae_deg) : ""},
        {"rows", std::to_string(res.rows.size())},
        {"windows", std::to_string(res.windows)},
        {"pairs_skipped", std::to_string(res.pairs_skipped)},
        {"saccades", std::to_string(res.saccades)},
        {"median_solve_ms", fmt(res.median_solve_ms)},
        {"median_flow_px", fmt(res.median_flow_px)}};
    write_csv_report(summary, {"metric", "value"}, cfg.out + "/summary.csv");
    write_manifest("velocity", cfg, ds.hashes, cfg.out + "/manifest.json");
  }
  return res;
}

StabilizeResult run_stabilize(const RunConfig& cfg) {
  validate(cfg);
  if (cfg.out.empty()) throw InvalidConfig("stabilize needs an output directory");
  const Dataset ds = load_dataset(cfg);
  const CameraModel& cam = ds.cam;
  const AttitudeTrack att = make_attitude(cfg, ds);
  const UndistortLut lut = build_undistort_lut(cam);
  StabilizerState st = make_stabilizer_state(cam, cfg.saccade_px);

  StabilizeResult res;
  fsys::create_directories(cfg.out);

  if (cfg.mode == "events") {
    std::vector<Event> out_events;
    out_events.reserve(ds.events.size());
    for (const Event& e : ds.events) {
      if (e.t < att.t_first() - 0.009 || e.t > att.t_last() + 0.009) continue;
      const Quat q_C = att.at(e.t);
      if (maybe_saccade(st, q_C, cam)) {
        ++res.saccades;
        res.saccade_log.emplace_back(e.t, res.saccades);
      }
      out_events.push_back(stabilize_event(e, q_C, st, cam, lut));
    }
    write_events(out_events, cfg.out + "/events.txt");
    res.events_out = out_events.size();
  } else {
    fsys::create_directories(cfg.out + "/images");
    std::ofstream list(cfg.out + "/images.txt");
    if (!list) throw IoError("cannot write " + cfg.out + "/images.txt");
    int idx = 0;
    for (const auto& [t, name] : ds.frames) {
      if (t < att.t_first() - 0.009 || t > att.t_last() + 0.009) continue;
      ImageGrid img = read_pgm(cfg.dataset + "/" + name);
      img.t = t;
      const Quat q_C = att.at(t);
      if (maybe_saccade(st, q_C, cam)) {
        ++res.saccades;
        res.saccade_log.emplace_back(t, res.saccades);
      }
      char out_name[64];
      std::snprintf(out_name, sizeof(out_name), "images/frame_%06d.pgm", idx++);
      write_pgm(stabilize_frame(img, q_C, st, cam, lut), cfg.out + "/" + out_name, 255);
      list << fmt(t, "%.9f") << " " << out_name << "\n";
    }
    res.frames_out = idx;
  }

  std::vector<std::vector<std::string>> log_rows;
  for (const auto& [t, count] : res.saccade_log)
    log_rows.push_back({fmt(t, "%.9f"), std::to_string(count)});
  write_csv_report(log_rows, {"t", "count"}, cfg.out + "/saccades.csv");
  write_manifest("stabilize", cfg, ds.hashes, cfg.out + "/manifest.json");
  return res;
}

TrackResult run_track(const RunConfig& cfg) {
  validate(cfg);
  const Dataset ds = load_dataset(cfg);
  const CameraModel& cam = ds.cam;
  if (!ds.has_plane || !ds.has_poses)
    throw InvalidConfig("track needs plane.txt and groundtruth.txt for ground-truth tracks");

  AttitudeTrack att;
  if (cfg.stabilization) att = make_attitude(cfg, ds);
  const AttitudeTrack* att_ptr = cfg.stabilization ? &att : nullptr;
  const GtMotion gt = GtMotion::from(ds);

  const RepSequence reps = cfg.mode == "events" ? build_event_reps(cfg, ds, att_ptr)
                                                : build_frame_reps(cfg, ds, att_ptr);

  const auto h_raw = [&](double t) {
    const double tq = std::clamp(t, gt.t.front(), gt.t.back());
    const Eigen::Matrix3d Rt = quat_to_rot(gt.att.at(tq)).transpose();
    Eigen::Matrix3d M;
    M.col(0) = Rt * ds.plane_eu;
    M.col(1) = Rt * ds.plane_ev;
    M.col(2) = Rt * (ds.plane_p0 - gt.pos_at(tq));
    return Eigen::Matrix3d(cam.K() * M);
  };

  KltOptions kopts;
  kopts.lk.levels = cfg.lk_levels;
  kopts.lk.window = cfg.lk_window;
  kopts.max_corners = cfg.max_corners;

  const bool distorted_raw_frames =
      cfg.mode == "frames" && !cfg.stabilization && cam.has_distortion();
  const UndistortLut lut = build_undistort_lut(cam);

  TrackResult res;
  res.saccades = reps.saccades;
  std::vector<FeatureTrack> all_est, all_gt;
  int id_offset = 0;

  std::size_t seg_start = 0;
  std::vector<std::pair<std::size_t, std::size_t>> segments;
  for (std::size_t i = 1; i <= reps.images.size(); ++i) {
    if (i == reps.images.size() || reps.new_ref[i]) {
      if (i - seg_start >= 2) segments.push_back({seg_start, i});
      seg_start = i;
    }
  }

  for (const auto& [s0, s1] : segments) {
    const std::vector<ImageGrid> seg_imgs(reps.images.begin() + s0, reps.images.begin() + s1);
    const std::vector<double> seg_times(reps.times.begin() + s0, reps.times.begin() + s1);
    std::vector<ImageGrid> seg_masks;
    if (!reps.masks.empty())
      seg_masks.assign(reps.masks.begin() + s0, reps.masks.begin() + s1);

    std::vector<Eigen::Vector2d> corners;
    try {
      corners = masked_corners(seg_imgs.front(), kopts, seg_masks.empty() ? nullptr : &seg_masks[0]);
    } catch (const Error&) {
      continue;
    }
    if (corners.size() < 2) continue;

    std::vector<FeatureTrack> est;
    try {
      est = klt_track(seg_imgs, kopts, {}, seg_masks.empty() ? nullptr : &seg_masks);
    } catch (const Error&) {
      continue;
    }
    for (auto& tr : est) tr.id += id_offset;

    // Ground truth: plane-anchored corner positions pushed through the
    // per-image homography (plus the stabilizing rotation in its segment).
    const Quat seg_ref = reps.q_ref[s0];
    const auto stab_h = [&](double t) {
      if (!cfg.stabilization) return Eigen::Matrix3d(Eigen::Matrix3d::Identity());
      const double tq = std::clamp(t, att.t_first(), att.t_last());
      return stabilization_homography(cam, seg_ref, att.at(tq));
    };

    std::vector<Eigen::Vector2d> inits;
    const Eigen::Matrix3d h0_inv = (stab_h(seg_times.front()) * h_raw(seg_times.front())).inverse();
    for (const auto& c : corners) {
      Eigen::Vector2d base = c;
      if (distorted_raw_frames) base = lut.at(c.x(), c.y());
      const Eigen::Vector3d uv = h0_inv * Eigen::Vector3d(base.x(), base.y(), 1.0);
      inits.emplace_back(uv.x() / uv.z(), uv.y() / uv.z());
    }

    std::vector<Eigen::Matrix3d> H;
    H.reserve(seg_imgs.size());
    for (double t : seg_times) H.push_back(Eigen::Matrix3d(stab_h(t) * h_raw(t)));
    std::vector<FeatureTrack> gt_tracks = propagate_gt_tracks(H, seg_times, inits, id_offset);

    for (auto& tr : gt_tracks) {
      if (distorted_raw_frames)
        for (auto& smp : tr.samples)
          smp.x = distort_to_pixel(cam, pixel_to_normalized(cam, smp.x));
      std::size_t keep = 0;
      while (keep < tr.samples.size() && cam.in_bounds(tr.samples[keep].x)) ++keep;
      tr.samples.resize(keep);
      if (!tr.samples.empty()) tr.death_t = tr.samples.back().t;
    }
    gt_tracks.erase(std::remove_if(gt_tracks.begin(), gt_tracks.end(),
                                   [](const FeatureTrack& tr) { return tr.samples.size() < 2; }),
                    gt_tracks.end());

    id_offset += int(corners.size());
    all_est.insert(all_est.end(), std::make_move_iterator(est.begin()),
                   std::make_move_iterator(est.end()));
    all_gt.insert(all_gt.end(), std::make_move_iterator(gt_tracks.begin()),
                  std::make_move_iterator(gt_tracks.end()));
  }

  res.segments = int(segments.size());
  res.est_tracks = int(all_est.size());
  res.gt_tracks = int(all_gt.size());
  const MetricNormalization norm = cfg.metric_normalization == "global"
                                       ? MetricNormalization::Global
                                       : MetricNormalization::PerTrack;
  res.metrics = compute_track_metrics(all_est, all_gt, cfg.tau_valid, norm);

  if (!cfg.out.empty()) {
    fsys::create_directories(cfg.out);
    std::vector<std::vector<std::string>> mrows{
        {"TE", fmt(res.metrics.TE)},
        {"TTE", fmt(res.metrics.TTE)},
        {"ETE", fmt(res.metrics.ETE)},
        {"NFA", fmt(res.metrics.NFA)},
        {"TFA", fmt(res.metrics.TFA)},
        {"valid_tracks", std::to_string(res.metrics.valid_tracks)},
        {"est_tracks", std::to_string(res.est_tracks)},
        {"gt_tracks", std::to_string(res.gt_tracks)},
        {"segments", std::to_string(res.segments)},
        {"saccades", std::to_string(res.saccades)}};
    write_csv_report(mrows, {"metric", "value"}, cfg.out + "/metrics.csv");

    std::vector<std::vector<std::string>> trows;
    const auto status_name = [](TrackStatus s) {
      return s == TrackStatus::Active ? "active" : s == TrackStatus::Lost ? "lost" : "restarted";
    };
    for (const auto& tr : all_est)
      for (const auto& s : tr.samples)
        trows.push_back({std::to_string(tr.id), fmt(s.t, "%.9f"), fmt(s.x.x()), fmt(s.x.y()),
                         "est", status_name(tr.status)});
    for (const auto& tr : all_gt)
      for (const auto& s : tr.samples)
        trows.push_back({std::to_string(tr.id), fmt(s.t, "%.9f"), fmt(s.x.x()), fmt(s.x.y()),
                         "gt", "active"});
    write_csv_report(trows, {"id", "t", "x", "y", "kind", "status"}, cfg.out + "/tracks.csv");
    write_manifest("track", cfg, ds.hashes, cfg.out + "/manifest.json");
  }
  return res;
}

namespace {

double summary_value(const std::string& dir, const std::string& key) {
  const auto rows = read_csv(dir + "/summary.csv");
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() >= 2 && rows[i][0] == key) {
      if (rows[i][1].empty()) return kNan;
      return std::strtod(rows[i][1].c_str(), nullptr);
    }
  }
  throw ParseError("summary key '" + key + "' missing in " + dir, 0);
}

std::vector<double> csv_column(const std::string& path, const std::string& name) {
  const auto rows = read_csv(path);
  if (rows.empty()) throw ParseError("empty csv " + path, 0);
  std::size_t col = rows[0].size();
  for (std::size_t c = 0; c < rows[0].size(); ++c)
    if (rows[0][c] == name) col = c;
  if (col == rows[0].size()) throw ParseError("column '" + name + "' missing in " + path, 0);
  std::vector<double> out;
  for (std::size_t i = 1; i < rows.size(); ++i)
    if (col < rows[i].size() && !rows[i][col].empty())
      out.push_back(std::strtod(rows[i][col].c_str(), nullptr));
  return out;
}

}  // namespace

EvalResult run_eval(const std::string& run_a, const std::string& run_b, const std::string& out) {
  const auto load_manifest = [](const std::string& dir) {
    std::ifstream f(dir + "/manifest.json");
    if (!f) throw IoError("cannot open " + dir + "/manifest.json");
    json j;
    f >> j;
    return j;
  };
  const json ma = load_manifest(run_a);
  const json mb = load_manifest(run_b);
  if (ma.at("inputs") != mb.at("inputs"))
    throw InputMismatch("the two runs were not produced from identical inputs");

  EvalResult r;
  r.mae_a = summary_value(run_a, "mae_deg");
  r.mae_b = summary_value(run_b, "mae_deg");
  r.mae_delta = r.mae_b - r.mae_a;
  r.improvement_pct = r.mae_b != 0 ? 100.0 * (r.mae_b - r.mae_a) / r.mae_b : 0.0;

  const auto ms_a = csv_column(run_a + "/velocity.csv", "solve_ms");
  const auto ms_b = csv_column(run_b + "/velocity.csv", "solve_ms");
  r.solves_a = long(ms_a.size());
  r.solves_b = long(ms_b.size());
  r.median_ms_a = median_of_copy(ms_a);
  r.median_ms_b = median_of_copy(ms_b);
  r.runtime_ratio = r.median_ms_b > 0 ? r.median_ms_a / r.median_ms_b : kNan;

  if (!out.empty()) {
    fsys::create_directories(out);
    std::vector<std::vector<std::string>> rows{
        {"mae_a_deg", std::isfinite(r.mae_a) ? fmt(r.mae_a) : ""},
        {"mae_b_deg", std::isfinite(r.mae_b) ? fmt(r.mae_b) : ""},
        {"mae_delta_deg", std::isfinite(r.mae_delta) ? fmt(r.mae_delta) : ""},
        {"improvement_pct", std::isfinite(r.improvement_pct) ? fmt(r.improvement_pct) : ""},
        {"median_ms_a", fmt(r.median_ms_a)},
        {"median_ms_b", fmt(r.median_ms_b)},
        {"runtime_ratio", std::isfinite(r.runtime_ratio) ? fmt(r.runtime_ratio) : ""},
        {"solves_a", std::to_string(r.solves_a)},
        {"solves_b", std::to_string(r.solves_b)}};
    write_csv_report(rows, {"metric", "value"}, out + "/eval.csv");
  }
  return r;
}

}  // namespace evstab
