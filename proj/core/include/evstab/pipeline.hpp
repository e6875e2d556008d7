#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "evstab/quat.hpp"
#include "evstab/tracking.hpp"

namespace evstab {

/// One bag of knobs for every subcommand; unknown combinations are rejected
/// up front (e.g. representation "frame" needs mode "frames").
struct RunConfig {
  std::string dataset;  // directory holding events.txt, calib.txt, ...
  std::string out;      // output directory; empty = compute only

  std::string mode = "events";          // events | frames
  std::string representation = "iwe";   // iwe | ts | frame
  bool stabilization = true;
  std::string attitude = "gt";          // gt | imu
  Quat q_o = Quat::identity();
  double imu_gain = 0.02;
  double saccade_px = -1;               // < 0: width/6
  std::string window_space = "stabilized";  // stabilized | raw

  int tile_rows = 26, tile_cols = 34;
  int area_threshold = 200;

  double sigma = 1.0;
  bool cmax = true;
  int cmax_rows = 3, cmax_cols = 4;
  double cmax_cap = 5000.0;
  double tau0 = 0.035, alpha = 0.3;

  int lk_levels = 3, lk_window = 15;
  int max_corners = 60;

  std::string solver = "erlv";          // erlv | erl
  int irls_rounds = 5;
  double min_speed_floor = 0.01;

  double tau_valid = 0.2;
  std::string metric_normalization = "per-track";

  int jobs = 1;
  unsigned seed = 1;
};

struct VelocityRow {
  double t = 0;  // end of the flow interval
  Eigen::Vector3d v_est = Eigen::Vector3d::Zero();  // unit, camera frame
  Eigen::Vector3d v_gt = Eigen::Vector3d::Zero();   // m/s, camera frame
  double angle_err_deg = 0;
  int n_flows = 0;
  double median_disp_px = 0;  // median LK displacement of this pair
  double solve_ms = 0;
  bool has_gt = false;
};

struct VelocityResult {
  std::vector<VelocityRow> rows;
  double mae_deg = 0;  // NaN when no usable ground truth
  double median_solve_ms = 0;
  double median_flow_px = 0;  // pooled over all LK samples
  int windows = 0;
  int pairs_skipped = 0;
  int saccades = 0;
};

/// Window (or frame-pair) velocity-direction estimation; writes
/// velocity.csv, summary.csv and manifest.json when cfg.out is set.
VelocityResult run_velocity(const RunConfig& cfg);

struct StabilizeResult {
  std::size_t events_out = 0;
  int frames_out = 0;
  int saccades = 0;
  std::vector<std::pair<double, int>> saccade_log;  // (t, running count)
};

/// Stabilizes the event stream (or frames) and writes the result plus a
/// saccade log under cfg.out.
StabilizeResult run_stabilize(const RunConfig& cfg);

struct TrackResult {
  TrackMetrics metrics;
  int est_tracks = 0;
  int gt_tracks = 0;
  int segments = 0;
  int saccades = 0;
};

/// KLT tracking on the chosen representation against homography-propagated
/// ground truth; writes metrics.csv, tracks.csv and manifest.json.
TrackResult run_track(const RunConfig& cfg);

struct EvalResult {
  double mae_a = 0, mae_b = 0;
  double mae_delta = 0;        // b - a
  double improvement_pct = 0;  // 100 * (b - a) / b
  double median_ms_a = 0, median_ms_b = 0;
  double runtime_ratio = 0;  // a / b
  long solves_a = 0, solves_b = 0;
};

/// Paired comparison of two velocity runs over identical inputs (verified
/// through manifest hashes; InputMismatch otherwise).
EvalResult run_eval(const std::string& run_a, const std::string& run_b,
                    const std::string& out = "");

}  // namespace evstab
