#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "evstab/errors.hpp"
#include "evstab/io.hpp"
#include "evstab/pipeline.hpp"
#include "evstab/simulator.hpp"

namespace {

using evstab::RunConfig;

// CLI11 processes config files only on the root command, so subcommands apply
// theirs by hand: each key=value line fills the matching option unless the
// command line already set it.
void apply_config_file(CLI::App& app, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw evstab::InvalidConfig("cannot open config file: " + path);
  auto trim = [](std::string s) {
    const auto a = s.find_first_not_of(" \t\r");
    const auto b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
  };
  std::string line;
  int lineno = 0;
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    ++lineno;
    const auto where = path + ":" + std::to_string(lineno);
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw evstab::InvalidConfig(where + ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    CLI::Option* opt = app.get_option_no_throw("--" + key);
    if (!opt || key == "config")
      throw evstab::InvalidConfig(where + ": unknown key '" + key + "'");
    if (!seen.insert(key).second)
      throw evstab::InvalidConfig(where + ": duplicate key '" + key + "'");
    if (opt->count() > 0) continue;  // command-line value wins
    opt->add_result(val);
    opt->run_callback();
  }
}

evstab::Quat parse_quat(const std::string& s) {
  double w, x, y, z;
  if (std::sscanf(s.c_str(), "%lf,%lf,%lf,%lf", &w, &x, &y, &z) != 4)
    throw evstab::InvalidConfig("quaternion must be w,x,y,z");
  return evstab::Quat{w, x, y, z};
}

std::pair<int, int> parse_grid(const std::string& s) {
  int r, c;
  if (std::sscanf(s.c_str(), "%dx%d", &r, &c) != 2 || r < 1 || c < 1)
    throw evstab::InvalidConfig("grid must be RxC with positive integers");
  return {r, c};
}

/// Flags shared by every command that runs the representation pipeline.
struct PipelineArgs {
  std::string q_o = "1,0,0,0";
  std::string tiles;
  std::string cmax_tiles;
  std::string config_file;
  bool no_stabilization = false;
  bool no_cmax = false;
  CLI::App* app_ = nullptr;

  void attach(CLI::App* app, RunConfig& cfg) {
    app_ = app;
    app->add_option("--dataset", cfg.dataset, "input dataset directory")->required();
    app->add_option("--out", cfg.out, "output directory");
    app->add_option("--mode", cfg.mode, "events|frames")->default_val(cfg.mode);
    app->add_option("--representation", cfg.representation, "iwe|ts|frame")
        ->default_val(cfg.representation);
    app->add_flag("--no-stabilization", no_stabilization, "run on raw (undistorted) input");
    app->add_option("--attitude", cfg.attitude, "gt|imu")->default_val(cfg.attitude);
    app->add_option("--q-o", q_o, "IMU-to-camera rotation, w,x,y,z");
    app->add_option("--imu-gain", cfg.imu_gain, "complementary filter tilt gain")
        ->default_val(cfg.imu_gain);
    app->add_option("--saccade-threshold", cfg.saccade_px,
                    "reset when the warped center drifts this many px (default width/6)");
    app->add_option("--tiles", tiles, "window tile grid RxC");
    app->add_option("--area-threshold", cfg.area_threshold, "events per tile to close a window")
        ->default_val(cfg.area_threshold);
    app->add_option("--window-space", cfg.window_space, "raw|stabilized")
        ->default_val(cfg.window_space);
    app->add_option("--sigma", cfg.sigma, "IWE splat sigma in px")->default_val(cfg.sigma);
    app->add_flag("--no-cmax", no_cmax, "render the IWE without contrast maximization");
    app->add_option("--cmax-tiles", cmax_tiles, "contrast-maximization tile grid RxC");
    app->add_option("--cmax-cap", cfg.cmax_cap, "max per-tile warp speed px/s")
        ->default_val(cfg.cmax_cap);
    app->add_option("--tau0", cfg.tau0, "time-surface initial tau, seconds")
        ->default_val(cfg.tau0);
    app->add_option("--alpha", cfg.alpha, "time-surface adaptation factor")
        ->default_val(cfg.alpha);
    app->add_option("--lk-levels", cfg.lk_levels, "pyramid levels")->default_val(cfg.lk_levels);
    app->add_option("--lk-window", cfg.lk_window, "LK window size px")->default_val(cfg.lk_window);
    app->add_option("--max-corners", cfg.max_corners, "corners per image")
        ->default_val(cfg.max_corners);
    app->add_option("--solver", cfg.solver, "erlv|erl")->default_val(cfg.solver);
    app->add_option("--irls-rounds", cfg.irls_rounds, "robust reweighting rounds")
        ->default_val(cfg.irls_rounds);
    app->add_option("--min-speed-floor", cfg.min_speed_floor,
                    "skip MAE samples slower than this, m/s")
        ->default_val(cfg.min_speed_floor);
    app->add_option("--tau-valid", cfg.tau_valid, "min track age for metrics, seconds")
        ->default_val(cfg.tau_valid);
    app->add_option("--metric-normalization", cfg.metric_normalization, "per-track|global")
        ->default_val(cfg.metric_normalization);
    app->add_option("--jobs", cfg.jobs, "worker threads")->default_val(cfg.jobs);
    app->add_option("--config", config_file, "key=value config file; command-line flags win");
  }

  void finish(RunConfig& cfg) const {
    if (!config_file.empty()) apply_config_file(*app_, config_file);
    cfg.q_o = parse_quat(q_o);
    cfg.stabilization = !no_stabilization;
    cfg.cmax = !no_cmax;
    if (!tiles.empty()) std::tie(cfg.tile_rows, cfg.tile_cols) = parse_grid(tiles);
    if (!cmax_tiles.empty()) std::tie(cfg.cmax_rows, cfg.cmax_cols) = parse_grid(cmax_tiles);
  }
};

int cmd_simulate(const std::string& preset_name, unsigned seed, evstab::sim::ExportConfig cfg,
                 double threshold, const std::string& resolution, double duration) {
  evstab::sim::Preset preset = evstab::sim::make_preset(preset_name, seed);
  if (threshold > 0) preset.threshold = threshold;
  cfg.threshold = preset.threshold;
  cfg.seed = seed;
  if (!resolution.empty()) {
    const auto [width, height] = parse_grid(resolution);
    evstab::CameraModel& c = preset.camera;
    const double sx = double(width) / c.width, sy = double(height) / c.height;
    c.fx *= sx;
    c.fy *= sy;
    c.cx *= sx;
    c.cy *= sy;
    c.width = width;
    c.height = height;
  }
  if (duration > 0) preset.traj.t1 = preset.traj.t0 + duration;

  evstab::sim::export_sequence(preset.scene, preset.traj, preset.camera, cfg);

  nlohmann::json j;
  j["command"] = "simulate";
  j["config"] = {{"preset", preset_name},
                 {"seed", seed},
                 {"threshold", cfg.threshold},
                 {"duration", preset.traj.t1 - preset.traj.t0},
                 {"width", preset.camera.width},
                 {"height", preset.camera.height},
                 {"frame_rate", cfg.frame_rate},
                 {"imu_rate", cfg.imu_rate},
                 {"pose_rate", cfg.pose_rate},
                 {"gtflow_grid", cfg.gtflow_grid},
                 {"jitter_sigma", cfg.jitter_sigma},
                 {"noise_rate", cfg.noise_rate},
                 {"jobs", cfg.jobs}};
  j["seed"] = seed;
  j["inputs"] = nlohmann::json::object();
  nlohmann::json outs;
  for (const char* f : {"calib.txt", "events.txt", "groundtruth.txt", "imu.txt", "plane.txt"})
    if (std::filesystem::exists(cfg.dir + "/" + f))
      outs[f] = evstab::sha1_file(cfg.dir + "/" + f);
  j["outputs"] = outs;
  std::ofstream mf(cfg.dir + "/manifest.json");
  mf << j.dump(2) << "\n";

  std::printf("wrote %s\n", cfg.dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"event-camera stabilization and translation estimation"};
  app.require_subcommand(1);

  // simulate
  auto* sim = app.add_subcommand("simulate", "render a synthetic event/frame dataset");
  std::string preset = "rot-dominant", resolution;
  unsigned seed = 1;
  double sim_threshold = 0, duration = 0;
  evstab::sim::ExportConfig ecfg;
  sim->add_option("--preset", preset,
                  "rot-dominant|mixed-6dof|fast-switching|pure-rotation")
      ->default_val(preset);
  sim->add_option("--seed", seed, "texture and noise seed")->default_val(seed);
  sim->add_option("--out", ecfg.dir, "output dataset directory")->required();
  sim->add_option("--threshold", sim_threshold, "event contrast threshold override");
  sim->add_option("--resolution", resolution, "sensor size WxH override");
  sim->add_option("--duration", duration, "sequence length override, seconds");
  sim->add_option("--frame-rate", ecfg.frame_rate)->default_val(ecfg.frame_rate);
  sim->add_option("--imu-rate", ecfg.imu_rate)->default_val(ecfg.imu_rate);
  sim->add_option("--pose-rate", ecfg.pose_rate)->default_val(ecfg.pose_rate);
  sim->add_option("--gtflow-grid", ecfg.gtflow_grid)->default_val(ecfg.gtflow_grid);
  sim->add_option("--jitter-sigma", ecfg.jitter_sigma, "timestamp noise sigma, seconds")
      ->default_val(ecfg.jitter_sigma);
  sim->add_option("--noise-rate", ecfg.noise_rate, "salt-and-pepper events per second")
      ->default_val(ecfg.noise_rate);
  sim->add_option("--jobs", ecfg.jobs)->default_val(ecfg.jobs);
  std::string sim_config;
  sim->add_option("--config", sim_config, "key=value config file; command-line flags win");

  // stabilize / velocity / track share the pipeline flags
  RunConfig scfg, vcfg, tcfg;
  PipelineArgs sargs, vargs, targs;
  auto* stab = app.add_subcommand("stabilize", "write rotationally stabilized events or frames");
  sargs.attach(stab, scfg);
  auto* vel = app.add_subcommand("velocity", "estimate translation direction per window");
  vargs.attach(vel, vcfg);
  auto* trk = app.add_subcommand("track", "run feature tracking and report metrics");
  targs.attach(trk, tcfg);

  // eval
  auto* ev = app.add_subcommand("eval", "compare two velocity runs on identical inputs");
  std::string run_a, run_b, eval_out;
  ev->add_option("--run-a", run_a, "first run directory")->required();
  ev->add_option("--run-b", run_b, "second run directory")->required();
  ev->add_option("--out", eval_out, "where to write eval.csv");

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed()) {
      if (!sim_config.empty()) apply_config_file(*sim, sim_config);
      return cmd_simulate(preset, seed, ecfg, sim_threshold, resolution, duration);
    }
    if (stab->parsed()) {
      sargs.finish(scfg);
      if (scfg.mode == "events" && scfg.representation == "frame") scfg.representation = "iwe";
      const auto r = evstab::run_stabilize(scfg);
      std::printf("stabilized %s: %ld events, %d frames, %d saccades\n", scfg.dataset.c_str(),
                  long(r.events_out), r.frames_out, r.saccades);
      return 0;
    }
    if (vel->parsed()) {
      vargs.finish(vcfg);
      if (vcfg.mode == "frames") vcfg.representation = "frame";
      const auto r = evstab::run_velocity(vcfg);
      std::printf("windows=%d solves=%zu skipped=%d saccades=%d\n", r.windows, r.rows.size(),
                  r.pairs_skipped, r.saccades);
      if (std::isfinite(r.mae_deg)) std::printf("MAE %.4f deg\n", r.mae_deg);
      std::printf("median solve %.3f ms, median flow %.3f px\n", r.median_solve_ms,
                  r.median_flow_px);
      return 0;
    }
    if (trk->parsed()) {
      targs.finish(tcfg);
      if (tcfg.mode == "frames") tcfg.representation = "frame";
      const auto r = evstab::run_track(tcfg);
      std::printf("tracks est=%d gt=%d valid=%d segments=%d saccades=%d\n", r.est_tracks,
                  r.gt_tracks, r.metrics.valid_tracks, r.segments, r.saccades);
      std::printf("TE %.3f  TTE %.3f  ETE %.3f  NFA %.3f  TFA %.3f\n", r.metrics.TE,
                  r.metrics.TTE, r.metrics.ETE, r.metrics.NFA, r.metrics.TFA);
      return 0;
    }
    if (ev->parsed()) {
      const auto r = evstab::run_eval(run_a, run_b, eval_out);
      std::printf("MAE a=%.4f b=%.4f delta=%.4f improvement=%.1f%%\n", r.mae_a, r.mae_b,
                  r.mae_delta, r.improvement_pct);
      std::printf("median solve a=%.3f ms (n=%ld) b=%.3f ms (n=%ld) ratio=%.3f\n", r.median_ms_a,
                  r.solves_a, r.median_ms_b, r.solves_b, r.runtime_ratio);
      return 0;
    }
  } catch (const evstab::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
