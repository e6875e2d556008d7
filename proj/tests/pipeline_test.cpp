#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "evstab/attitude.hpp"
#include "evstab/errors.hpp"
#include "evstab/io.hpp"
#include "evstab/pipeline.hpp"
#include "evstab/representation.hpp"
#include "evstab/simulator.hpp"
#include "evstab/stabilize.hpp"
#include "evstab/window.hpp"
#include "helpers.hpp"
#include "json.hpp"

using namespace evstab;
namespace fs = std::filesystem;

namespace {

// One short rotation-heavy dataset, exported once and shared by the cases
// below (generation dominates this suite's runtime).
const std::string& mini_dataset() {
  static const std::string dir = [] {
    const std::string d = testutil::tmp_dir("mini_ds");
    auto p = sim::make_preset("rot-dominant", 21);
    p.traj.t1 = 0.4;
    sim::ExportConfig cfg;
    cfg.dir = d;
    cfg.threshold = p.threshold;
    sim::export_sequence(p.scene, p.traj, p.camera, cfg);
    return d;
  }();
  return dir;
}

const std::string& velocity_run() {
  static const std::string dir = [] {
    const std::string d = testutil::tmp_dir("mini_vel");
    RunConfig cfg;
    cfg.dataset = mini_dataset();
    cfg.out = d;
    run_velocity(cfg);
    return d;
  }();
  return dir;
}

}  // namespace

TEST_CASE("run_velocity produces estimates, reports and a faithful manifest") {
  RunConfig cfg;
  cfg.dataset = mini_dataset();
  cfg.out = testutil::tmp_dir("velout");
  const auto res = run_velocity(cfg);

  CHECK(res.windows >= 4);
  REQUIRE(!res.rows.empty());
  CHECK(std::isfinite(res.mae_deg));
  for (const auto& row : res.rows) {
    CHECK(row.v_est.norm() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(row.n_flows >= 3);
    CHECK(row.solve_ms >= 0.0);
    CHECK(row.has_gt);
  }

  for (const char* name : {"velocity.csv", "summary.csv", "manifest.json"})
    CHECK(fs::exists(fs::path(cfg.out) / name));

  std::ifstream mf(fs::path(cfg.out) / "manifest.json");
  const auto manifest = nlohmann::json::parse(mf);
  CHECK(manifest.at("command") == "velocity");
  CHECK(manifest.at("config").at("mode") == "events");
  const std::string recorded = manifest.at("inputs").at("events.txt");
  CHECK(recorded == sha1_file(mini_dataset() + "/events.txt"));

  const auto rows = read_csv((fs::path(cfg.out) / "velocity.csv").string());
  REQUIRE(!rows.empty());
  CHECK(rows.front().front() == "t");
  CHECK(rows.size() == res.rows.size() + 1);
  fs::remove_all(cfg.out);
}

TEST_CASE("eval of a run against itself is a wash") {
  const auto& dir = velocity_run();
  const std::string out = testutil::tmp_dir("evalself");
  const auto ev = run_eval(dir, dir, out);
  CHECK(ev.mae_delta == 0.0);
  CHECK(ev.improvement_pct == 0.0);
  CHECK(ev.runtime_ratio == doctest::Approx(1.0));
  CHECK(ev.solves_a == ev.solves_b);
  CHECK(fs::exists(fs::path(out) / "eval.csv"));
  fs::remove_all(out);
}

TEST_CASE("eval refuses runs over different inputs") {
  // clone the dataset, drop the last event line: same layout, new content
  const std::string clone = testutil::tmp_dir("mini_clone");
  fs::remove_all(clone);
  fs::copy(mini_dataset(), clone, fs::copy_options::recursive);
  {
    std::ifstream in(fs::path(clone) / "events.txt");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    const auto cut = text.rfind('\n', text.size() - 2);
    std::ofstream outf(fs::path(clone) / "events.txt", std::ios::trunc);
    outf << text.substr(0, cut + 1);
  }

  RunConfig cfg;
  cfg.dataset = clone;
  cfg.out = testutil::tmp_dir("velclone");
  run_velocity(cfg);

  CHECK_THROWS_AS(run_eval(velocity_run(), cfg.out), InputMismatch);
  fs::remove_all(clone);
  fs::remove_all(cfg.out);
}

TEST_CASE("run_track pairs estimated and propagated tracks") {
  RunConfig cfg;
  cfg.dataset = mini_dataset();
  cfg.out = testutil::tmp_dir("trackout");
  cfg.tau_valid = 0.1;
  const auto res = run_track(cfg);

  CHECK(res.est_tracks > 0);
  CHECK(res.gt_tracks > 0);
  CHECK(res.segments >= 1);
  CHECK(res.metrics.valid_tracks >= 1);
  CHECK(res.metrics.TE >= 0.0);
  CHECK(std::isfinite(res.metrics.TTE));
  CHECK(res.metrics.NFA > 0.0);
  CHECK(res.metrics.NFA <= 1.0);
  CHECK(res.metrics.TFA > 0.0);
  CHECK(res.metrics.TFA <= 1.0);

  CHECK(fs::exists(fs::path(cfg.out) / "metrics.csv"));
  CHECK(fs::exists(fs::path(cfg.out) / "tracks.csv"));
  fs::remove_all(cfg.out);
}

TEST_CASE("constant attitude turns stabilization into a pass-through") {
  const std::string d = testutil::tmp_dir("transl_ds");
  sim::Scene scene = sim::Scene::blobs(9);
  sim::Trajectory tr;
  tr.t1 = 0.3;
  tr.pos[0].terms.push_back({0.25, 0.6, 0.2});
  tr.pos[1].terms.push_back({0.15, 0.9, 1.4});
  const CameraModel cam(199.0, 199.0, 120.0, 90.0, 240, 180);
  sim::ExportConfig ecfg;
  ecfg.dir = d;
  sim::export_sequence(scene, tr, cam, ecfg);

  RunConfig cfg;
  cfg.dataset = d;
  cfg.out = testutil::tmp_dir("stabout");
  const auto res = run_stabilize(cfg);
  CHECK(res.saccades == 0);

  const auto input = read_events(d + "/events.txt");
  const auto output = read_events(cfg.out + "/events.txt");
  REQUIRE(res.events_out == output.size());
  REQUIRE(output.size() == input.size());
  for (std::size_t i = 0; i < input.size(); i += 37) {
    CHECK(output[i].t == doctest::Approx(input[i].t).epsilon(1e-12));
    CHECK(output[i].x == doctest::Approx(input[i].x).epsilon(1e-5));
    CHECK(output[i].y == doctest::Approx(input[i].y).epsilon(1e-5));
    CHECK(output[i].p == input[i].p);
  }
  fs::remove_all(d);
  fs::remove_all(cfg.out);
}

TEST_CASE("configuration combinations are validated up front") {
  RunConfig cfg;
  cfg.dataset = "/nonexistent";

  auto expect_invalid = [](RunConfig c) { CHECK_THROWS_AS(run_velocity(c), InvalidConfig); };

  RunConfig bad = cfg;
  bad.mode = "banana";
  expect_invalid(bad);

  bad = cfg;
  bad.representation = "frame";  // frame representation needs frames mode
  expect_invalid(bad);

  bad = cfg;
  bad.mode = "frames";  // and vice versa
  bad.representation = "iwe";
  expect_invalid(bad);

  bad = cfg;
  bad.solver = "ransac";
  expect_invalid(bad);

  bad = cfg;
  bad.attitude = "vision";
  expect_invalid(bad);

  bad = cfg;
  bad.window_space = "world";
  expect_invalid(bad);

  bad = cfg;
  bad.metric_normalization = "median";
  expect_invalid(bad);

  bad = cfg;
  bad.jobs = 0;
  expect_invalid(bad);
}

TEST_CASE("stabilized pure rotation yields near-identical consecutive images") {
  auto p = sim::make_preset("pure-rotation", 23);
  p.traj.t1 = 0.5;
  const auto events = sim::generate_events(p.scene, p.traj, p.camera, p.threshold, 0.0, 0.5);
  REQUIRE(events.size() > 20000);

  const auto lut = build_undistort_lut(p.camera);

  // stabilized arm vs undistort-only arm over the same event stream
  auto correlations = [&](bool stabilized) {
    auto st = make_stabilizer_state(p.camera);
    st.q_ref = p.traj.orientation(0.0);
    st.has_ref = true;

    WindowSlicer slicer(26, 34, 100, p.camera);
    std::vector<EventWindow> windows;
    for (const auto& e : events) {
      const Event se =
          stabilize_event(e, stabilized ? p.traj.orientation(e.t) : st.q_ref, st, p.camera, lut);
      auto w = slicer.push(se, st.q_ref);
      if (w) windows.push_back(std::move(*w));
    }
    REQUIRE(windows.size() >= 10);

    std::vector<ImageGrid> iwes;
    for (const auto& w : windows) iwes.push_back(render_iwe(w, WarpParams{}, 1.0, p.camera));

    double worst = 1.0, mean = 0.0;
    for (std::size_t i = 1; i < iwes.size(); ++i) {
      const double r = testutil::pearson(iwes[i - 1], iwes[i]);
      worst = std::min(worst, r);
      mean += r;
    }
    return std::pair<double, double>(worst, mean / static_cast<double>(iwes.size() - 1));
  };

  const auto [stab_worst, stab_mean] = correlations(true);
  CHECK(stab_worst > 0.95);
  CHECK(stab_mean > 0.95);
  // without stabilization the scene sweeps across the sensor and consecutive
  // images decorrelate
  const auto [raw_worst, raw_mean] = correlations(false);
  CHECK(raw_mean < 0.6);
  CHECK(raw_worst < stab_worst - 0.3);
}
