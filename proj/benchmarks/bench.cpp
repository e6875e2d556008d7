#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "evstab/attitude.hpp"
#include "evstab/egomotion.hpp"
#include "evstab/optical_flow.hpp"
#include "evstab/representation.hpp"
#include "evstab/stabilize.hpp"

using namespace evstab;

namespace {

const CameraModel kCam(199.0, 199.0, 120.0, 90.0, 240, 180);

std::vector<Event> random_events(int n, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> ux(0, 239), uy(0, 179);
  std::vector<Event> ev;
  ev.reserve(n);
  double t = 0;
  for (int i = 0; i < n; ++i) {
    t += 2e-6;
    ev.push_back({t, ux(rng), uy(rng), (i & 1) ? 1 : -1});
  }
  return ev;
}

AttitudeTrack wobble_track(double t1) {
  std::vector<double> ts;
  std::vector<Quat> qs;
  for (double t = 0; t <= t1 + 1e-9; t += 1e-3) {
    ts.push_back(t);
    qs.push_back(Quat::from_axis_angle({0.2, 0.9, 0.38}, 0.1 * std::sin(4.0 * t)));
  }
  return AttitudeTrack(std::move(ts), std::move(qs), AttitudeSource::GroundTruth);
}

FlowSet synthetic_flows(int n, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> ux(5, 234), uy(5, 174), uz(1.0, 4.0);
  const Eigen::Vector3d V = Eigen::Vector3d(0.4, -0.2, 0.89).normalized();
  const Eigen::Vector3d w(0.15, -0.1, 0.2);
  FlowSet fs;
  fs.dt = 0.02;
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector2d px(ux(rng), uy(rng));
    const Eigen::Vector2d nx = pixel_to_normalized(kCam, px);
    const Eigen::Vector2d fn = sensitivity_A(nx) * V / uz(rng) + sensitivity_B(nx) * w;
    fs.samples.push_back({px, {fn.x() * kCam.fx, fn.y() * kCam.fy}, 1.0});
  }
  return fs;
}

ImageGrid bumps_image(int w, int h, double shift, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> ux(0.0, w - 1.0), uy(0.0, h - 1.0);
  std::vector<Eigen::Vector2d> centers;
  for (int i = 0; i < 40; ++i) centers.push_back({ux(rng), uy(rng)});
  ImageGrid g(w, h, shift > 0 ? 0.04 : 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double v = 0;
      for (const auto& c : centers) {
        const double dx = x - shift - c.x(), dy = y - c.y();
        v += std::exp(-(dx * dx + dy * dy) / 18.0);
      }
      g.at(x, y) = std::min(v, 1.0);
    }
  return g;
}

void BM_StabilizeEvents(benchmark::State& state) {
  const auto events = random_events(static_cast<int>(state.range(0)), 31);
  const auto track = wobble_track(events.back().t);
  const auto lut = build_undistort_lut(kCam);
  auto st = make_stabilizer_state(kCam);
  st.q_ref = track.at(0.0);
  st.has_ref = true;
  std::vector<Event> out;
  for (auto _ : state) {
    out.clear();
    stabilize_events(events, track, st, kCam, lut, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_StabilizeEvents)->Arg(100000)->Unit(benchmark::kMillisecond);

void BM_RenderIwe(benchmark::State& state) {
  EventWindow w;
  w.events = random_events(static_cast<int>(state.range(0)), 32);
  w.t_start = w.events.front().t;
  w.t_end = w.events.back().t;
  WarpParams theta(3, 4, 240, 180);
  for (auto& th : theta.theta) th = {120.0, -60.0};
  for (auto _ : state) {
    auto iwe = render_iwe(w, theta, 1.0, kCam);
    benchmark::DoNotOptimize(iwe.values.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_RenderIwe)->Arg(10000)->Unit(benchmark::kMillisecond);

void BM_MaximizeContrast(benchmark::State& state) {
  EventWindow w;
  w.events = random_events(8000, 33);
  w.t_start = w.events.front().t;
  w.t_end = w.events.back().t;
  for (auto _ : state) {
    auto theta = maximize_contrast(w, kCam, {});
    benchmark::DoNotOptimize(theta.theta.data());
  }
}
BENCHMARK(BM_MaximizeContrast)->Unit(benchmark::kMillisecond);

void BM_LkFlow(benchmark::State& state) {
  const auto prev = bumps_image(240, 180, 0.0, 34);
  const auto next = bumps_image(240, 180, 1.7, 34);
  const auto pts = detect_corners(prev, 60);
  for (auto _ : state) {
    auto flow = lk_flow(prev, next, pts);
    benchmark::DoNotOptimize(flow.samples.data());
  }
}
BENCHMARK(BM_LkFlow)->Unit(benchmark::kMillisecond);

void BM_ErlvSolve(benchmark::State& state) {
  const auto flows = synthetic_flows(static_cast<int>(state.range(0)), 35);
  for (auto _ : state) {
    auto est = erlv_solve(flows, kCam);
    benchmark::DoNotOptimize(est.V.data());
  }
}
BENCHMARK(BM_ErlvSolve)->Arg(100)->Arg(500)->Unit(benchmark::kMillisecond);

void BM_ErlFullSolve(benchmark::State& state) {
  const auto flows = synthetic_flows(static_cast<int>(state.range(0)), 35);
  for (auto _ : state) {
    auto est = erl_full_solve(flows, kCam);
    benchmark::DoNotOptimize(est.V.data());
  }
}
BENCHMARK(BM_ErlFullSolve)->Arg(100)->Arg(500)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
