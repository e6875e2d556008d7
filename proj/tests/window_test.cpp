#include <random>
#include <vector>

#include "doctest.h"
#include "evstab/window.hpp"
#include "helpers.hpp"

using namespace evstab;

namespace {

const CameraModel kCam(199.0, 199.0, 120.0, 90.0, 240, 180);

std::vector<Event> random_stream(int n, unsigned seed, double out_of_fov_frac = 0.0) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> ux(0, 239), uy(0, 179), uo(0, 1);
  std::vector<Event> ev;
  double t = 0;
  for (int i = 0; i < n; ++i) {
    t += 1e-5;
    Event e{t, ux(rng), uy(rng), uo(rng) < 0.5 ? 1 : -1};
    if (uo(rng) < out_of_fov_frac) e.x = -20.0 + uo(rng);  // carried, never counted
    ev.push_back(e);
  }
  return ev;
}

// scalar reference implementation of the area-count rule
std::vector<std::size_t> oracle_boundaries(const std::vector<Event>& ev, int rows, int cols,
                                           int threshold) {
  std::vector<std::size_t> closes;
  std::vector<int> counts(static_cast<std::size_t>(rows) * cols, 0);
  for (std::size_t i = 0; i < ev.size(); ++i) {
    if (!kCam.in_bounds(ev[i].x, ev[i].y)) continue;
    const int tx = std::min(static_cast<int>(ev[i].x * cols / kCam.width), cols - 1);
    const int ty = std::min(static_cast<int>(ev[i].y * rows / kCam.height), rows - 1);
    int& c = counts[static_cast<std::size_t>(ty) * cols + tx];
    if (++c > threshold) {
      closes.push_back(i);
      std::fill(counts.begin(), counts.end(), 0);
    }
  }
  return closes;
}

}  // namespace

TEST_CASE("windows close exactly where the scalar oracle closes them") {
  const auto ev = random_stream(20000, 51);
  for (int threshold : {50, 200, 500}) {
    const auto windows = slice_by_area_count(ev, 26, 34, threshold, kCam);
    const auto closes = oracle_boundaries(ev, 26, 34, threshold);

    std::size_t cursor = 0;
    std::size_t wi = 0;
    for (; wi < closes.size(); ++wi) {
      REQUIRE(wi < windows.size());
      CHECK_FALSE(windows[wi].partial);
      CHECK(windows[wi].events.size() == closes[wi] - cursor + 1);
      CHECK(windows[wi].events.back().t == ev[closes[wi]].t);
      cursor = closes[wi] + 1;
    }
    if (cursor < ev.size()) {
      REQUIRE(windows.size() == closes.size() + 1);
      CHECK(windows.back().partial);
    } else {
      CHECK(windows.size() == closes.size());
    }
  }
}

TEST_CASE("concatenating windows reproduces the stream exactly") {
  const auto ev = random_stream(8000, 52, 0.1);
  const auto windows = slice_by_area_count(ev, 26, 34, 100, kCam);
  std::vector<Event> cat;
  for (const auto& w : windows) cat.insert(cat.end(), w.events.begin(), w.events.end());
  REQUIRE(cat.size() == ev.size());
  for (std::size_t i = 0; i < ev.size(); ++i) {
    CHECK(cat[i].t == ev[i].t);
    CHECK(cat[i].x == ev[i].x);
    CHECK(cat[i].y == ev[i].y);
    CHECK(cat[i].p == ev[i].p);
  }
}

TEST_CASE("each closed window has exactly one tile at threshold plus one") {
  const auto ev = random_stream(20000, 53);
  const int rows = 26, cols = 34, threshold = 60;
  const auto windows = slice_by_area_count(ev, rows, cols, threshold, kCam);
  for (const auto& w : windows) {
    if (w.partial) continue;
    std::vector<int> counts(static_cast<std::size_t>(rows) * cols, 0);
    for (const auto& e : w.events) {
      if (!kCam.in_bounds(e.x, e.y)) continue;
      const int tx = std::min(static_cast<int>(e.x * cols / kCam.width), cols - 1);
      const int ty = std::min(static_cast<int>(e.y * rows / kCam.height), rows - 1);
      ++counts[static_cast<std::size_t>(ty) * cols + tx];
    }
    int at_limit = 0, over = 0;
    for (int c : counts) {
      if (c == threshold + 1) ++at_limit;
      if (c > threshold + 1) ++over;
    }
    CHECK(at_limit == 1);
    CHECK(over == 0);
    CHECK(w.tile_rows == rows);
    CHECK(w.tile_cols == cols);
  }
}

TEST_CASE("out-of-FOV events are carried but never close a window") {
  std::vector<Event> ev;
  for (int i = 0; i < 1000; ++i) ev.push_back({1e-5 * (i + 1), -5.0, 10.0, 1});
  const auto windows = slice_by_area_count(ev, 4, 4, 10, kCam);
  REQUIRE(windows.size() == 1);
  CHECK(windows[0].partial);
  CHECK(windows[0].events.size() == 1000);
}

TEST_CASE("a single hot pixel closes after threshold plus one hits") {
  WindowSlicer slicer(4, 4, 10, kCam);
  std::optional<EventWindow> closed;
  int pushed = 0;
  while (!closed) {
    ++pushed;
    closed = slicer.push({1e-4 * pushed, 60.0, 60.0, 1}, Quat::identity());
    REQUIRE(pushed <= 11);
  }
  CHECK(pushed == 11);
  CHECK(closed->events.size() == 11);
  CHECK(closed->t_end == doctest::Approx(1e-4 * 11));
  CHECK(slicer.pending() == 0);

  // counters reset: the next closure takes another 11 events
  closed.reset();
  int second = 0;
  while (!closed) {
    ++second;
    closed = slicer.push({1e-3 + 1e-4 * second, 60.0, 60.0, 1}, Quat::identity());
    REQUIRE(second <= 11);
  }
  CHECK(second == 11);
}

TEST_CASE("explicit count coordinates override the event's own position") {
  WindowSlicer slicer(4, 4, 5, kCam);
  // events sit far apart, but all COUNT in one tile via count coords
  std::optional<EventWindow> closed;
  for (int i = 0; i < 6; ++i) {
    CHECK_FALSE(closed.has_value());
    closed = slicer.push({1e-4 * (i + 1), 30.0 * i, 20.0, 1}, 10.0, 10.0, Quat::identity());
  }
  REQUIRE(closed.has_value());
  CHECK(closed->events.size() == 6);
}

TEST_CASE("flush emits the partial remainder once") {
  WindowSlicer slicer(4, 4, 100, kCam);
  for (int i = 0; i < 7; ++i) slicer.push({1e-4 * (i + 1), 10.0, 10.0, 1}, Quat::identity());
  CHECK(slicer.pending() == 7);
  auto w = slicer.flush();
  REQUIRE(w.has_value());
  CHECK(w->partial);
  CHECK(w->events.size() == 7);
  CHECK_FALSE(slicer.flush().has_value());
  CHECK(slicer.pending() == 0);
}

TEST_CASE("window records the reference orientation at creation") {
  WindowSlicer slicer(2, 2, 3, kCam);
  const Quat qa = Quat::from_axis_angle({0, 0, 1}, 0.2);
  const Quat qb = Quat::from_axis_angle({0, 0, 1}, 0.9);
  slicer.push({0.001, 10, 10, 1}, qa);
  slicer.push({0.002, 10, 10, 1}, qb);  // later pushes do not retag the window
  slicer.push({0.003, 10, 10, 1}, qb);
  const auto w = slicer.push({0.004, 10, 10, 1}, qb);
  REQUIRE(w.has_value());
  CHECK(w->q_ref.angle_to(qa) < 1e-12);
  CHECK(w->t_start == doctest::Approx(0.001));
}

TEST_CASE("fixed-count and fixed-duration baselines slice as named") {
  const auto ev = random_stream(1000, 54);
  const auto by_count = slice_fixed_count(ev, 300);
  REQUIRE(by_count.size() == 4);
  CHECK(by_count[0].events.size() == 300);
  CHECK(by_count[3].events.size() == 100);
  CHECK(by_count[3].partial);

  const auto by_dt = slice_fixed_duration(ev, 2.5e-3);
  std::size_t total = 0;
  for (const auto& w : by_dt) {
    total += w.events.size();
    CHECK(w.t_end - w.t_start <= 2.5e-3 + 1e-12);
  }
  CHECK(total == ev.size());
}
