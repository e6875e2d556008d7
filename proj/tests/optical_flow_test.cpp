#include <cmath>
#include <vector>

#include "doctest.h"
#include "evstab/errors.hpp"
#include "evstab/optical_flow.hpp"
#include "helpers.hpp"

using namespace evstab;

namespace {

ImageGrid blocks_image(int w, int h, const std::vector<Eigen::Vector2d>& centers) {
  ImageGrid img(w, h, 0.0, 0.0);
  for (const auto& c : centers) {
    const int cx = static_cast<int>(c.x()), cy = static_cast<int>(c.y());
    for (int dy = -3; dy <= 3; ++dy)
      for (int dx = -3; dx <= 3; ++dx) img.at(cx + dx, cy + dy) = 1.0;
  }
  return img;
}

}  // namespace

TEST_CASE("Harris finds isolated high-contrast blocks") {
  const std::vector<Eigen::Vector2d> centers{
      {40, 40}, {180, 50}, {110, 120}, {60, 150}, {200, 140}};
  const auto img = blocks_image(240, 180, centers);
  const auto corners = detect_corners(img, 40);
  REQUIRE(corners.size() >= 5);

  for (const auto& c : centers) {
    double best = 1e9;
    for (const auto& p : corners) best = std::min(best, (p - c).norm());
    CHECK(best < 4.5);  // block corners sit ~3 px from the center
  }
}

TEST_CASE("constant images have no texture") {
  ImageGrid img(100, 80, 0.0, 0.5);
  CHECK_THROWS_AS(detect_corners(img, 10), NoTexture);
}

TEST_CASE("corner count respects max_n and spacing respects min_distance") {
  testutil::BumpField field(60, 240, 180, 2.5, 81);
  const auto img = field.render(240, 180, 0.0);
  const auto corners = detect_corners(img, 12, 10.0);
  CHECK(corners.size() <= 12);
  REQUIRE(corners.size() >= 2);
  for (std::size_t i = 0; i < corners.size(); ++i)
    for (std::size_t j = i + 1; j < corners.size(); ++j)
      CHECK((corners[i] - corners[j]).norm() >= 10.0);
}

TEST_CASE("LK recovers a pure translation to subpixel accuracy") {
  testutil::BumpField field(40, 240, 180, 3.0, 82);
  const double sx = 1.3, sy = -0.7, dt = 0.05;
  auto prev = field.render(240, 180, 0.0);
  auto next = field.render(240, 180, dt, sx, sy);

  const auto points = detect_corners(prev, 30);
  REQUIRE(points.size() >= 5);
  const auto flow = lk_flow(prev, next, points);
  CHECK(flow.dt == doctest::Approx(dt));
  REQUIRE(flow.samples.size() >= 5);
  for (const auto& s : flow.samples) {
    CHECK(std::abs(s.f.x() * dt - sx) < 0.2);
    CHECK(std::abs(s.f.y() * dt - sy) < 0.2);
    CHECK(s.quality > 0.0);
    CHECK(s.quality <= 1.0);
  }
}

TEST_CASE("identical grids give near-zero flow and quality near one") {
  testutil::BumpField field(30, 160, 120, 3.0, 83);
  auto prev = field.render(160, 120, 0.0);
  auto next = field.render(160, 120, 0.02);
  const auto points = detect_corners(prev, 20);
  const auto flow = lk_flow(prev, next, points);
  REQUIRE(!flow.samples.empty());
  for (const auto& s : flow.samples) {
    CHECK(s.f.norm() * flow.dt < 0.05);
    CHECK(s.quality > 0.9);
  }
}

TEST_CASE("flow velocity scales with the grid timestamps") {
  testutil::BumpField field(25, 160, 120, 3.0, 84);
  auto prev = field.render(160, 120, 0.0);
  auto next = field.render(160, 120, 0.2, 2.0, 0.0);
  const auto points = detect_corners(prev, 15);
  const auto flow = lk_flow(prev, next, points);
  REQUIRE(!flow.samples.empty());
  for (const auto& s : flow.samples) CHECK(s.f.x() == doctest::Approx(10.0).epsilon(0.1));
}

TEST_CASE("non-positive frame spacing is rejected") {
  testutil::BumpField field(10, 80, 60, 3.0, 85);
  auto prev = field.render(80, 60, 0.1);
  auto next = field.render(80, 60, 0.1);
  CHECK_THROWS_AS(lk_flow(prev, next, {{40, 30}}), InvalidConfig);
  next.t = 0.05;
  CHECK_THROWS_AS(lk_flow(prev, next, {{40, 30}}), InvalidConfig);
}

TEST_CASE("oversized LK windows are rejected") {
  testutil::BumpField field(10, 80, 60, 3.0, 86);
  auto prev = field.render(80, 60, 0.0);
  auto next = field.render(80, 60, 0.01);
  LkOptions opts;
  opts.window = 33;
  CHECK_THROWS_AS(lk_flow(prev, next, {{40, 30}}, opts), InvalidConfig);
}

TEST_CASE("pyramid levels halve in size") {
  ImageGrid img(240, 180, 0.0, 0.25);
  const auto pyr = build_pyramid(img, 3);
  REQUIRE(pyr.levels.size() == 3);
  CHECK(pyr.levels[0].width == 240);
  CHECK(pyr.levels[1].width == 120);
  CHECK(pyr.levels[1].height == 90);
  CHECK(pyr.levels[2].width == 60);
  CHECK(pyr.levels[2].height == 45);
}

TEST_CASE("gradient-free patches fail the aperture check") {
  ImageGrid flat(120, 90, 0.0, 0.5);
  ImageGrid flat2(120, 90, 0.02, 0.5);
  const auto pa = build_pyramid(flat, 2);
  const auto pb = build_pyramid(flat2, 2);
  const auto r = lk_point(pa, pb, {60, 45}, LkOptions{});
  CHECK_FALSE(r.ok);
}

TEST_CASE("points tracked out of the image are dropped") {
  testutil::BumpField field(25, 160, 120, 3.0, 87);
  auto prev = field.render(160, 120, 0.0);
  auto next = field.render(160, 120, 0.05, 400.0, 0.0);  // everything leaves
  const auto points = detect_corners(prev, 10);
  const auto flow = lk_flow(prev, next, points);
  CHECK(flow.samples.size() < points.size());
}
