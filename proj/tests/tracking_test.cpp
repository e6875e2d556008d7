#include <cmath>
#include <vector>

#include "doctest.h"
#include "evstab/errors.hpp"
#include "evstab/tracking.hpp"
#include "helpers.hpp"

using namespace evstab;

namespace {

FeatureTrack make_track(int id, const std::vector<double>& ts,
                        const std::vector<Eigen::Vector2d>& xs) {
  FeatureTrack tr;
  tr.id = id;
  tr.birth_t = ts.front();
  tr.death_t = ts.back();
  for (std::size_t i = 0; i < ts.size(); ++i) tr.samples.push_back({ts[i], xs[i]});
  return tr;
}

}  // namespace

TEST_CASE("propagate_gt_tracks applies each homography exactly") {
  const std::vector<double> times{0.0, 0.1, 0.2};
  const std::vector<Eigen::Vector2d> init{{10, 20}, {100, 50}};

  SUBCASE("identity") {
    const std::vector<Eigen::Matrix3d> H(3, Eigen::Matrix3d::Identity());
    const auto tracks = propagate_gt_tracks(H, times, init, 7);
    REQUIRE(tracks.size() == 2);
    CHECK(tracks[0].id == 7);
    CHECK(tracks[1].id == 8);
    CHECK(tracks[0].birth_t == 0.0);
    CHECK(tracks[0].death_t == 0.2);
    CHECK(tracks[0].age() == doctest::Approx(0.2));
    for (const auto& tr : tracks)
      for (std::size_t i = 0; i < times.size(); ++i) {
        CHECK(tr.samples[i].t == times[i]);
        CHECK((tr.samples[i].x - init[tr.id - 7]).norm() < 1e-15);
      }
  }

  SUBCASE("projective") {
    Eigen::Matrix3d H;
    H << 1, 0.001, 5, 0, 1, -3, 0.0001, 0, 1;
    const auto tracks = propagate_gt_tracks({Eigen::Matrix3d::Identity(), H}, {0.0, 0.1}, init);
    for (std::size_t j = 0; j < init.size(); ++j) {
      const Eigen::Vector3d v = H * Eigen::Vector3d(init[j].x(), init[j].y(), 1.0);
      const Eigen::Vector2d expect(v.x() / v.z(), v.y() / v.z());
      CHECK((tracks[j].samples[1].x - expect).norm() < 1e-12);
    }
  }

  SUBCASE("size mismatch") {
    CHECK_THROWS_AS(propagate_gt_tracks({Eigen::Matrix3d::Identity()}, times, init),
                    LengthMismatch);
  }
}

TEST_CASE("KLT follows a rigid translation across grids") {
  testutil::BumpField field(40, 240, 180, 3.0, 101);
  std::vector<ImageGrid> grids;
  for (int i = 0; i < 5; ++i) grids.push_back(field.render(240, 180, 0.1 * i, 2.0 * i, 1.0 * i));

  const auto tracks = klt_track(grids);
  REQUIRE(!tracks.empty());
  int full = 0;
  for (const auto& tr : tracks) {
    if (tr.samples.size() < 5) {
      CHECK(tr.status == TrackStatus::Lost);
      continue;
    }
    ++full;
    CHECK(tr.status == TrackStatus::Active);
    CHECK(tr.age() == doctest::Approx(0.4));
    for (int i = 1; i < 5; ++i) {
      const Eigen::Vector2d expect = tr.samples[0].x + Eigen::Vector2d(2.0 * i, 1.0 * i);
      CHECK((tr.samples[i].x - expect).norm() < 0.3);
    }
  }
  CHECK(full >= 5);
}

TEST_CASE("tracks leaving the image are marked Lost") {
  testutil::BumpField field(25, 120, 90, 3.0, 102);
  std::vector<ImageGrid> grids;
  for (int i = 0; i < 5; ++i) grids.push_back(field.render(120, 90, 0.1 * i, 35.0 * i, 0.0));
  const auto tracks = klt_track(grids);
  int lost = 0;
  for (const auto& tr : tracks)
    if (tr.status == TrackStatus::Lost) {
      ++lost;
      CHECK(tr.death_t < grids.back().t);
    }
  CHECK(lost > 0);
}

TEST_CASE("restart times retire survivors and spawn a fresh generation") {
  testutil::BumpField field(30, 160, 120, 3.0, 103);
  std::vector<ImageGrid> grids;
  for (int i = 0; i < 5; ++i) grids.push_back(field.render(160, 120, 0.1 * i, 1.0 * i, 0.0));

  const auto tracks = klt_track(grids, {}, {0.25});
  int restarted = 0, second_gen = 0;
  for (const auto& tr : tracks) {
    // no track may straddle the restart boundary
    CHECK_FALSE((tr.birth_t < 0.25 && tr.death_t > 0.25));
    if (tr.status == TrackStatus::Restarted) {
      ++restarted;
      CHECK(tr.death_t == doctest::Approx(0.2));
    }
    // border corners can fail LK right after the respawn and retire Lost
    // with a single sample; survivors must span grids 3..4 exactly
    if (tr.birth_t == doctest::Approx(0.3) && tr.status == TrackStatus::Active) {
      ++second_gen;
      CHECK(tr.samples.size() == 2);
      CHECK(tr.death_t == doctest::Approx(0.4));
    }
  }
  CHECK(restarted > 0);
  CHECK(second_gen > 0);
}

TEST_CASE("mask bookkeeping") {
  testutil::BumpField field(30, 160, 120, 3.0, 104);
  std::vector<ImageGrid> grids{field.render(160, 120, 0.0), field.render(160, 120, 0.1)};
  std::vector<ImageGrid> masks{ImageGrid(160, 120, 0.0, 1.0)};
  CHECK_THROWS_AS(klt_track(grids, {}, {}, &masks), LengthMismatch);
}

TEST_CASE("masked_corners drops detections near invalid pixels") {
  testutil::BumpField field(40, 240, 180, 3.0, 105);
  const auto img = field.render(240, 180, 0.0);
  KltOptions opts;

  const auto all = masked_corners(img, opts);
  REQUIRE(all.size() >= 4);
  bool any_left = false;
  for (const auto& c : all) any_left |= c.x() < 110;
  REQUIRE(any_left);

  ImageGrid mask(240, 180, 0.0, 0.0);
  for (int y = 0; y < 180; ++y)
    for (int x = 120; x < 240; ++x) mask.at(x, y) = 1.0;
  const auto kept = masked_corners(img, opts, &mask);
  for (const auto& c : kept) CHECK(c.x() > 119.0);
  CHECK(kept.size() < all.size());
}

TEST_CASE("metrics are zero and ratios one when tracks coincide") {
  const std::vector<double> ts{0.0, 0.1, 0.2, 0.3};
  const std::vector<Eigen::Vector2d> xs{{10, 10}, {12, 11}, {14, 12}, {16, 13}};
  const auto t0 = make_track(0, ts, xs);
  const auto m = compute_track_metrics({t0}, {t0}, 0.2);
  CHECK(m.TE == 0.0);
  CHECK(m.TTE == 0.0);
  CHECK(m.ETE == 0.0);
  CHECK(m.NFA == 1.0);
  CHECK(m.TFA == 1.0);
  CHECK(m.valid_tracks == 1);
}

TEST_CASE("a uniform one-pixel offset shows up in every error") {
  const std::vector<double> ts{0.0, 0.1, 0.2};
  const std::vector<Eigen::Vector2d> xs{{10, 10}, {20, 10}, {30, 10}};
  auto est = make_track(3, ts, xs);
  for (auto& s : est.samples) s.x += Eigen::Vector2d(1, 0);
  const auto gt = make_track(3, ts, xs);
  const auto m = compute_track_metrics({est}, {gt}, 0.1);
  CHECK(m.TE == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(m.TTE == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(m.ETE == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("young tracks are not valid") {
  const std::vector<double> ts{0.0, 0.05};
  const std::vector<Eigen::Vector2d> xs{{10, 10}, {11, 10}};
  const auto tr = make_track(0, ts, xs);
  CHECK_THROWS_AS(compute_track_metrics({tr}, {tr}, 0.2), NoValidTracks);
}

TEST_CASE("partial temporal coverage sets NFA and TFA") {
  const std::vector<double> gt_ts{0.0, 0.1, 0.2, 0.3, 0.4};
  std::vector<Eigen::Vector2d> gt_xs;
  for (double t : gt_ts) gt_xs.push_back({10 + 50 * t, 20});
  const auto gt = make_track(0, gt_ts, gt_xs);

  const std::vector<double> est_ts{0.0, 0.1, 0.2};
  const auto est = make_track(0, est_ts, {gt_xs[0], gt_xs[1], gt_xs[2]});

  const auto m = compute_track_metrics({est}, {gt}, 0.1);
  CHECK(m.NFA == doctest::Approx(0.5).epsilon(1e-12));   // 0.2 s of 0.4 s
  CHECK(m.TFA == doctest::Approx(0.6).epsilon(1e-12));   // 3 of 5 samples
  CHECK(m.TE == 0.0);
}

TEST_CASE("per-track and global normalization weigh tracks differently") {
  // track 0: 2 samples, 1 px error; track 1: 4 samples, 3 px error
  const auto gt0 = make_track(0, {0.0, 1.0}, {{10, 10}, {20, 10}});
  auto est0 = gt0;
  for (auto& s : est0.samples) s.x += Eigen::Vector2d(0, 1);

  const auto gt1 =
      make_track(1, {0.0, 1.0, 2.0, 3.0}, {{50, 50}, {55, 50}, {60, 50}, {65, 50}});
  auto est1 = gt1;
  for (auto& s : est1.samples) s.x += Eigen::Vector2d(0, 3);

  const auto per = compute_track_metrics({est0, est1}, {gt0, gt1}, 0.5);
  CHECK(per.TE == doctest::Approx((2.0 * 1 + 4.0 * 3) / 6.0).epsilon(1e-12));
  CHECK(per.TTE == doctest::Approx(2.0).epsilon(1e-12));  // (1 + 3) / 2
  CHECK(per.ETE == doctest::Approx(2.0).epsilon(1e-12));

  const auto glob =
      compute_track_metrics({est0, est1}, {gt0, gt1}, 0.5, MetricNormalization::Global);
  CHECK(glob.TTE == doctest::Approx(glob.TE).epsilon(1e-12));
  CHECK(glob.TTE != doctest::Approx(per.TTE));
}

TEST_CASE("estimates are interpolated at ground-truth times") {
  // est sampled at 0 and 0.2 moving linearly; gt asks at 0.1
  const auto est = make_track(0, {0.0, 0.2}, {{10, 10}, {30, 10}});
  const auto gt = make_track(0, {0.0, 0.1, 0.2}, {{10, 10}, {20, 10}, {30, 10}});
  const auto m = compute_track_metrics({est}, {gt}, 0.1);
  CHECK(m.TE == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("unmatched ids are ignored") {
  const auto est = make_track(5, {0.0, 0.3}, {{10, 10}, {20, 10}});
  const auto gt = make_track(9, {0.0, 0.3}, {{10, 10}, {20, 10}});
  CHECK_THROWS_AS(compute_track_metrics({est}, {gt}, 0.1), NoValidTracks);
}

TEST_CASE("short grid sequences are rejected") {
  testutil::BumpField field(10, 80, 60, 3.0, 106);
  std::vector<ImageGrid> grids{field.render(80, 60, 0.0)};
  CHECK_THROWS_AS(klt_track(grids), InsufficientSamples);
}
