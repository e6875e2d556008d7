#include "evstab/tracking.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <map>

#include "evstab/errors.hpp"

namespace evstab {

std::vector<Eigen::Vector2d> masked_corners(const ImageGrid& img, const KltOptions& opts,
                                            const ImageGrid* mask) {
  auto corners = detect_corners(img, opts.max_corners, opts.min_distance);
  if (!mask) return corners;
  const double r = opts.lk.window / 2 + 1;
  std::vector<Eigen::Vector2d> kept;
  kept.reserve(corners.size());
  for (const auto& c : corners) {
    bool ok = true;
    for (double dy = -r; dy <= r && ok; dy += r)
      for (double dx = -r; dx <= r && ok; dx += r)
        ok = mask->sample(c.x() + dx, c.y() + dy) >= 0.5;
    if (ok) kept.push_back(c);
  }
  return kept;
}

std::vector<FeatureTrack> klt_track(const std::vector<ImageGrid>& grids, const KltOptions& opts,
                                    const std::vector<double>& restart_times,
                                    const std::vector<ImageGrid>* masks) {
  if (grids.size() < 2) throw InsufficientSamples("klt_track needs >= 2 grids");
  if (masks && masks->size() != grids.size())
    throw LengthMismatch("mask count does not match grid count");

  std::vector<FeatureTrack> done;
  std::vector<FeatureTrack> live;
  int next_id = 0;

  auto spawn = [&](const ImageGrid& g, std::size_t idx) {
    const auto corners = masked_corners(g, opts, masks ? &(*masks)[idx] : nullptr);
    for (const auto& c : corners) {
      FeatureTrack tr;
      tr.id = next_id++;
      tr.birth_t = g.t;
      tr.death_t = g.t;
      tr.samples.push_back({g.t, c});
      live.push_back(std::move(tr));
    }
  };

  auto retire = [&](TrackStatus status) {
    for (auto& tr : live) {
      tr.status = status;
      done.push_back(std::move(tr));
    }
    live.clear();
  };

  spawn(grids.front(), 0);
  std::size_t next_restart = 0;

  Pyramid prev_pyr = build_pyramid(grids[0], opts.lk.levels);
  for (std::size_t i = 1; i < grids.size(); ++i) {
    // Saccade boundary between grid i-1 and grid i: restart everything.
    while (next_restart < restart_times.size() && restart_times[next_restart] <= grids[i - 1].t)
      ++next_restart;
    if (next_restart < restart_times.size() && restart_times[next_restart] <= grids[i].t) {
      ++next_restart;
      retire(TrackStatus::Restarted);
      spawn(grids[i], i);
      prev_pyr = build_pyramid(grids[i], opts.lk.levels);
      continue;
    }

    Pyramid next_pyr = build_pyramid(grids[i], opts.lk.levels);
    std::vector<FeatureTrack> survivors;
    survivors.reserve(live.size());
    for (auto& tr : live) {
      const Eigen::Vector2d pos = tr.samples.back().x;
      const LkResult r = lk_point(prev_pyr, next_pyr, pos, opts.lk);
      const Eigen::Vector2d moved = pos + r.displacement;
      if (!r.ok || moved.x() < 0 || moved.y() < 0 || moved.x() > grids[i].width - 1 ||
          moved.y() > grids[i].height - 1) {
        tr.status = TrackStatus::Lost;
        done.push_back(std::move(tr));
        continue;
      }
      tr.samples.push_back({grids[i].t, moved});
      tr.death_t = grids[i].t;
      survivors.push_back(std::move(tr));
    }
    live = std::move(survivors);
    prev_pyr = std::move(next_pyr);
  }
  retire(TrackStatus::Active);

  std::sort(done.begin(), done.end(),
            [](const FeatureTrack& a, const FeatureTrack& b) { return a.id < b.id; });
  return done;
}

std::vector<FeatureTrack> propagate_gt_tracks(const std::vector<Eigen::Matrix3d>& H,
                                              const std::vector<double>& times,
                                              const std::vector<Eigen::Vector2d>& init,
                                              int id0) {
  if (H.size() != times.size()) throw LengthMismatch("homographies/times size mismatch");
  std::vector<FeatureTrack> out;
  out.reserve(init.size());
  for (std::size_t j = 0; j < init.size(); ++j) {
    FeatureTrack tr;
    tr.id = id0 + static_cast<int>(j);
    tr.birth_t = times.empty() ? 0.0 : times.front();
    for (std::size_t i = 0; i < H.size(); ++i) {
      const Eigen::Vector3d v = H[i] * Eigen::Vector3d(init[j].x(), init[j].y(), 1.0);
      tr.samples.push_back({times[i], {v.x() / v.z(), v.y() / v.z()}});
      tr.death_t = times[i];
    }
    out.push_back(std::move(tr));
  }
  return out;
}

namespace {

// Linear interpolation of a track at time t; false when t is outside the
// track's covered span.
bool track_at(const FeatureTrack& tr, double t, Eigen::Vector2d& out) {
  if (tr.samples.empty()) return false;
  if (t < tr.samples.front().t - 1e-12 || t > tr.samples.back().t + 1e-12) return false;
  auto it = std::lower_bound(tr.samples.begin(), tr.samples.end(), t,
                             [](const TrackPoint& p, double tt) { return p.t < tt; });
  if (it == tr.samples.begin()) {
    out = it->x;
    return true;
  }
  if (it == tr.samples.end()) {
    out = tr.samples.back().x;
    return true;
  }
  const TrackPoint& b = *it;
  const TrackPoint& a = *(it - 1);
  const double span = b.t - a.t;
  const double s = span > 0 ? (t - a.t) / span : 0.0;
  out = (1 - s) * a.x + s * b.x;
  return true;
}

}  // namespace

TrackMetrics compute_track_metrics(const std::vector<FeatureTrack>& est,
                                   const std::vector<FeatureTrack>& gt, double tau_valid,
                                   MetricNormalization norm) {
  std::map<int, const FeatureTrack*> gt_by_id;
  for (const auto& g : gt) gt_by_id[g.id] = &g;

  double sum_err = 0;        // pooled over samples
  std::size_t n_err = 0;
  double sum_track_mean = 0;  // per-track means
  double sum_ete = 0;
  double sum_nfa = 0;
  double sum_tfa = 0;
  std::size_t total_est_samples = 0, total_gt_samples = 0;
  int valid = 0;

  for (const auto& e : est) {
    const auto it = gt_by_id.find(e.id);
    if (it == gt_by_id.end()) continue;
    const FeatureTrack& g = *it->second;
    if (e.samples.empty() || g.samples.empty()) continue;
    if (e.age() + 1e-12 < tau_valid) continue;

    double track_sum = 0;
    std::size_t track_n = 0;
    double last_err = 0;
    std::size_t covered = 0;
    for (const TrackPoint& gp : g.samples) {
      Eigen::Vector2d ep;
      if (!track_at(e, gp.t, ep)) continue;
      const double err = (ep - gp.x).norm();
      track_sum += err;
      ++track_n;
      last_err = err;
      ++covered;
    }
    if (track_n == 0) continue;

    ++valid;
    sum_err += track_sum;
    n_err += track_n;
    sum_track_mean += track_sum / static_cast<double>(track_n);
    sum_ete += last_err;

    const double gt_age = g.age();
    const double age_ratio = gt_age > 0 ? std::min(1.0, e.age() / gt_age) : 1.0;
    sum_nfa += age_ratio;
    const double count_ratio =
        std::min(1.0, static_cast<double>(covered) / static_cast<double>(g.samples.size()));
    sum_tfa += count_ratio;
    total_est_samples += covered;
    total_gt_samples += g.samples.size();
  }

  if (valid == 0) throw NoValidTracks("no valid track pairs above tau_valid");

  TrackMetrics m;
  m.valid_tracks = valid;
  m.TE = sum_err / static_cast<double>(n_err);
  if (norm == MetricNormalization::PerTrack) {
    m.TTE = sum_track_mean / static_cast<double>(valid);
    m.TFA = sum_tfa / static_cast<double>(valid);
  } else {
    m.TTE = m.TE;
    m.TFA = total_gt_samples > 0
                ? std::min(1.0, static_cast<double>(total_est_samples) /
                                    static_cast<double>(total_gt_samples))
                : 1.0;
  }
  m.ETE = sum_ete / static_cast<double>(valid);
  m.NFA = sum_nfa / static_cast<double>(valid);
  return m;
}

}  // namespace evstab
