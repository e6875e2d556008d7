#pragma once

#include <vector>

#include <Eigen/Core>

#include "evstab/image_grid.hpp"
#include "evstab/optical_flow.hpp"

namespace evstab {

enum class TrackStatus { Active, Lost, Restarted };

struct TrackPoint {
  double t;
  Eigen::Vector2d x;
};

struct FeatureTrack {
  int id = 0;
  std::vector<TrackPoint> samples;  // time-ordered
  TrackStatus status = TrackStatus::Active;
  double birth_t = 0;
  double death_t = 0;  // time of the last appended sample

  double age() const { return samples.empty() ? 0.0 : samples.back().t - birth_t; }
};

struct KltOptions {
  LkOptions lk;
  int max_corners = 80;
  double min_distance = 8.0;
};

/// Corner detection for the tracker: Harris corners with those whose LK
/// patch touches invalid pixels of `mask` (values < 0.5) removed. A null
/// mask keeps everything.
std::vector<Eigen::Vector2d> masked_corners(const ImageGrid& img, const KltOptions& opts,
                                            const ImageGrid* mask = nullptr);

/// Persistent KLT over a grid sequence: features detected on the first grid
/// are carried forward pair by pair; LK failure or leaving the image loses
/// a track. At each restart time (saccades), surviving tracks are marked
/// Restarted and a fresh detection is made on that grid. `masks`, when
/// given, parallels `grids` and confines detection to valid pixels.
std::vector<FeatureTrack> klt_track(const std::vector<ImageGrid>& grids,
                                    const KltOptions& opts = {},
                                    const std::vector<double>& restart_times = {},
                                    const std::vector<ImageGrid>* masks = nullptr);

/// Exact track propagation: for grid i, track j sits at H_i applied to
/// init[j] (homogeneous 3x3, pixel->pixel from the reference grid).
/// H.size() == times.size(); ids start at id0.
std::vector<FeatureTrack> propagate_gt_tracks(const std::vector<Eigen::Matrix3d>& H,
                                              const std::vector<double>& times,
                                              const std::vector<Eigen::Vector2d>& init,
                                              int id0 = 0);

struct TrackMetrics {
  double TE = 0;   // px, pooled over valid-track samples
  double TTE = 0;  // px, per-track normalized (or pooled under global mode)
  double ETE = 0;  // px, at each valid track's final sample
  double NFA = 0;  // time-age ratio, <= 1
  double TFA = 0;  // sample-count ratio, <= 1
  int valid_tracks = 0;
};

enum class MetricNormalization { PerTrack, Global };

/// Pairs est/gt tracks by id. Errors are measured at GT sample times, with
/// the estimated position linearly interpolated between its two closest
/// samples; a track is valid when its age reaches tau_valid.
TrackMetrics compute_track_metrics(const std::vector<FeatureTrack>& est,
                                   const std::vector<FeatureTrack>& gt, double tau_valid,
                                   MetricNormalization norm = MetricNormalization::PerTrack);

}  // namespace evstab
