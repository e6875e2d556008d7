#pragma once

#include <vector>

#include <Eigen/Core>

#include "evstab/image_grid.hpp"

namespace evstab {

enum class FlowSource { Frame, IWE, TS };

struct FlowSample {
  Eigen::Vector2d x;  // pixel position in the previous grid
  Eigen::Vector2d f;  // px/s
  double quality = 1.0;  // exp(-residual), in [0,1]
};

struct FlowSet {
  std::vector<FlowSample> samples;
  double dt = 1.0;  // seconds between grids
  FlowSource source_kind = FlowSource::Frame;
};

/// Harris corners (k = 0.04, Sobel gradients, 3x3 window), non-maximum
/// suppressed at min_distance, strongest max_n returned. Throws NoTexture
/// when fewer than 2 corners clear the response threshold.
std::vector<Eigen::Vector2d> detect_corners(const ImageGrid& img, int max_n,
                                            double min_distance = 8.0);

struct LkOptions {
  int levels = 3;
  int window = 15;  // odd window side length, px
  int iters = 20;
  double convergence = 0.01;  // px
  double min_eig = 1e-7;      // aperture rejection on the gradient matrix
};

/// Pyramidal Lucas-Kanade at the given points. Velocities are displacement
/// divided by (next.t - prev.t). Points that fail to converge, leave the
/// image, or sit on gradient-free patches are dropped.
FlowSet lk_flow(const ImageGrid& prev, const ImageGrid& next,
                const std::vector<Eigen::Vector2d>& points, const LkOptions& opts = {});

/// LK displacement for a single point at a known pyramid; building blocks
/// exposed for the tracker.
struct Pyramid {
  std::vector<ImageGrid> levels;
};
Pyramid build_pyramid(const ImageGrid& img, int levels);

struct LkResult {
  Eigen::Vector2d displacement = Eigen::Vector2d::Zero();
  double residual = 0.0;
  bool ok = false;
};
LkResult lk_point(const Pyramid& prev, const Pyramid& next, const Eigen::Vector2d& point,
                  const LkOptions& opts);

}  // namespace evstab
