#pragma once

#include <vector>

#include <Eigen/Core>

#include "evstab/camera.hpp"
#include "evstab/image_grid.hpp"
#include "evstab/window.hpp"

namespace evstab {

/// Coarse per-tile translational warp field theta (px/s), bilinearly
/// interpolated between tile centers when queried per event.
struct WarpParams {
  int rows = 0;
  int cols = 0;
  int width = 0, height = 0;  // sensor size the tile grid spans
  std::vector<Eigen::Vector2d> theta;

  WarpParams() = default;
  WarpParams(int rows, int cols, int width, int height)
      : rows(rows),
        cols(cols),
        width(width),
        height(height),
        theta(static_cast<std::size_t>(rows) * cols, Eigen::Vector2d::Zero()) {}

  bool zero() const { return theta.empty(); }
  Eigen::Vector2d& tile(int row, int col) { return theta[static_cast<std::size_t>(row) * cols + col]; }
  const Eigen::Vector2d& tile(int row, int col) const {
    return theta[static_cast<std::size_t>(row) * cols + col];
  }

  /// Flow at an image position: bilinear between the four nearest tile
  /// centers, clamped at the border tiles. Returns zero for empty params.
  Eigen::Vector2d at(double x, double y) const;
};

struct CmaxOptions {
  int tile_rows = 3;
  int tile_cols = 4;
  double cap = 5000.0;   // px/s search radius
  double sigma = 1.0;    // splat width used by the objective
  int budget = 200;      // objective evaluations per tile
  int min_tile_events = 10;
};

/// Image of warped events at w.t_end: each in-FOV event is shifted by
/// theta(x) * (t_end - t) and splatted as a unit-mass Gaussian (width sigma,
/// truncated at 3*sigma, renormalized before boundary clipping). Polarity is
/// ignored.
ImageGrid render_iwe(const EventWindow& w, const WarpParams& theta, double sigma,
                     const CameraModel& c);

/// Per-tile theta maximizing IWE variance: 9x9 grid over [-cap, cap]^2, then
/// Nelder-Mead, within a fixed evaluation budget per tile. The assembled
/// field is kept only if it does not lower the full-window variance below
/// the zero-warp baseline; otherwise all tiles fall back to zero.
WarpParams maximize_contrast(const EventWindow& w, const CameraModel& c,
                             const CmaxOptions& opts = {});

/// Adaptive decay constant and per-pixel last-event times; persists across
/// windows.
struct TimeSurfaceState {
  double tau;          // current decay (s); starts at tau0
  double alpha = 0.3;  // tau_j = (1-alpha)*dt + alpha*tau_{j-1}
  int width = 0, height = 0;
  std::vector<double> last_t;

  TimeSurfaceState(double tau0, int width, int height, double alpha = 0.3);
};

/// Updates tau from the window span, folds the window's events into the
/// last-event grid (nearest pixel), and renders exp(-(t_end - t_last)/tau);
/// pixels that never fired are 0.
ImageGrid render_time_surface(const EventWindow& w, TimeSurfaceState& state);

}  // namespace evstab
