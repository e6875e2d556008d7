#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Core>

namespace evstab {

/// Scalar field over the pixel lattice: a frame, an IWE, or a time surface.
/// Values are stored row-major.
struct ImageGrid {
  int width = 0;
  int height = 0;
  double t = 0;  // seconds
  std::vector<double> values;

  ImageGrid() = default;
  ImageGrid(int w, int h, double t = 0.0, double fill = 0.0)
      : width(w), height(h), t(t), values(static_cast<std::size_t>(w) * h, fill) {}

  double& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }
  double at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }

  bool contains(double x, double y) const {
    return x >= 0.0 && x <= width - 1.0 && y >= 0.0 && y <= height - 1.0;
  }

  /// Bilinear sample; caller guarantees (x, y) is inside [0, w-1] x [0, h-1].
  double sample(double x, double y) const {
    int x0 = static_cast<int>(x);
    int y0 = static_cast<int>(y);
    if (x0 >= width - 1) x0 = width - 2;
    if (y0 >= height - 1) y0 = height - 2;
    if (x0 < 0) x0 = 0;
    if (y0 < 0) y0 = 0;
    const double ax = x - x0;
    const double ay = y - y0;
    const double v00 = at(x0, y0), v10 = at(x0 + 1, y0);
    const double v01 = at(x0, y0 + 1), v11 = at(x0 + 1, y0 + 1);
    return (1 - ay) * ((1 - ax) * v00 + ax * v10) + ay * ((1 - ax) * v01 + ax * v11);
  }

  double mean() const {
    double s = 0;
    for (double v : values) s += v;
    return values.empty() ? 0.0 : s / static_cast<double>(values.size());
  }

  double variance() const {
    if (values.empty()) return 0.0;
    const double m = mean();
    double s = 0;
    for (double v : values) s += (v - m) * (v - m);
    return s / static_cast<double>(values.size());
  }
};

}  // namespace evstab
