#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "evstab/image_grid.hpp"
#include "evstab/quat.hpp"

namespace testutil {

inline std::filesystem::path tmp_dir(const std::string& tag) {
  const auto p = std::filesystem::temp_directory_path() / ("evstab_test_" + tag);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline evstab::Quat random_quat(std::mt19937& rng) {
  std::normal_distribution<double> n;
  Eigen::Vector3d axis(n(rng), n(rng), n(rng));
  while (axis.norm() < 1e-6) axis = {n(rng), n(rng), n(rng)};
  axis.normalize();
  std::uniform_real_distribution<double> a(-3.0, 3.0);
  return evstab::Quat::from_axis_angle(axis, a(rng));
}

inline Eigen::Vector3d random_unit(std::mt19937& rng) {
  std::normal_distribution<double> n;
  Eigen::Vector3d v(n(rng), n(rng), n(rng));
  while (v.norm() < 1e-6) v = {n(rng), n(rng), n(rng)};
  return v.normalized();
}

// Smooth analytic texture (sum of Gaussian bumps) so shifted renders are
// exact resamples of the same function.
struct BumpField {
  std::vector<Eigen::Vector3d> bumps;  // (cx, cy, amplitude)
  double sigma;

  BumpField(int n, int w, int h, double sigma, unsigned seed) : sigma(sigma) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> ux(0.0, w - 1.0), uy(0.0, h - 1.0), ua(0.3, 1.0);
    for (int i = 0; i < n; ++i) bumps.push_back({ux(rng), uy(rng), ua(rng)});
  }

  double operator()(double x, double y) const {
    double v = 0;
    for (const auto& b : bumps) {
      const double dx = x - b.x(), dy = y - b.y();
      v += b.z() * std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
    }
    return std::min(v, 1.0);
  }

  evstab::ImageGrid render(int w, int h, double t, double shift_x = 0, double shift_y = 0) const {
    evstab::ImageGrid g(w, h, t);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) g.at(x, y) = (*this)(x - shift_x, y - shift_y);
    return g;
  }
};

inline double pearson(const evstab::ImageGrid& a, const evstab::ImageGrid& b) {
  const double ma = a.mean(), mb = b.mean();
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    const double da = a.values[i] - ma, db = b.values[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace testutil
