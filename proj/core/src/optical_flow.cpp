#include "evstab/optical_flow.hpp"

#include <algorithm>
#include <cmath>

#include "evstab/errors.hpp"

namespace evstab {

namespace {

constexpr double kHarrisK = 0.04;
constexpr double kHarrisRelThreshold = 0.01;

}  // namespace

std::vector<Eigen::Vector2d> detect_corners(const ImageGrid& img, int max_n,
                                            double min_distance) {
  const int w = img.width, h = img.height;
  if (w < 5 || h < 5) throw NoTexture("image too small for corner detection");

  // Sobel gradients.
  std::vector<double> gx(static_cast<std::size_t>(w) * h, 0.0);
  std::vector<double> gy(static_cast<std::size_t>(w) * h, 0.0);
  for (int y = 1; y < h - 1; ++y) {
    for (int x = 1; x < w - 1; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      gx[i] = (img.at(x + 1, y - 1) + 2 * img.at(x + 1, y) + img.at(x + 1, y + 1) -
               img.at(x - 1, y - 1) - 2 * img.at(x - 1, y) - img.at(x - 1, y + 1)) / 8.0;
      gy[i] = (img.at(x - 1, y + 1) + 2 * img.at(x, y + 1) + img.at(x + 1, y + 1) -
               img.at(x - 1, y - 1) - 2 * img.at(x, y - 1) - img.at(x + 1, y - 1)) / 8.0;
    }
  }

  // Harris response with a 3x3 structure-tensor window.
  std::vector<double> resp(static_cast<std::size_t>(w) * h, 0.0);
  double max_resp = 0.0;
  for (int y = 2; y < h - 2; ++y) {
    for (int x = 2; x < w - 2; ++x) {
      double sxx = 0, sxy = 0, syy = 0;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const std::size_t i = static_cast<std::size_t>(y + dy) * w + (x + dx);
          sxx += gx[i] * gx[i];
          sxy += gx[i] * gy[i];
          syy += gy[i] * gy[i];
        }
      const double det = sxx * syy - sxy * sxy;
      const double tr = sxx + syy;
      const double r = det - kHarrisK * tr * tr;
      resp[static_cast<std::size_t>(y) * w + x] = r;
      if (r > max_resp) max_resp = r;
    }
  }
  if (max_resp <= 0.0) throw NoTexture("no positive Harris response");

  // Local maxima above the relative threshold.
  struct Cand {
    double r;
    int x, y;
  };
  std::vector<Cand> cands;
  const double thr = kHarrisRelThreshold * max_resp;
  for (int y = 2; y < h - 2; ++y) {
    for (int x = 2; x < w - 2; ++x) {
      const double r = resp[static_cast<std::size_t>(y) * w + x];
      if (r < thr) continue;
      bool is_max = true;
      for (int dy = -1; dy <= 1 && is_max; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          if (dx == 0 && dy == 0) continue;
          if (resp[static_cast<std::size_t>(y + dy) * w + (x + dx)] > r) {
            is_max = false;
            break;
          }
        }
      if (is_max) cands.push_back({r, x, y});
    }
  }
  std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
    if (a.r != b.r) return a.r > b.r;
    return a.y != b.y ? a.y < b.y : a.x < b.x;
  });

  std::vector<Eigen::Vector2d> out;
  const double d2 = min_distance * min_distance;
  for (const Cand& cd : cands) {
    bool free = true;
    for (const auto& p : out) {
      const double dx = p.x() - cd.x, dy = p.y() - cd.y;
      if (dx * dx + dy * dy < d2) {
        free = false;
        break;
      }
    }
    if (!free) continue;
    out.emplace_back(cd.x, cd.y);
    if (static_cast<int>(out.size()) >= max_n) break;
  }
  if (out.size() < 2) throw NoTexture("fewer than 2 corners");
  return out;
}

Pyramid build_pyramid(const ImageGrid& img, int levels) {
  Pyramid p;
  p.levels.push_back(img);
  for (int l = 1; l < levels; ++l) {
    const ImageGrid& src = p.levels.back();
    if (src.width < 8 || src.height < 8) break;

    // [1 2 1]/4 smoothing in both axes, then 2x subsampling.
    ImageGrid blur(src.width, src.height, src.t);
    for (int y = 0; y < src.height; ++y) {
      for (int x = 0; x < src.width; ++x) {
        const int xm = std::max(0, x - 1), xp = std::min(src.width - 1, x + 1);
        blur.at(x, y) = 0.25 * src.at(xm, y) + 0.5 * src.at(x, y) + 0.25 * src.at(xp, y);
      }
    }
    ImageGrid blur2(src.width, src.height, src.t);
    for (int y = 0; y < src.height; ++y) {
      const int ym = std::max(0, y - 1), yp = std::min(src.height - 1, y + 1);
      for (int x = 0; x < src.width; ++x)
        blur2.at(x, y) = 0.25 * blur.at(x, ym) + 0.5 * blur.at(x, y) + 0.25 * blur.at(x, yp);
    }

    ImageGrid down(src.width / 2, src.height / 2, src.t);
    for (int y = 0; y < down.height; ++y)
      for (int x = 0; x < down.width; ++x) down.at(x, y) = blur2.at(2 * x, 2 * y);
    p.levels.push_back(std::move(down));
  }
  return p;
}

namespace {

inline bool sample_ok(const ImageGrid& g, double x, double y, double margin) {
  return x >= margin && x <= g.width - 1 - margin && y >= margin && y <= g.height - 1 - margin;
}

}  // namespace

LkResult lk_point(const Pyramid& prev, const Pyramid& next, const Eigen::Vector2d& point,
                  const LkOptions& opts) {
  LkResult res;
  const int half = opts.window / 2;
  const int n_levels = static_cast<int>(prev.levels.size());
  Eigen::Vector2d d = Eigen::Vector2d::Zero();

  for (int l = n_levels - 1; l >= 0; --l) {
    const ImageGrid& a = prev.levels[l];
    const ImageGrid& b = next.levels[l];
    const double scale = 1.0 / (1 << l);
    const Eigen::Vector2d pt = point * scale;
    d *= 2.0;

    if (!sample_ok(a, pt.x(), pt.y(), half + 1)) {
      if (l == 0) return res;
      continue;
    }

    // Gradient matrix on the previous image, fixed over iterations.
    double gxx = 0, gxy = 0, gyy = 0;
    double ix[31 * 31], iy[31 * 31], iv[31 * 31];
    if (opts.window > 31) throw InvalidConfig("LK window too large");
    int idx = 0;
    for (int wy = -half; wy <= half; ++wy) {
      for (int wx = -half; wx <= half; ++wx, ++idx) {
        const double px = pt.x() + wx, py = pt.y() + wy;
        const double gx = 0.5 * (a.sample(px + 1, py) - a.sample(px - 1, py));
        const double gy = 0.5 * (a.sample(px, py + 1) - a.sample(px, py - 1));
        ix[idx] = gx;
        iy[idx] = gy;
        iv[idx] = a.sample(px, py);
        gxx += gx * gx;
        gxy += gx * gy;
        gyy += gy * gy;
      }
    }
    const double tr = gxx + gyy;
    const double det = gxx * gyy - gxy * gxy;
    const double min_eig = 0.5 * (tr - std::sqrt(std::max(0.0, tr * tr - 4 * det)));
    if (min_eig < opts.min_eig) {
      if (l == 0) return res;
      continue;
    }
    const double inv_det = 1.0 / det;

    bool converged = false;
    for (int it = 0; it < opts.iters; ++it) {
      const Eigen::Vector2d q = pt + d;
      if (!sample_ok(b, q.x(), q.y(), half + 1)) return res;
      double bx = 0, by = 0;
      idx = 0;
      for (int wy = -half; wy <= half; ++wy) {
        for (int wx = -half; wx <= half; ++wx, ++idx) {
          const double diff = iv[idx] - b.sample(q.x() + wx, q.y() + wy);
          bx += diff * ix[idx];
          by += diff * iy[idx];
        }
      }
      const double sx = (gyy * bx - gxy * by) * inv_det;
      const double sy = (gxx * by - gxy * bx) * inv_det;
      d.x() += sx;
      d.y() += sy;
      if (std::hypot(sx, sy) < opts.convergence) {
        converged = true;
        break;
      }
    }
    if (l == 0) {
      if (!converged) return res;
      const Eigen::Vector2d q = pt + d;
      if (!sample_ok(b, q.x(), q.y(), half + 1)) return res;
      double resid = 0;
      idx = 0;
      for (int wy = -half; wy <= half; ++wy)
        for (int wx = -half; wx <= half; ++wx, ++idx)
          resid += std::abs(iv[idx] - b.sample(q.x() + wx, q.y() + wy));
      res.residual = resid / (opts.window * opts.window);
      res.displacement = d;
      res.ok = true;
    }
  }
  return res;
}

FlowSet lk_flow(const ImageGrid& prev, const ImageGrid& next,
                const std::vector<Eigen::Vector2d>& points, const LkOptions& opts) {
  if (prev.width != next.width || prev.height != next.height)
    throw InvalidConfig("lk_flow grids differ in size");
  const double dt = next.t - prev.t;
  if (!(dt > 0)) throw InvalidConfig("lk_flow needs next.t > prev.t");

  const Pyramid pa = build_pyramid(prev, opts.levels);
  const Pyramid pb = build_pyramid(next, opts.levels);

  FlowSet fs;
  fs.dt = dt;
  for (const auto& pt : points) {
    const LkResult r = lk_point(pa, pb, pt, opts);
    if (!r.ok) continue;
    FlowSample s;
    s.x = pt;
    s.f = r.displacement / dt;
    s.quality = std::exp(-r.residual);
    fs.samples.push_back(s);
  }
  return fs;
}

}  // namespace evstab
