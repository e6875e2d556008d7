#include "evstab/representation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "evstab/errors.hpp"

namespace evstab {

Eigen::Vector2d WarpParams::at(double x, double y) const {
  if (theta.empty()) return Eigen::Vector2d::Zero();
  double u = x * cols / static_cast<double>(width) - 0.5;
  double v = y * rows / static_cast<double>(height) - 0.5;
  u = std::clamp(u, 0.0, static_cast<double>(cols - 1));
  v = std::clamp(v, 0.0, static_cast<double>(rows - 1));
  int j0 = std::min(static_cast<int>(u), cols - 2 >= 0 ? cols - 2 : 0);
  int i0 = std::min(static_cast<int>(v), rows - 2 >= 0 ? rows - 2 : 0);
  if (cols == 1) j0 = 0;
  if (rows == 1) i0 = 0;
  const int j1 = std::min(j0 + 1, cols - 1);
  const int i1 = std::min(i0 + 1, rows - 1);
  const double fu = u - j0;
  const double fv = v - i0;
  return (1 - fv) * ((1 - fu) * tile(i0, j0) + fu * tile(i0, j1)) +
         fv * ((1 - fu) * tile(i1, j0) + fu * tile(i1, j1));
}

namespace {

// Splat a unit-mass truncated Gaussian at (cx, cy). Weights are separable;
// the normalizer is the full-stencil sum, so mass is lost only to the image
// boundary. The accumulator receives (flat pixel index, weight).
template <typename Acc>
inline void splat_stencil(int width, int height, double cx, double cy, double sigma, Acc&& acc) {
  const double r = 3.0 * sigma;
  const int x0 = static_cast<int>(std::ceil(cx - r));
  const int x1 = static_cast<int>(std::floor(cx + r));
  const int y0 = static_cast<int>(std::ceil(cy - r));
  const int y1 = static_cast<int>(std::floor(cy + r));
  if (x1 < x0 || y1 < y0) return;

  const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
  double wx[64], wy[64];
  const int nx = x1 - x0 + 1, ny = y1 - y0 + 1;
  if (nx > 64 || ny > 64) throw InvalidConfig("sigma too large for the splat stencil");

  // w[i] = exp(-(i-u)^2 / 2s^2) built incrementally: w[i+1] = w[i]*m, m *= g
  const double g = std::exp(-2.0 * inv2s2);
  const auto fill_axis = [&](double* w, int n, double u) {
    double wi = std::exp(-u * u * inv2s2);
    double m = std::exp((2.0 * u - 1.0) * inv2s2);
    double sum = 0;
    for (int i = 0; i < n; ++i) {
      w[i] = wi;
      sum += wi;
      wi *= m;
      m *= g;
    }
    return sum;
  };
  const double sx = fill_axis(wx, nx, cx - x0);
  const double sy = fill_axis(wy, ny, cy - y0);
  const double scale = 1.0 / (sx * sy);

  const int jx0 = std::max(0, -y0), jx1 = std::min(ny - 1, height - 1 - y0);
  const int ix0 = std::max(0, -x0), ix1 = std::min(nx - 1, width - 1 - x0);
  for (int j = jx0; j <= jx1; ++j) {
    const std::size_t row = static_cast<std::size_t>(y0 + j) * width;
    const double wys = wy[j] * scale;
    for (int i = ix0; i <= ix1; ++i) acc(row + x0 + i, wx[i] * wys);
  }
}

inline void splat(ImageGrid& g, double cx, double cy, double sigma) {
  splat_stencil(g.width, g.height, cx, cy, sigma,
                [&](std::size_t idx, double w) { g.values[idx] += w; });
}

}  // namespace

ImageGrid render_iwe(const EventWindow& w, const WarpParams& theta, double sigma,
                     const CameraModel& c) {
  if (!(sigma > 0)) throw InvalidConfig("sigma must be positive");
  ImageGrid g(c.width, c.height, w.t_end);
  const bool warp = !theta.zero();
  for (const Event& e : w.events) {
    if (!c.in_bounds(e.x, e.y)) continue;
    double x = e.x, y = e.y;
    if (warp) {
      const Eigen::Vector2d f = theta.at(e.x, e.y);
      const double dt = w.t_end - e.t;
      x += f.x() * dt;
      y += f.y() * dt;
    }
    splat(g, x, y, sigma);
  }
  return g;
}

namespace {

// Variance objective for one tile's events under a uniform warp theta.
// Only pixels the stencil actually touches are visited: an epoch stamp
// invalidates stale values so the scratch grid never needs a full clear,
// and the variance sums run over the touched set (untouched pixels are
// zero and enter only through the pixel count).
class TileObjective {
 public:
  TileObjective(const std::vector<const Event*>& events, double t_end, double sigma, int width,
                int height)
      : events_(events),
        t_end_(t_end),
        sigma_(sigma),
        width_(width),
        height_(height),
        values_(static_cast<std::size_t>(width) * height, 0.0),
        epoch_(values_.size(), 0) {}

  int evals() const { return evals_; }

  double operator()(const Eigen::Vector2d& theta) {
    ++evals_;
    ++epoch_id_;
    touched_.clear();
    for (const Event* e : events_) {
      const double dt = t_end_ - e->t;
      splat_stencil(width_, height_, e->x + theta.x() * dt, e->y + theta.y() * dt, sigma_,
                    [&](std::size_t idx, double w) {
                      if (epoch_[idx] != epoch_id_) {
                        epoch_[idx] = epoch_id_;
                        values_[idx] = 0.0;
                        touched_.push_back(idx);
                      }
                      values_[idx] += w;
                    });
    }
    double s1 = 0, s2 = 0;
    for (const std::size_t idx : touched_) {
      const double v = values_[idx];
      s1 += v;
      s2 += v * v;
    }
    const double n = static_cast<double>(values_.size());
    const double mean = s1 / n;
    return s2 / n - mean * mean;
  }

 private:
  const std::vector<const Event*>& events_;
  double t_end_;
  double sigma_;
  int width_, height_;
  std::vector<double> values_;
  std::vector<int> epoch_;
  std::vector<std::size_t> touched_;
  int evals_ = 0;
  int epoch_id_ = 0;
};

// Nelder-Mead maximization in 2-d within an evaluation budget.
Eigen::Vector2d nelder_mead_max(TileObjective& f, const Eigen::Vector2d& start, double scale,
                                int budget, double tol) {
  struct Vertex {
    Eigen::Vector2d p;
    double v;
  };
  Vertex s[3];
  s[0] = {start, f(start)};
  s[1] = {start + Eigen::Vector2d(scale, 0), 0};
  s[1].v = f(s[1].p);
  s[2] = {start + Eigen::Vector2d(0, scale), 0};
  s[2].v = f(s[2].p);

  auto order = [&]() { std::sort(s, s + 3, [](const Vertex& a, const Vertex& b) { return a.v > b.v; }); };
  order();

  while (f.evals() < budget) {
    const Eigen::Vector2d centroid = 0.5 * (s[0].p + s[1].p);
    const Eigen::Vector2d refl = centroid + (centroid - s[2].p);
    const double fr = f(refl);
    if (fr > s[0].v) {
      const Eigen::Vector2d exp_p = centroid + 2.0 * (centroid - s[2].p);
      if (f.evals() < budget) {
        const double fe = f(exp_p);
        s[2] = fe > fr ? Vertex{exp_p, fe} : Vertex{refl, fr};
      } else {
        s[2] = {refl, fr};
      }
    } else if (fr > s[1].v) {
      s[2] = {refl, fr};
    } else {
      const Eigen::Vector2d con = centroid + 0.5 * (s[2].p - centroid);
      if (f.evals() >= budget) break;
      const double fc = f(con);
      if (fc > s[2].v) {
        s[2] = {con, fc};
      } else {
        // shrink toward the best vertex
        for (int i = 1; i < 3; ++i) {
          s[i].p = s[0].p + 0.5 * (s[i].p - s[0].p);
          if (f.evals() >= budget) break;
          s[i].v = f(s[i].p);
        }
      }
    }
    order();
    if ((s[0].p - s[2].p).norm() + (s[0].p - s[1].p).norm() < tol) break;
  }
  return s[0].p;
}

}  // namespace

WarpParams maximize_contrast(const EventWindow& w, const CameraModel& c, const CmaxOptions& opts) {
  std::size_t in_fov = 0;
  for (const Event& e : w.events)
    if (c.in_bounds(e.x, e.y)) ++in_fov;
  if (in_fov < 10) throw DegenerateWindow("fewer than 10 in-FOV events");

  WarpParams params(opts.tile_rows, opts.tile_cols, c.width, c.height);
  const double span = w.t_end - w.t_start;
  if (!(span > 0)) return params;

  // Bucket events by tile on their unwarped positions.
  std::vector<std::vector<const Event*>> buckets(params.theta.size());
  for (const Event& e : w.events) {
    if (!c.in_bounds(e.x, e.y)) continue;
    int tx = static_cast<int>(e.x * opts.tile_cols / c.width);
    int ty = static_cast<int>(e.y * opts.tile_rows / c.height);
    tx = std::min(tx, opts.tile_cols - 1);
    ty = std::min(ty, opts.tile_rows - 1);
    buckets[static_cast<std::size_t>(ty) * opts.tile_cols + tx].push_back(&e);
  }

  for (int row = 0; row < opts.tile_rows; ++row) {
    for (int col = 0; col < opts.tile_cols; ++col) {
      const auto& events = buckets[static_cast<std::size_t>(row) * opts.tile_cols + col];
      if (static_cast<int>(events.size()) < opts.min_tile_events) continue;

      TileObjective obj(events, w.t_end, opts.sigma, c.width, c.height);
      Eigen::Vector2d best = Eigen::Vector2d::Zero();
      double best_v = -1.0;
      const double step = opts.cap / 4.0;
      for (int iy = -4; iy <= 4; ++iy) {
        for (int ix = -4; ix <= 4; ++ix) {
          const Eigen::Vector2d theta(ix * step, iy * step);
          const double v = obj(theta);
          if (v > best_v) {
            best_v = v;
            best = theta;
          }
        }
      }
      const double nm_scale = std::min(opts.cap / 8.0, std::max(4.0 * opts.sigma / span, 1e-3));
      // stop once the simplex spans less than ~0.02 px of warp displacement
      const double nm_tol = std::max(1e-3, 0.02 / span);
      Eigen::Vector2d theta = nelder_mead_max(obj, best, nm_scale, opts.budget, nm_tol);
      theta.x() = std::clamp(theta.x(), -opts.cap, opts.cap);
      theta.y() = std::clamp(theta.y(), -opts.cap, opts.cap);
      params.tile(row, col) = theta;
    }
  }

  // Keep the field only if it beats the zero warp on the full window.
  const WarpParams zero(opts.tile_rows, opts.tile_cols, c.width, c.height);
  const double var_zero = render_iwe(w, zero, opts.sigma, c).variance();
  const double var_warp = render_iwe(w, params, opts.sigma, c).variance();
  if (var_warp < var_zero) return zero;
  return params;
}

TimeSurfaceState::TimeSurfaceState(double tau0, int width, int height, double alpha)
    : tau(tau0),
      alpha(alpha),
      width(width),
      height(height),
      last_t(static_cast<std::size_t>(width) * height, -std::numeric_limits<double>::infinity()) {
  if (!(tau0 > 0)) throw InvalidConfig("tau0 must be positive");
  if (alpha < 0.0 || alpha >= 1.0) throw InvalidConfig("alpha must be in [0,1)");
}

ImageGrid render_time_surface(const EventWindow& w, TimeSurfaceState& state) {
  const double span = w.t_end - w.t_start;
  state.tau = (1.0 - state.alpha) * span + state.alpha * state.tau;
  if (!(state.tau > 0)) state.tau = 1e-9;

  for (const Event& e : w.events) {
    if (e.x < -0.5 || e.x > state.width - 0.5 || e.y < -0.5 || e.y > state.height - 0.5) continue;
    const int ix = static_cast<int>(std::lround(e.x));
    const int iy = static_cast<int>(std::lround(e.y));
    if (ix < 0 || ix >= state.width || iy < 0 || iy >= state.height) continue;
    state.last_t[static_cast<std::size_t>(iy) * state.width + ix] = e.t;
  }

  ImageGrid g(state.width, state.height, w.t_end);
  const double inv_tau = 1.0 / state.tau;
  for (std::size_t i = 0; i < g.values.size(); ++i) {
    const double last = state.last_t[i];
    g.values[i] = std::isinf(last) ? 0.0 : std::exp(-(w.t_end - last) * inv_tau);
  }
  return g;
}

}  // namespace evstab
