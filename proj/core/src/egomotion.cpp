#include "evstab/egomotion.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <utility>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "evstab/errors.hpp"

namespace evstab {

Eigen::Matrix<double, 2, 3> sensitivity_A(const Eigen::Vector2d& x) {
  Eigen::Matrix<double, 2, 3> A;
  A << -1, 0, x.x(), 0, -1, x.y();
  return A;
}

Eigen::Matrix<double, 2, 3> sensitivity_B(const Eigen::Vector2d& x) {
  const double u = x.x(), v = x.y();
  Eigen::Matrix<double, 2, 3> B;
  B << u * v, -(1 + u * u), v, 1 + v * v, -u * v, -u;
  return B;
}

const std::vector<Eigen::Vector3d>& icosphere_directions(int subdivisions) {
  static std::map<int, std::vector<Eigen::Vector3d>> cache;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(subdivisions);
  if (it != cache.end()) return it->second;

  const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Eigen::Vector3d> verts = {
      {-1, phi, 0}, {1, phi, 0}, {-1, -phi, 0}, {1, -phi, 0},
      {0, -1, phi}, {0, 1, phi}, {0, -1, -phi}, {0, 1, -phi},
      {phi, 0, -1}, {phi, 0, 1}, {-phi, 0, -1}, {-phi, 0, 1}};
  for (auto& v : verts) v.normalize();
  std::vector<std::array<int, 3>> faces = {
      {0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
      {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
      {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
      {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};

  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::pair<int, int>, int> midpoints;
    auto midpoint = [&](int a, int b) {
      const auto key = std::minmax(a, b);
      auto mit = midpoints.find(key);
      if (mit != midpoints.end()) return mit->second;
      const int idx = static_cast<int>(verts.size());
      verts.push_back((verts[a] + verts[b]).normalized());
      midpoints.emplace(key, idx);
      return idx;
    };
    std::vector<std::array<int, 3>> next;
    next.reserve(faces.size() * 4);
    for (const auto& f : faces) {
      const int ab = midpoint(f[0], f[1]);
      const int bc = midpoint(f[1], f[2]);
      const int ca = midpoint(f[2], f[0]);
      next.push_back({f[0], ab, ca});
      next.push_back({f[1], bc, ab});
      next.push_back({f[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    faces = std::move(next);
  }
  return cache.emplace(subdivisions, std::move(verts)).first->second;
}

namespace {

struct NormalizedFlow {
  std::vector<Eigen::Vector2d> x;  // normalized image points
  std::vector<Eigen::Vector2d> f;  // normalized flow, 1/s
};

NormalizedFlow normalize_flows(const FlowSet& flows, const CameraModel& c) {
  NormalizedFlow nf;
  nf.x.reserve(flows.samples.size());
  nf.f.reserve(flows.samples.size());
  for (const FlowSample& s : flows.samples) {
    nf.x.push_back(pixel_to_normalized(c, s.x));
    nf.f.emplace_back(s.f.x() / c.fx, s.f.y() / c.fy);
  }
  return nf;
}

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  double m = v[mid];
  if (v.size() % 2 == 0) {
    const double lo = *std::max_element(v.begin(), v.begin() + mid);
    m = 0.5 * (m + lo);
  }
  return m;
}

// Degeneracy check on the linear constraint rows m_i . V = 0, where
// m_i = (-f2, f1, x*f2 - y*f1): rank < 2 means the direction is not
// determined (every V fits, e.g. pure-rotation leftovers).
void check_degenerate(const NormalizedFlow& nf, const SolverOptions& opts) {
  std::vector<double> mags;
  mags.reserve(nf.f.size());
  for (const auto& f : nf.f) mags.push_back(f.norm());
  if (median_of(mags) < opts.flow_floor)
    throw DegenerateGeometry("flow magnitudes too small to constrain translation");

  Eigen::MatrixXd M(nf.x.size(), 3);
  for (std::size_t i = 0; i < nf.x.size(); ++i) {
    const auto& x = nf.x[i];
    const auto& f = nf.f[i];
    M.row(i) << -f.y(), f.x(), x.x() * f.y() - x.y() * f.x();
  }
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(M);
  const auto& s = svd.singularValues();
  if (s(1) <= 0 || s(0) / s(1) > opts.cond_limit)
    throw DegenerateGeometry("constraint matrix is rank deficient");
}

// Per-sample residual r = (a_perp . f)/|a| and its gradient in V.
struct ResidualEval {
  double r;
  Eigen::Vector3d grad;
};

inline ResidualEval residual_at(const Eigen::Vector2d& x, const Eigen::Vector2d& f,
                                const Eigen::Vector3d& V, bool with_grad) {
  ResidualEval out;
  const Eigen::Vector2d a(-V.x() + x.x() * V.z(), -V.y() + x.y() * V.z());
  const double h = std::max(a.norm(), 1e-12);
  const Eigen::Vector3d m(-f.y(), f.x(), x.x() * f.y() - x.y() * f.x());
  const double g = m.dot(V);
  out.r = g / h;
  if (with_grad) {
    // grad = m/h - g * A^T a / h^3
    Eigen::Vector3d ATa(-a.x(), -a.y(), x.x() * a.x() + x.y() * a.y());
    out.grad = m / h - (g / (h * h * h)) * ATa;
  }
  return out;
}

double weighted_cost(const NormalizedFlow& nf, const std::vector<double>& w,
                     const Eigen::Vector3d& V) {
  double c = 0;
  for (std::size_t i = 0; i < nf.x.size(); ++i) {
    const double r = residual_at(nf.x[i], nf.f[i], V, false).r;
    c += w[i] * w[i] * r * r;
  }
  return c;
}

void tangent_basis(const Eigen::Vector3d& V, Eigen::Vector3d& t1, Eigen::Vector3d& t2) {
  t1 = V.cross(std::abs(V.z()) < 0.9 ? Eigen::Vector3d::UnitZ() : Eigen::Vector3d::UnitX());
  t1.normalize();
  t2 = V.cross(t1);
}

// Tangent-plane Gauss-Newton refinement of V with fixed weights.
int gauss_newton_sphere(const NormalizedFlow& nf, const std::vector<double>& w,
                        Eigen::Vector3d& V, const SolverOptions& opts) {
  int used = 0;
  for (int it = 0; it < opts.gn_iters; ++it) {
    ++used;
    Eigen::Vector3d t1, t2;
    tangent_basis(V, t1, t2);
    Eigen::Matrix2d JtJ = Eigen::Matrix2d::Zero();
    Eigen::Vector2d Jtr = Eigen::Vector2d::Zero();
    for (std::size_t i = 0; i < nf.x.size(); ++i) {
      const ResidualEval e = residual_at(nf.x[i], nf.f[i], V, true);
      const Eigen::Vector2d j(w[i] * e.grad.dot(t1), w[i] * e.grad.dot(t2));
      JtJ += j * j.transpose();
      Jtr += j * (w[i] * e.r);
    }
    JtJ.diagonal().array() += 1e-14;
    const Eigen::Vector2d step = JtJ.ldlt().solve(-Jtr);
    const Eigen::Vector3d V_new = (V + step.x() * t1 + step.y() * t2).normalized();
    // Accept only non-increasing cost; halve on overshoot.
    double s = 1.0;
    const double c0 = weighted_cost(nf, w, V);
    Eigen::Vector3d cand = V_new;
    bool accepted = false;
    for (int back = 0; back < 8; ++back) {
      if (weighted_cost(nf, w, cand) <= c0) {
        accepted = true;
        break;
      }
      s *= 0.5;
      cand = (V + s * (step.x() * t1 + step.y() * t2)).normalized();
    }
    if (!accepted) break;
    const double moved = (cand - V).norm();
    V = cand;
    if (moved < opts.gn_tol) break;
  }
  return used;
}

std::vector<double> cauchy_weights(const std::vector<double>& residuals) {
  std::vector<double> absr(residuals.size());
  for (std::size_t i = 0; i < residuals.size(); ++i) absr[i] = std::abs(residuals[i]);
  const double med = median_of(absr);
  std::vector<double> dev(residuals.size());
  for (std::size_t i = 0; i < residuals.size(); ++i) dev[i] = std::abs(absr[i] - med);
  double s = 1.4826 * median_of(dev);
  s = std::max(s, 1e-12);
  std::vector<double> w(residuals.size());
  for (std::size_t i = 0; i < residuals.size(); ++i) {
    const double t = residuals[i] / s;
    w[i] = 1.0 / (1.0 + t * t);
  }
  return w;
}

Eigen::Vector3d grid_seed(const NormalizedFlow& nf, const std::vector<double>& w) {
  const auto& dirs = icosphere_directions(3);
  double best = std::numeric_limits<double>::infinity();
  Eigen::Vector3d V = Eigen::Vector3d::UnitZ();
  for (const auto& d : dirs) {
    const double c = weighted_cost(nf, w, d);
    if (c < best) {
      best = c;
      V = d;
    }
  }
  return V;
}

// Trimmed-squares grid seed: scores each direction by the mean of its
// smallest 60% squared residuals, so a minority of gross outliers cannot
// pull the seed out of the inlier basin.
Eigen::Vector3d grid_seed_trimmed(const NormalizedFlow& nf) {
  const auto& dirs = icosphere_directions(3);
  const std::size_t n = nf.x.size();
  const std::size_t keep = std::max<std::size_t>(2, (3 * n) / 5);
  std::vector<double> r2(n);
  double best = std::numeric_limits<double>::infinity();
  Eigen::Vector3d V = Eigen::Vector3d::UnitZ();
  for (const auto& d : dirs) {
    for (std::size_t i = 0; i < n; ++i) {
      const double r = residual_at(nf.x[i], nf.f[i], d, false).r;
      r2[i] = r * r;
    }
    std::nth_element(r2.begin(), r2.begin() + (keep - 1), r2.end());
    double c = 0;
    for (std::size_t i = 0; i < keep; ++i) c += r2[i];
    if (c < best) {
      best = c;
      V = d;
    }
  }
  return V;
}

}  // namespace

VelocityEstimate erlv_solve(const FlowSet& flows, const CameraModel& c,
                            const SolverOptions& opts) {
  const std::size_t n = flows.samples.size();
  if (n < 2) throw InsufficientFlow("erlv_solve needs >= 2 flow samples");
  const NormalizedFlow nf = normalize_flows(flows, c);
  check_degenerate(nf, opts);

  VelocityEstimate est;
  std::vector<double> w(n, 1.0);
  Eigen::Vector3d V;
  if (opts.irls_rounds == 0) {
    // plain least squares: uniform-weight grid seed plus refinement
    V = grid_seed(nf, w);
    est.iterations += gauss_newton_sphere(nf, w, V, opts);
  } else {
    // robust path: trimmed seed keeps gross outliers from picking the basin,
    // then reweighting separates them before the first refinement
    V = grid_seed_trimmed(nf);
    std::vector<double> r(n);
    for (int round = 0; round < opts.irls_rounds; ++round) {
      for (std::size_t i = 0; i < n; ++i) r[i] = residual_at(nf.x[i], nf.f[i], V, false).r;
      w = cauchy_weights(r);
      Eigen::Vector3d V_grid = grid_seed(nf, w);
      if (weighted_cost(nf, w, V_grid) < weighted_cost(nf, w, V)) V = V_grid;
      est.iterations += gauss_newton_sphere(nf, w, V, opts);
    }
  }

  // Depth sign vote resolves the +-V ambiguity.
  std::vector<double> rho(n);
  int pos = 0, neg = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Vector2d a(-V.x() + nf.x[i].x() * V.z(), -V.y() + nf.x[i].y() * V.z());
    const double a2 = std::max(a.squaredNorm(), 1e-24);
    rho[i] = a.dot(nf.f[i]) / a2;
    if (rho[i] > 0)
      ++pos;
    else if (rho[i] < 0)
      ++neg;
  }
  if (neg > pos) {
    V = -V;
    for (auto& v : rho) v = -v;
  }
  for (auto& v : rho) v = std::max(v, 1e-12);

  double num = 0, den = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double ri = residual_at(nf.x[i], nf.f[i], V, false).r;
    num += w[i] * w[i] * ri * ri;
    den += w[i] * w[i];
  }
  est.V = V;
  est.residual = den > 0 ? std::sqrt(num / den) : 0.0;
  est.weights = std::move(w);
  est.inverse_depths = std::move(rho);
  return est;
}

namespace {

// Given V and weights, the least-squares omega after eliminating the
// per-sample inverse depths: P_i = I - a_i a_i^T/|a_i|^2 projects out the
// translational direction, leaving sum w^2 B^T P B omega = sum w^2 B^T P f.
Eigen::Vector3d solve_omega(const NormalizedFlow& nf, const std::vector<double>& w,
                            const Eigen::Vector3d& V) {
  Eigen::Matrix3d H = Eigen::Matrix3d::Zero();
  Eigen::Vector3d b = Eigen::Vector3d::Zero();
  for (std::size_t i = 0; i < nf.x.size(); ++i) {
    const Eigen::Vector2d a(-V.x() + nf.x[i].x() * V.z(), -V.y() + nf.x[i].y() * V.z());
    const double a2 = a.squaredNorm();
    Eigen::Matrix2d P = Eigen::Matrix2d::Identity();
    if (a2 > 1e-24) P -= (a * a.transpose()) / a2;
    const Eigen::Matrix<double, 2, 3> B = sensitivity_B(nf.x[i]);
    const double w2 = w[i] * w[i];
    H += w2 * B.transpose() * P * B;
    b += w2 * B.transpose() * P * nf.f[i];
  }
  H.diagonal().array() += 1e-14;
  return H.ldlt().solve(b);
}

std::vector<double> full_residuals(const NormalizedFlow& nf, const Eigen::Vector3d& V,
                                   const Eigen::Vector3d& omega) {
  std::vector<double> r(nf.x.size());
  for (std::size_t i = 0; i < nf.x.size(); ++i) {
    const Eigen::Vector2d ft = nf.f[i] - sensitivity_B(nf.x[i]) * omega;
    r[i] = residual_at(nf.x[i], ft, V, false).r;
  }
  return r;
}

}  // namespace

FullMotionEstimate erl_full_solve(const FlowSet& flows, const CameraModel& c,
                                  const SolverOptions& opts) {
  const std::size_t n = flows.samples.size();
  if (n < 3) throw InsufficientFlow("erl_full_solve needs >= 3 flow samples");
  const NormalizedFlow nf = normalize_flows(flows, c);

  std::vector<double> mags;
  mags.reserve(n);
  for (const auto& f : nf.f) mags.push_back(f.norm());
  const double flow_scale = median_of(mags);

  FullMotionEstimate est;
  std::vector<double> w(n, 1.0);

  // Seed: best direction by its omega-compensated cost.
  const auto& dirs = icosphere_directions(3);
  Eigen::Vector3d V = Eigen::Vector3d::UnitZ();
  Eigen::Vector3d omega = Eigen::Vector3d::Zero();
  {
    double best = std::numeric_limits<double>::infinity();
    NormalizedFlow comp = nf;
    for (const auto& d : dirs) {
      const Eigen::Vector3d om = solve_omega(nf, w, d);
      for (std::size_t i = 0; i < n; ++i) comp.f[i] = nf.f[i] - sensitivity_B(nf.x[i]) * om;
      const double cost = weighted_cost(comp, w, d);
      if (cost < best) {
        best = cost;
        V = d;
        omega = om;
      }
    }
  }

  NormalizedFlow comp = nf;
  const int rounds = std::max(1, opts.irls_rounds + 1);
  for (int round = 0; round < rounds; ++round) {
    for (int alt = 0; alt < opts.max_alternations; ++alt) {
      ++est.iterations;
      omega = solve_omega(nf, w, V);
      for (std::size_t i = 0; i < n; ++i) comp.f[i] = nf.f[i] - sensitivity_B(nf.x[i]) * omega;
      Eigen::Vector3d V_new = V;
      gauss_newton_sphere(comp, w, V_new, opts);
      const double moved = std::acos(std::clamp(std::abs(V_new.dot(V)), -1.0, 1.0));
      V = V_new;
      if (moved < opts.converge_tol) break;
    }
    if (round == rounds - 1 || opts.irls_rounds == 0) break;
    const std::vector<double> r = full_residuals(nf, V, omega);
    w = cauchy_weights(r);
  }

  for (std::size_t i = 0; i < n; ++i) comp.f[i] = nf.f[i] - sensitivity_B(nf.x[i]) * omega;

  // Translational signal check: with rotation removed, pure-rotation input
  // leaves nothing for V to explain.
  std::vector<double> cmags;
  cmags.reserve(n);
  for (const auto& f : comp.f) cmags.push_back(f.norm());
  if (median_of(cmags) < std::max(opts.flow_floor, 1e-9 * flow_scale))
    throw DegenerateGeometry("translation unobservable: flow is explained by rotation alone");
  check_degenerate(comp, opts);

  // Depth sign vote on the compensated flow.
  int pos = 0, neg = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Vector2d a(-V.x() + nf.x[i].x() * V.z(), -V.y() + nf.x[i].y() * V.z());
    const double a2 = std::max(a.squaredNorm(), 1e-24);
    const double rho = a.dot(comp.f[i]) / a2;
    if (rho > 0)
      ++pos;
    else if (rho < 0)
      ++neg;
  }
  if (neg > pos) V = -V;

  double num = 0, den = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double ri = residual_at(nf.x[i], comp.f[i], V, false).r;
    num += w[i] * w[i] * ri * ri;
    den += w[i] * w[i];
  }
  est.V = V;
  est.omega = omega;
  est.residual = den > 0 ? std::sqrt(num / den) : 0.0;
  est.weights = std::move(w);
  return est;
}

double mae_angle(const std::vector<Eigen::Vector3d>& estimates,
                 const std::vector<Eigen::Vector3d>& gt_velocities, double speed_floor) {
  if (estimates.size() != gt_velocities.size())
    throw LengthMismatch("mae_angle: paired lists differ in length");
  double sum = 0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    const double speed = gt_velocities[i].norm();
    if (speed < speed_floor) continue;
    const Eigen::Vector3d e = estimates[i].normalized();
    const Eigen::Vector3d g = gt_velocities[i] / speed;
    sum += std::acos(std::clamp(e.dot(g), -1.0, 1.0)) * 180.0 / M_PI;
    ++count;
  }
  if (count == 0) throw InsufficientSamples("mae_angle: no pairs above the speed floor");
  return sum / static_cast<double>(count);
}

}  // namespace evstab
