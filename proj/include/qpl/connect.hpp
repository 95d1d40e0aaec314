#pragma once

// Connecting map: the path chi(s), s in [0,1], between two points of the
// sublevel set solving x'' + Gamma(x',x') = (|x'|_g^2 / 2) g^{-1} V_x, which
// is a reparametrized geodesic of the conformal metric e^V g. Solved by
// Newton shooting; multiple shooting is the fallback.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qpl/geometry.hpp"
#include "qpl/ode.hpp"
#include "qpl/problem.hpp"

namespace qpl {

struct ConnectOptions {
  double tol = 1e-8;
  int max_iter = 40;
  int steps = 256;   // RK4 steps per unit of s
  int segments = 8;  // multiple-shooting fallback
  bool allow_fallback = true;
};

namespace connect_detail {

inline Rhs conformal_rhs(const ChartManifold& M, const ScalarField& V) {
  return [&M, &V](const State& z, State& dz, double) {
    const int m = M.m();
    const Eigen::Map<const Vec> x(z.data(), m);
    const Eigen::Map<const Vec> v(z.data() + m, m);
    const PointGeometry pg = M.at(x);
    const Vec vx = V.jet(Vec(x), 1).g;
    const Vec acc = -pg.christoffel(v, v) + (0.5 * pg.norm2(v)) * pg.gradient(vx);
    for (int i = 0; i < m; ++i) {
      dz[i] = v(i);
      dz[m + i] = acc(i);
    }
  };
}

inline State pack(const Vec& x, const Vec& v) {
  State z(x.size() + v.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    z[i] = x(i);
    z[x.size() + i] = v(i);
  }
  return z;
}

inline Vec state_vec(const State& z) { return Eigen::Map<const Vec>(z.data(), static_cast<Eigen::Index>(z.size())); }

}  // namespace connect_detail

/// Path stored as segment start states on [s_j, s_{j+1}]; evaluation
/// integrates a fixed number of RK4 steps from the segment start, so the
/// result is a smooth function of s and of the endpoints.
class CurvePath {
 public:
  CurvePath() = default;
  CurvePath(const ChartManifold& M, const ScalarField& V, std::vector<State> starts, int steps)
      : M_(&M), V_(V), starts_(std::move(starts)), steps_(steps) {}

  int segments() const { return static_cast<int>(starts_.size()); }
  int steps() const { return steps_; }
  const std::vector<State>& starts() const { return starts_; }

  CurveSample operator()(double s) const {
    const int S = segments();
    int j = static_cast<int>(std::floor(s * S));
    j = std::clamp(j, 0, S - 1);
    const double s0 = static_cast<double>(j) / S;
    const int m = M_->m();
    CurveSample out;
    if (s == s0) {
      out.x = Eigen::Map<const Vec>(starts_[j].data(), m);
      out.v = Eigen::Map<const Vec>(starts_[j].data() + m, m);
      return out;
    }
    const int n = std::max(4, steps_ / S);
    const State z = integrate_rk4(connect_detail::conformal_rhs(*M_, V_), starts_[j], s0, s, n);
    out.x = Eigen::Map<const Vec>(z.data(), m);
    out.v = Eigen::Map<const Vec>(z.data() + m, m);
    return out;
  }

  Vec point(double s) const { return (*this)(s).x; }

  /// States at s = i/n, i = 0..n, from one sweep per segment (n must be a
  /// multiple of the segment count).
  std::vector<CurveSample> sample(int n) const {
    const int S = segments();
    const int per = std::max(1, n / S);
    const int sub = std::max(1, steps_ / (S * per));
    const int m = M_->m();
    const Rhs rhs = connect_detail::conformal_rhs(*M_, V_);
    std::vector<CurveSample> out;
    out.reserve(S * per + 1);
    auto unpack = [m](const State& z) {
      return CurveSample{Eigen::Map<const Vec>(z.data(), m), Eigen::Map<const Vec>(z.data() + m, m)};
    };
    State z;
    for (int j = 0; j < S; ++j) {
      z = starts_[j];
      for (int i = 0; i < per; ++i) {
        out.push_back(unpack(z));
        const double s0 = (static_cast<double>(j) + static_cast<double>(i) / per) / S;
        z = integrate_rk4(rhs, z, s0, s0 + 1.0 / (S * per), sub);
      }
    }
    out.push_back(unpack(z));
    return out;
  }

 private:
  const ChartManifold* M_ = nullptr;
  ScalarField V_;
  std::vector<State> starts_;
  int steps_ = 256;
};

struct ConnectResult {
  CurvePath path;
  double defect = 0.0;  // max deviation from a tight adaptive reference plus endpoint mismatch
  int iterations = 0;
  bool used_fallback = false;
};

namespace connect_detail {

inline double endpoint_and_reference_defect(const ChartManifold& M, const ScalarField& V, const CurvePath& path,
                                            const Vec& y, const std::vector<CurveSample>& nodes) {
  const int m = M.m();
  const int S = path.segments();
  const int n = static_cast<int>(nodes.size()) - 1;
  const int per = n / S;
  double defect = (path.point(1.0) - y).cwiseAbs().maxCoeff();
  defect = std::max(defect, (nodes.back().x - y).cwiseAbs().maxCoeff());
  const Rhs rhs = conformal_rhs(M, V);
  for (int j = 0; j < S; ++j) {
    std::vector<double> ts(per + 1);
    for (int i = 0; i <= per; ++i) ts[i] = (static_cast<double>(j) + static_cast<double>(i) / per) / S;
    AdaptiveOptions opt;
    opt.rtol = 1e-13;
    opt.atol = 1e-14;
    opt.initial_step = 1e-4;
    integrate_dense(
        rhs, path.starts()[j], ts,
        [&](std::size_t i, const State& z) {
          const CurveSample& c = nodes[j * per + i];
          for (int d = 0; d < m; ++d) {
            defect = std::max(defect, std::abs(c.x(d) - z[d]));
            defect = std::max(defect, std::abs(c.v(d) - z[m + d]));
          }
        },
        opt);
  }
  return defect;
}

// Single shooting: unknown initial velocity, Newton on x(1; v0) - y with a
// central-difference sensitivity matrix.
inline bool single_shooting(const ChartManifold& M, const ScalarField& V, const Vec& x, const Vec& y,
                            const ConnectOptions& opt, Vec& v0, int& iterations) {
  const int m = M.m();
  const Rhs rhs = conformal_rhs(M, V);
  auto shoot = [&](const Vec& v) {
    const State z = integrate_rk4(rhs, pack(x, v), 0.0, 1.0, opt.steps);
    return Vec(Eigen::Map<const Vec>(z.data(), m) - y);
  };
  Vec F;
  try {
    F = shoot(v0);
  } catch (const Error&) {
    return false;
  }
  const double scale = 1.0 + y.cwiseAbs().maxCoeff();
  for (iterations = 0; iterations < opt.max_iter; ++iterations) {
    const double fn = F.cwiseAbs().maxCoeff();
    if (fn <= 1e-14 * scale) return true;
    Mat J(m, m);
    try {
      for (int i = 0; i < m; ++i) {
        const double h = 1e-6 * (1.0 + std::abs(v0(i)));
        Vec vp = v0, vm = v0;
        vp(i) += h;
        vm(i) -= h;
        J.col(i) = (shoot(vp) - shoot(vm)) / (2 * h);
      }
    } catch (const Error&) {
      return false;
    }
    Eigen::PartialPivLU<Mat> lu(J);
    if (!(std::abs(lu.determinant()) > 0.0)) return false;
    const Vec step = lu.solve(F);
    double lambda = 1.0;
    bool accepted = false;
    for (int b = 0; b < 12; ++b) {
      const Vec trial = v0 - lambda * step;
      try {
        const Vec Ft = shoot(trial);
        if (Ft.cwiseAbs().maxCoeff() < fn) {
          v0 = trial;
          F = Ft;
          accepted = true;
          break;
        }
      } catch (const Error&) {
      }
      lambda *= 0.5;
    }
    if (!accepted) return fn <= 1e-3 * opt.tol * scale;  // stagnated at roundoff level
  }
  return F.cwiseAbs().maxCoeff() <= 1e-3 * opt.tol * scale;
}

// Multiple shooting with S segments, straight-line initial guess.
inline bool multiple_shooting(const ChartManifold& M, const ScalarField& V, const Vec& x, const Vec& y,
                              const ConnectOptions& opt, std::vector<State>& starts, int& iterations) {
  const int m = M.m();
  const int S = opt.segments;
  const int per = std::max(4, opt.steps / S);
  const Rhs rhs = conformal_rhs(M, V);
  const int n = m + 2 * m * (S - 1);
  Vec z(n);
  z.head(m) = y - x;
  for (int j = 1; j < S; ++j) {
    z.segment(m + 2 * m * (j - 1), m) = x + (y - x) * (static_cast<double>(j) / S);
    z.segment(2 * m + 2 * m * (j - 1), m) = y - x;
  }
  auto seg_start = [&](const Vec& zz, int j) {
    if (j == 0) return pack(x, zz.head(m));
    return pack(zz.segment(m + 2 * m * (j - 1), m), zz.segment(2 * m + 2 * m * (j - 1), m));
  };
  auto flow = [&](const State& s0, int j) {
    return integrate_rk4(rhs, s0, static_cast<double>(j) / S, static_cast<double>(j + 1) / S, per);
  };
  auto residual = [&](const Vec& zz) {
    Vec F(n);
    for (int j = 0; j < S; ++j) {
      const State e = flow(seg_start(zz, j), j);
      if (j + 1 < S) {
        const State nx = seg_start(zz, j + 1);
        for (int d = 0; d < 2 * m; ++d) F(2 * m * j + d) = e[d] - nx[d];
      } else {
        for (int d = 0; d < m; ++d) F(2 * m * j + d) = e[d] - y(d);
      }
    }
    return F;
  };
  Vec F;
  try {
    F = residual(z);
  } catch (const Error&) {
    return false;
  }
  const double scale = 1.0 + y.cwiseAbs().maxCoeff();
  for (iterations = 0; iterations < opt.max_iter; ++iterations) {
    const double fn = F.cwiseAbs().maxCoeff();
    if (fn <= 1e-14 * scale) break;
    Mat J(n, n);
    try {
      for (int i = 0; i < n; ++i) {
        const double h = 1e-6 * (1.0 + std::abs(z(i)));
        Vec zp = z, zm = z;
        zp(i) += h;
        zm(i) -= h;
        J.col(i) = (residual(zp) - residual(zm)) / (2 * h);
      }
    } catch (const Error&) {
      return false;
    }
    const Vec step = J.partialPivLu().solve(F);
    if (!step.allFinite()) return false;
    double lambda = 1.0;
    bool accepted = false;
    for (int b = 0; b < 12; ++b) {
      const Vec trial = z - lambda * step;
      try {
        const Vec Ft = residual(trial);
        if (Ft.cwiseAbs().maxCoeff() < fn) {
          z = trial;
          F = Ft;
          accepted = true;
          break;
        }
      } catch (const Error&) {
      }
      lambda *= 0.5;
    }
    if (!accepted) break;
  }
  if (!(F.cwiseAbs().maxCoeff() <= 1e-3 * opt.tol * scale)) return false;
  starts.clear();
  for (int j = 0; j < S; ++j) starts.push_back(seg_start(z, j));
  return true;
}

}  // namespace connect_detail

/// Connecting path from x to y inside {V < v}.
inline ConnectResult conformal_connect(const ChartManifold& M, const ScalarField& V, double v, const Vec& x,
                                       const Vec& y, const ConnectOptions& opt = {}) {
  for (const Vec* p : {&x, &y}) {
    if (!M.box().contains(*p)) throw DomainError("connecting-map endpoint outside chart box");
    if (!(V.value(*p) < v)) throw DomainError("connecting-map endpoint outside the sublevel set");
  }
  ConnectOptions o = opt;
  for (int attempt = 0; attempt < 4; ++attempt, o.steps *= 2) {
    ConnectResult res;
    Vec v0 = y - x;
    int iters = 0;
    if (connect_detail::single_shooting(M, V, x, y, o, v0, iters)) {
      res.path = CurvePath(M, V, {connect_detail::pack(x, v0)}, o.steps);
      res.iterations = iters;
    } else if (o.allow_fallback) {
      std::vector<State> starts;
      if (!connect_detail::multiple_shooting(M, V, x, y, o, starts, iters))
        throw ConnectionError("connecting map did not converge between " + ChartManifold::format_point(x) + " and " +
                              ChartManifold::format_point(y));
      res.path = CurvePath(M, V, std::move(starts), o.steps);
      res.iterations = iters;
      res.used_fallback = true;
    } else {
      throw ConnectionError("single shooting did not converge");
    }
    const int n_nodes = 32 * res.path.segments() / std::gcd(32, res.path.segments());
    const std::vector<CurveSample> nodes = res.path.sample(n_nodes);
    res.defect = connect_detail::endpoint_and_reference_defect(M, V, res.path, y, nodes);
    if (res.defect > o.tol && attempt < 3) continue;  // refine the step
    if (res.defect > 10 * o.tol)
      throw ConnectionError("connecting map defect " + std::to_string(res.defect) + " above tolerance");
    for (const CurveSample& c : nodes) {
      const Vec& p = c.x;
      if (!M.box().contains(p) || !(V.value(p) < v))
        throw DomainError("connecting path leaves the sublevel set near " + ChartManifold::format_point(p));
    }
    return res;
  }
  throw ConnectionError("connecting map defect did not reach tolerance");
}

/// Trajectory t -> x(t) with velocity.
using Trajectory = Curve;

struct ConvexityOptions {
  double h_s = 1e-3;
  double dt = 1e-4;  // central difference in t for eta
  ConnectOptions connect;
};

/// Empirical kappa: min over the (s, t) grid of d^2/ds^2 L(phi0 + t omega, chi, d_t chi)
/// divided by |nabla_xi eta|^2 + |xi|^2 (|eta|^2 + 1). Returns +inf when
/// every denominator vanishes.
inline double convexity_margin(const ProblemSpec& pr, const Trajectory& x1, const Trajectory& x2,
                               std::span<const double> s_grid, std::span<const double> t_grid, const Vec& phi0,
                               const ConvexityOptions& opt = {}) {
  double kappa = std::numeric_limits<double>::infinity();
  const double d = opt.dt;
  const double v = pr.dom.v;
  for (double t : t_grid) {
    const CurvePath P0 = conformal_connect(pr.M, pr.dom.V, v, x1(t).x, x2(t).x, opt.connect).path;
    const CurvePath Pp = conformal_connect(pr.M, pr.dom.V, v, x1(t + d).x, x2(t + d).x, opt.connect).path;
    const CurvePath Pm = conformal_connect(pr.M, pr.dom.V, v, x1(t - d).x, x2(t - d).x, opt.connect).path;
    const Vec phi = phi0 + t * pr.omega.entries();
    auto lagrangian = [&](double s) {
      const CurveSample c = P0(s);
      const Vec eta = (Pp(s).x - Pm(s).x) / (2 * d);
      return 0.5 * pr.M.at(c.x).norm2(eta) + pr.W.value(phi, c.x);
    };
    for (double s : s_grid) {
      const double L0 = lagrangian(s);
      auto second = [&](double h) { return (lagrangian(s + h) - 2 * L0 + lagrangian(s - h)) / (h * h); };
      const double h = opt.h_s;
      const double Lss = (4 * second(h / 2) - second(h)) / 3;
      const CurveSample c = P0(s);
      const CurveSample cp = Pp(s);
      const CurveSample cm = Pm(s);
      const PointGeometry pg = pr.M.at(c.x);
      const Vec eta = (cp.x - cm.x) / (2 * d);
      const Vec xi = c.v;
      const Vec cov = (cp.v - cm.v) / (2 * d) + pg.christoffel(xi, eta);
      const double denom = pg.norm2(cov) + pg.norm2(xi) * (pg.norm2(eta) + 1.0);
      if (denom <= 1e-14) continue;
      kappa = std::min(kappa, Lss / denom);
    }
  }
  return kappa;
}

}  // namespace qpl
