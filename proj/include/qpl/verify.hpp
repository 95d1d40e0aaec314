#pragma once

// Post-hoc checks of a candidate solution: strong residuals on the torus and
// along lines, derivative bounds, the d1 pseudometric and a uniqueness probe.

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "qpl/conditions.hpp"
#include "qpl/random.hpp"
#include "qpl/solver.hpp"
#include "qpl/torus.hpp"

namespace qpl {

/// Chart residual ddx + Gamma(dx, dx) - g^{-1} W_x at one point.
inline Vec strong_residual(const ProblemSpec& pr, const Vec& phi, const Vec& x, const Vec& dx, const Vec& ddx) {
  if (!pr.M.box().contains(x)) throw DomainError("trajectory leaves the chart box at " + pr.M.format_point(x));
  const PointGeometry pg = pr.M.at(x);
  return ddx + pg.christoffel(dx, dx) - pg.gradient(pr.W.jet(phi, x, 1).g);
}

struct TorusResidual {
  Mat values;  // m x grid size
  double sup = 0.0;
  double l2 = 0.0;  // root mean square over the grid
  Vec argmax_phi;
  std::vector<std::string> warnings;
};

inline TorusResidual torus_residual(const ProblemSpec& pr, const FourierField& u, const TorusGrid& grid,
                                    double tail_max = 1e-6) {
  TorusResidual out;
  if (grid.P() < 2 * u.N() + 2)
    throw BandwidthError("residual grid P = " + std::to_string(grid.P()) + " is below 2N+2 = " +
                         std::to_string(2 * u.N() + 2));
  if (u.tail_ratio() >= tail_max) out.warnings.push_back("field is not resolved at truncation N");
  const SpectralBasis basis(u.modes_ptr(), grid);
  const FourierField du = directional_derivative(u, pr.omega);
  const Mat U = basis.synthesize(u);
  const Mat DU = basis.synthesize(du);
  const Mat DDU = basis.synthesize(directional_derivative(du, pr.omega));
  out.values = Mat(pr.m, grid.size());
  double sum = 0.0;
  for (int p = 0; p < grid.size(); ++p) {
    const Vec phi = grid.point(p);
    out.values.col(p) = strong_residual(pr, phi, U.col(p), DU.col(p), DDU.col(p));
    const double n = out.values.col(p).norm();
    sum += n * n;
    if (n > out.sup || p == 0) {
      out.sup = n;
      out.argmax_phi = phi;
    }
  }
  out.l2 = std::sqrt(sum / grid.size());
  return out;
}

struct LineResidual {
  std::vector<double> times;
  Mat residuals;  // m x times
  std::vector<double> speed;  // |dx|_g
  double sup = 0.0;
  double l2 = 0.0;
  double sup_speed = 0.0;
  double T = 0.0;
};

inline std::vector<double> time_grid(double a, double b, double dt) {
  const long n = std::lround((b - a) / dt);
  std::vector<double> t(n + 1);
  for (long i = 0; i <= n; ++i) t[i] = a + (b - a) * static_cast<double>(i) / static_cast<double>(n);
  return t;
}

/// Residual of x(t) = u(phi0 + t omega) on [-T, T] with exact spectral
/// derivatives, plus sup_t |dx/dt|_g.
inline LineResidual line_residual(const ProblemSpec& pr, const FourierField& u, const Vec& phi0, double T, double dt) {
  LineResidual out;
  out.T = T;
  out.times = time_grid(-T, T, dt);
  const int n = static_cast<int>(out.times.size());
  out.residuals = Mat(pr.m, n);
  out.speed.resize(n);
  const Vec& om = pr.omega.entries();
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const double t = out.times[i];
    const LineSample s = line_sample(u, phi0, pr.omega, t);
    const Vec phi = phi0 + t * om;
    out.residuals.col(i) = strong_residual(pr, phi, s.value, s.first, s.second);
    out.speed[i] = std::sqrt(pr.M.at(s.value).norm2(s.first));
    const double r = out.residuals.col(i).norm();
    out.sup = std::max(out.sup, r);
    out.sup_speed = std::max(out.sup_speed, out.speed[i]);
    sum += (i == 0 || i == n - 1 ? 0.5 : 1.0) * r * r;
  }
  out.l2 = std::sqrt(sum * dt / (2 * T));
  return out;
}

struct D1Estimate {
  double d1_T = 0.0;
  double d1_2T = 0.0;
  double T = 0.0;
  double c = 0.0;  // metric equivalence constants over the sampled points:
  double C = 0.0;  // c |v|^2 <= |v|_g^2 <= C |v|^2
};

/// Finite-window d1 = (2T)^{-1} int [ |dx1 - dx2|^2 + |x1 - x2|^2 ] dt in chart
/// coordinates, at T and 2T; c and C relate it to the metric version.
inline D1Estimate d1_distance(const ProblemSpec& pr, const FourierField& u1, const FourierField& u2, const Vec& phi0,
                              double T, double dt) {
  D1Estimate out;
  out.T = T;
  out.c = std::numeric_limits<double>::infinity();
  out.C = 0.0;
  const std::vector<double> t = time_grid(-2 * T, 2 * T, dt);
  const int n = static_cast<int>(t.size());
  double inner = 0.0;
  double outer = 0.0;
  for (int i = 0; i < n; ++i) {
    const LineSample a = line_sample(u1, phi0, pr.omega, t[i]);
    const LineSample b = line_sample(u2, phi0, pr.omega, t[i]);
    for (const Vec* x : {&a.value, &b.value}) {
      Eigen::SelfAdjointEigenSolver<Mat> es(pr.M.metric(*x), Eigen::EigenvaluesOnly);
      out.c = std::min(out.c, es.eigenvalues()(0));
      out.C = std::max(out.C, es.eigenvalues()(pr.m - 1));
    }
    const double f = (a.first - b.first).squaredNorm() + (a.value - b.value).squaredNorm();
    const bool end_outer = i == 0 || i == n - 1;
    outer += (end_outer ? 0.5 : 1.0) * f;
    if (std::abs(t[i]) <= T + 1e-12 * T) {
      const bool end_inner = std::abs(std::abs(t[i]) - T) <= 1e-12 * T;
      inner += (end_inner ? 0.5 : 1.0) * f;
    }
  }
  out.d1_T = inner * dt / (2 * T);
  out.d1_2T = outer * dt / (4 * T);
  return out;
}

struct UniquenessProbe {
  int trials = 0;
  int converged = 0;
  double max_d1 = 0.0;
  double max_coefficient_distance = 0.0;
  D1Estimate worst;  // pair attaining max_d1
  bool inconclusive = false;
  std::vector<std::string> notes;
};

/// Re-solves from random interior constants and compares the results.
inline UniquenessProbe uniqueness_probe(const ProblemSpec& pr, const RunConfig& cfg, int trials,
                                        const ConditionReport* conditions = nullptr) {
  UniquenessProbe out;
  out.trials = trials;
  const DomainSample ds = sample_domain(pr.M, pr.dom);
  if (ds.interior.empty()) throw DomainError("empty sublevel-set sample: nothing to probe");
  Rng rng(cfg.seed);
  std::vector<FourierField> sols;
  for (int i = 0; i < trials; ++i) {
    const std::size_t j = static_cast<std::size_t>(rng.uniform() * ds.interior.size()) % ds.interior.size();
    const auto rep = minimize(pr, cfg, FourierField::constant(pr.k, cfg.N, ds.interior[j]));
    if (rep.converged()) {
      sols.push_back(rep.u);
    } else {
      out.inconclusive = true;
      out.notes.push_back("trial " + std::to_string(i) + " did not converge: " + to_string(rep.status));
    }
  }
  out.converged = static_cast<int>(sols.size());
  const Vec phi0 = Vec::Zero(pr.k);
  for (std::size_t a = 0; a < sols.size(); ++a)
    for (std::size_t b = a + 1; b < sols.size(); ++b) {
      out.max_coefficient_distance = std::max(out.max_coefficient_distance, sols[a].max_coefficient_distance(sols[b]));
      const D1Estimate d = d1_distance(pr, sols[a], sols[b], phi0, cfg.window, cfg.dt);
      if (d.d1_T >= out.max_d1) {
        out.max_d1 = d.d1_T;
        out.worst = d;
      }
    }
  if (conditions && conditions->verdict() == Verdict::kFail)
    out.notes.push_back("conditions fail, uniqueness not expected");
  return out;
}

}  // namespace qpl
