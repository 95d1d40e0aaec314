#pragma once

// Sampling verifier for the convexity conditions on V (C1, C2) and the
// force-function inequalities of the existence theorem. Every check reports
// a signed margin and where it was attained; none of them is a proof.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qpl/geometry.hpp"
#include "qpl/problem.hpp"
#include "qpl/torus.hpp"

namespace qpl {

enum class Verdict { kPass, kFail, kInconclusive };

inline const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::kPass: return "pass";
    case Verdict::kFail: return "fail";
    case Verdict::kInconclusive: return "inconclusive";
  }
  return "?";
}

inline Verdict combine(Verdict a, Verdict b) {
  if (a == Verdict::kFail || b == Verdict::kFail) return Verdict::kFail;
  if (a == Verdict::kInconclusive || b == Verdict::kInconclusive) return Verdict::kInconclusive;
  return Verdict::kPass;
}

struct ConditionFragment {
  std::string name;
  Verdict verdict = Verdict::kInconclusive;
  double margin = std::numeric_limits<double>::quiet_NaN();
  Vec argmin;      // chart point
  Vec argmin_phi;  // torus point, empty when not applicable
  long samples = 0;
  std::vector<std::string> notes;
};

struct ConditionReport {
  std::vector<ConditionFragment> fragments;
  std::vector<std::string> warnings;
  int S = 0;

  Verdict verdict() const {
    Verdict v = Verdict::kPass;
    for (const auto& f : fragments) v = combine(v, f.verdict);
    return v;
  }
  const ConditionFragment* find(const std::string& name) const {
    for (const auto& f : fragments)
      if (f.name == name) return &f;
    return nullptr;
  }
};

/// Grid sample of the closed sublevel set and its boundary.
struct DomainSample {
  int S = 0;
  std::vector<Vec> closed;    // nodes with V <= v + eps_bnd, grid order
  std::vector<Vec> interior;  // nodes with V < v, grid order
  std::vector<bool> interior_on_rim;  // interior node adjacent to an exterior node
  std::vector<Vec> boundary;  // points projected onto the level set V = v
  bool touches_box = false;
  int components = 0;
  Vec barycenter;

  /// Closed sample plus projected boundary points.
  std::vector<Vec> closure() const {
    std::vector<Vec> all = closed;
    all.insert(all.end(), boundary.begin(), boundary.end());
    return all;
  }
};

/// Lowest eigenvalue of the covariant Hessian of V relative to g.
inline double lambda_V(const ChartManifold& M, const ScalarField& V, const Vec& x) {
  const PointGeometry pg = M.at(x);
  const Jet j = V.jet(x, 2);
  return pg.min_relative_eigenvalue(pg.hessian_matrix(j.g, j.h));
}

/// Lowest eigenvalue relative to g of Hess V - (1/2) dV dV^T.
inline double mu_V(const ChartManifold& M, const ScalarField& V, const Vec& x) {
  const PointGeometry pg = M.at(x);
  const Jet j = V.jet(x, 2);
  return pg.min_relative_eigenvalue(pg.hessian_matrix(j.g, j.h) - 0.5 * j.g * j.g.transpose());
}

namespace cond_detail {

// Moves x onto V = v along the metric gradient of V.
inline bool project_to_level(const ChartManifold& M, const ScalarField& V, double v, Vec& x) {
  for (int it = 0; it < 8; ++it) {
    const Jet j = V.jet(x, 1);
    const double f = j.v - v;
    if (std::abs(f) <= 1e-14 * (1.0 + std::abs(v))) return true;
    const PointGeometry pg = M.at(x);
    const Vec grad = pg.gradient(j.g);
    const double gg = j.g.dot(grad);
    if (!(gg > 0.0)) return false;
    x -= (f / gg) * grad;
    if (!M.box().contains(x)) return false;
  }
  return std::abs(V.value(x) - v) <= 1e-10 * (1.0 + std::abs(v));
}

inline Vec node_point(const Box& box, int S, const std::vector<int>& idx) {
  Vec x(box.dim());
  for (int d = 0; d < box.dim(); ++d) x(d) = box.lo(d) + (box.hi(d) - box.lo(d)) * idx[d] / S;
  return x;
}

}  // namespace cond_detail

/// Samples the chart box on (S+1)^m nodes and builds the closed sublevel
/// sample and a projected boundary sample (edge sign changes and band nodes).
inline DomainSample sample_domain(const ChartManifold& M, const DomainSpec& dom) {
  const int m = M.m();
  const int S = dom.S;
  const int n1 = S + 1;
  long total = 1;
  for (int d = 0; d < m; ++d) total *= n1;
  std::vector<double> val(total);
  std::vector<Vec> pts(total);
  std::vector<int> idx(m, 0);
  for (long p = 0; p < total; ++p) {
    long r = p;
    for (int d = m - 1; d >= 0; --d) {
      idx[d] = static_cast<int>(r % n1);
      r /= n1;
    }
    pts[p] = cond_detail::node_point(M.box(), S, idx);
    try {
      val[p] = dom.V.value(pts[p]);
    } catch (const DomainError&) {
      val[p] = std::numeric_limits<double>::infinity();
    }
    if (std::isnan(val[p])) val[p] = std::numeric_limits<double>::infinity();
  }
  std::vector<long> stride(m);
  stride[m - 1] = 1;
  for (int d = m - 2; d >= 0; --d) stride[d] = stride[d + 1] * n1;
  auto coord = [&](long p, int d) { return static_cast<int>((p / stride[d]) % n1); };

  DomainSample out;
  out.S = S;
  out.barycenter = Vec::Zero(m);
  std::vector<int> comp(total, -1);
  for (long p = 0; p < total; ++p) {
    if (val[p] <= dom.v + dom.eps_bnd) out.closed.push_back(pts[p]);
    if (val[p] < dom.v) {
      for (int d = 0; d < m; ++d)
        if (coord(p, d) == 0 || coord(p, d) == S) out.touches_box = true;
    }
  }
  // connected components of {V < v} under axis adjacency
  std::vector<long> stack;
  for (long p = 0; p < total; ++p) {
    if (!(val[p] < dom.v) || comp[p] >= 0) continue;
    comp[p] = out.components;
    stack.push_back(p);
    while (!stack.empty()) {
      const long q = stack.back();
      stack.pop_back();
      for (int d = 0; d < m; ++d) {
        const int c = coord(q, d);
        if (c > 0 && val[q - stride[d]] < dom.v && comp[q - stride[d]] < 0) {
          comp[q - stride[d]] = out.components;
          stack.push_back(q - stride[d]);
        }
        if (c < S && val[q + stride[d]] < dom.v && comp[q + stride[d]] < 0) {
          comp[q + stride[d]] = out.components;
          stack.push_back(q + stride[d]);
        }
      }
    }
    ++out.components;
  }
  for (long p = 0; p < total; ++p) {
    if (!(val[p] < dom.v)) continue;
    out.interior.push_back(pts[p]);
    out.barycenter += pts[p];
    bool rim = false;
    for (int d = 0; d < m; ++d) {
      const int c = coord(p, d);
      if (c == 0 || c == S || !(val[p - stride[d]] < dom.v) || !(val[p + stride[d]] < dom.v)) rim = true;
    }
    out.interior_on_rim.push_back(rim);
  }
  if (!out.interior.empty()) out.barycenter /= static_cast<double>(out.interior.size());

  // boundary: sign changes of V - v along grid edges, then band nodes
  for (long p = 0; p < total; ++p) {
    for (int d = 0; d < m; ++d) {
      if (coord(p, d) == S) continue;
      const long q = p + stride[d];
      const double a = val[p] - dom.v;
      const double b = val[q] - dom.v;
      if (!std::isfinite(a) || !std::isfinite(b) || !((a < 0.0) != (b < 0.0))) continue;
      Vec x = pts[p] + (a / (a - b)) * (pts[q] - pts[p]);
      if (cond_detail::project_to_level(M, dom.V, dom.v, x)) out.boundary.push_back(x);
    }
  }
  for (long p = 0; p < total; ++p) {
    if (std::abs(val[p] - dom.v) > dom.eps_bnd) continue;
    Vec x = pts[p];
    if (cond_detail::project_to_level(M, dom.V, dom.v, x)) out.boundary.push_back(x);
  }
  return out;
}

namespace cond_detail {

inline void track_min(ConditionFragment& f, double value, const Vec& x, const Vec& phi = Vec()) {
  ++f.samples;
  if (std::isnan(f.margin) || value < f.margin) {
    f.margin = value;
    f.argmin = x;
    f.argmin_phi = phi;
  }
}

inline Verdict strict(double margin, double delta) { return margin > delta ? Verdict::kPass : Verdict::kFail; }

inline std::vector<Vec> torus_nodes(int k, int P) {
  TorusGrid grid(k, P);
  std::vector<Vec> out;
  out.reserve(grid.size());
  for (int j = 0; j < grid.size(); ++j) out.push_back(grid.point(j));
  return out;
}

}  // namespace cond_detail

/// Positive definiteness of g on every grid node of the chart box.
inline ConditionFragment check_metric(const ChartManifold& M, int S) {
  ConditionFragment f;
  f.name = "metric";
  const int m = M.m();
  const int n1 = S + 1;
  long total = 1;
  for (int d = 0; d < m; ++d) total *= n1;
  std::vector<int> idx(m);
  for (long p = 0; p < total; ++p) {
    long r = p;
    for (int d = m - 1; d >= 0; --d) {
      idx[d] = static_cast<int>(r % n1);
      r /= n1;
    }
    const Vec x = cond_detail::node_point(M.box(), S, idx);
    double e = -std::numeric_limits<double>::infinity();
    try {
      const Mat g = M.metric(x);
      Eigen::SelfAdjointEigenSolver<Mat> es(g, Eigen::EigenvaluesOnly);
      e = es.eigenvalues()(0);
    } catch (const DomainError&) {
    }
    cond_detail::track_min(f, e, x);
  }
  f.verdict = cond_detail::strict(f.margin, 1e-8);
  f.notes.push_back("checked on chart domain only");
  return f;
}

/// C1: 2 lambda_V + |grad V|^2 > 0 on the closed sublevel set, v noncritical,
/// sublevel set bounded (inside the chart box) and connected.
inline ConditionFragment check_C1(const ChartManifold& M, const DomainSpec& dom, const DomainSample& ds,
                                  const RunConfig& cfg = {}) {
  ConditionFragment f;
  f.name = "C1";
  for (const Vec& x : ds.closure()) {
    const PointGeometry pg = M.at(x);
    const Jet j = dom.V.jet(x, 2);
    const double lam = pg.min_relative_eigenvalue(pg.hessian_matrix(j.g, j.h));
    cond_detail::track_min(f, 2.0 * lam + j.g.dot(pg.gradient(j.g)), x);
  }
  if (ds.interior.empty()) {
    f.verdict = Verdict::kInconclusive;
    f.notes.push_back("sublevel set sample is empty");
    return f;
  }
  double crit = std::numeric_limits<double>::infinity();
  for (const Vec& x : ds.boundary) {
    const Jet j = dom.V.jet(x, 1);
    crit = std::min(crit, std::sqrt(j.g.dot(M.at(x).gradient(j.g))));
  }
  f.verdict = cond_detail::strict(f.margin, cfg.delta_strict);
  if (f.verdict == Verdict::kPass && !ds.boundary.empty() && !(crit > cfg.delta_crit)) {
    f.verdict = Verdict::kFail;
    f.notes.push_back("level v is (nearly) critical: min |grad V| on boundary = " + std::to_string(crit));
  }
  if (f.verdict == Verdict::kPass) {
    if (ds.touches_box) {
      f.verdict = Verdict::kInconclusive;
      f.notes.push_back("sublevel set touches the chart box; boundedness cannot be checked (chart too small)");
    } else if (ds.boundary.empty()) {
      f.verdict = Verdict::kInconclusive;
      f.notes.push_back("empty boundary sample");
    } else if (ds.components != 1) {
      f.verdict = Verdict::kInconclusive;
      f.notes.push_back("sampled sublevel set has " + std::to_string(ds.components) + " components");
    }
  }
  f.notes.push_back("min |grad V| on boundary = " + std::to_string(crit));
  f.notes.push_back("checked on chart domain only");
  return f;
}

/// C2: (a) mu_V - 2 K* > 0 on the closed sublevel set; (b) the Hessian of V
/// restricted to the tangent space of the level set is positive definite.
inline std::vector<ConditionFragment> check_C2(const ChartManifold& M, const DomainSpec& dom, const DomainSample& ds,
                                               const RunConfig& cfg = {}) {
  ConditionFragment a;
  a.name = "C2_curvature";
  for (const Vec& x : ds.closure()) {
    const PointGeometry pg = M.at(x, 2);
    const Jet j = dom.V.jet(x, 2);
    const double mu = pg.min_relative_eigenvalue(pg.hessian_matrix(j.g, j.h) - 0.5 * j.g * j.g.transpose());
    const double ks = max_sectional(pg, cfg.restarts).value;
    cond_detail::track_min(a, mu - 2.0 * ks, x);
  }
  a.verdict = ds.closed.empty() ? Verdict::kInconclusive : cond_detail::strict(a.margin, cfg.delta_strict);

  ConditionFragment b;
  b.name = "C2_boundary_hessian";
  const int m = M.m();
  for (const Vec& x : ds.boundary) {
    const PointGeometry pg = M.at(x);
    const Jet j = dom.V.jet(x, 2);
    const Mat L = pg.llt.matrixL();
    const Mat Linv = L.triangularView<Eigen::Lower>().solve(Mat::Identity(m, m));
    const Mat Sm = Linv * pg.hessian_matrix(j.g, j.h) * Linv.transpose();
    const Vec w = Linv * j.g;  // gradient in orthonormal coordinates
    double e = std::numeric_limits<double>::infinity();
    if (m > 1 && w.norm() > 0.0) {
      Eigen::HouseholderQR<Mat> qr(Mat(w / w.norm()));
      const Mat Q = qr.householderQ() * Mat::Identity(m, m);
      const Mat T = Q.rightCols(m - 1);
      Eigen::SelfAdjointEigenSolver<Mat> es(T.transpose() * Sm * T, Eigen::EigenvaluesOnly);
      e = es.eigenvalues()(0);
    } else if (m > 1) {
      e = -std::numeric_limits<double>::infinity();
    }
    cond_detail::track_min(b, e, x);
  }
  if (ds.boundary.empty()) {
    b.verdict = Verdict::kInconclusive;
    b.notes.push_back("empty boundary sample");
  } else {
    b.verdict = b.margin > cfg.delta_pd ? Verdict::kPass : Verdict::kFail;
  }
  if (ds.touches_box) {
    for (auto* f : {&a, &b})
      if (f->verdict == Verdict::kPass) {
        f->verdict = Verdict::kInconclusive;
        f->notes.push_back("sublevel set touches the chart box");
      }
  }
  return {a, b};
}

/// lambda_W + (1/2)<grad W, grad V> > 0 on T^k x closure, and
/// <grad W, grad V> > 0 on T^k x boundary.
inline std::vector<ConditionFragment> check_theorem1(const ProblemSpec& pr, const DomainSample& ds) {
  const RunConfig& cfg = pr.config;
  ConditionFragment a;
  a.name = "theorem1_interior";
  ConditionFragment b;
  b.name = "theorem1_boundary";
  const std::vector<Vec> phis = cond_detail::torus_nodes(pr.k, cfg.phi_grid);
  for (const Vec& x : ds.closure()) {
    const PointGeometry pg = pr.M.at(x);
    const Jet jv = pr.dom.V.jet(x, 1);
    const Vec gradV = pg.gradient(jv.g);
    for (const Vec& phi : phis) {
      const Jet jw = pr.W.jet(phi, x, 2);
      const double lam = pg.min_relative_eigenvalue(pg.hessian_matrix(jw.g, jw.h));
      cond_detail::track_min(a, lam + 0.5 * jw.g.dot(gradV), x, phi);
    }
  }
  for (const Vec& x : ds.boundary) {
    const PointGeometry pg = pr.M.at(x);
    const Vec gradV = pg.gradient(pr.dom.V.jet(x, 1).g);
    for (const Vec& phi : phis) cond_detail::track_min(b, pr.W.jet(phi, x, 1).g.dot(gradV), x, phi);
  }
  a.verdict = ds.closed.empty() ? Verdict::kInconclusive : cond_detail::strict(a.margin, cfg.delta_strict);
  b.verdict = ds.boundary.empty() ? Verdict::kInconclusive : cond_detail::strict(b.margin, cfg.delta_strict);
  if (ds.boundary.empty()) b.notes.push_back("empty boundary sample");
  return {a, b};
}

/// All condition checks for a problem at its configured resolution.
inline ConditionReport check_conditions(const ProblemSpec& pr) {
  ConditionReport rep;
  rep.S = pr.dom.S;
  rep.warnings = pr.omega.independence_warnings(pr.config.N_check, pr.config.delta_indep);
  rep.fragments.push_back(check_metric(pr.M, pr.dom.S));
  const DomainSample ds = sample_domain(pr.M, pr.dom);
  rep.fragments.push_back(check_C1(pr.M, pr.dom, ds, pr.config));
  for (auto& f : check_C2(pr.M, pr.dom, ds, pr.config)) rep.fragments.push_back(std::move(f));
  for (auto& f : check_theorem1(pr, ds)) rep.fragments.push_back(std::move(f));
  return rep;
}

}  // namespace qpl
