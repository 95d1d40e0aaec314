#pragma once

// Riemannian geometry in a single coordinate chart: metric, Christoffel
// symbols, the dual map G, curvature, sectional curvature, covariant
// gradient/Hessian of scalar fields, and parallel transport.
//
// Curvature convention: R(a,b)c = nabla_a nabla_b c - nabla_b nabla_a c, so
// that <R(a,b)b,a> > 0 on the round sphere.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qpl/errors.hpp"
#include "qpl/expression.hpp"
#include "qpl/jet.hpp"
#include "qpl/ode.hpp"
#include "qpl/random.hpp"
#include "qpl/torus.hpp"

namespace qpl {

inline std::span<const double> as_span(const Vec& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

/// Axis-aligned chart domain.
struct Box {
  Vec lo;
  Vec hi;

  int dim() const { return static_cast<int>(lo.size()); }
  bool contains(const Vec& x, double tol = 0.0) const {
    for (int i = 0; i < dim(); ++i)
      if (!(x(i) >= lo(i) - tol && x(i) <= hi(i) + tol)) return false;
    return true;
  }
  Vec center() const { return 0.5 * (lo + hi); }
};

/// Scalar expression in (phi, x) with exact derivatives. Fields that do not
/// depend on phi are declared with k = 0.
class ScalarField {
 public:
  ScalarField() = default;
  explicit ScalarField(Expression e) : expr_(std::move(e)) {}
  static ScalarField parse(std::string_view text, int k, int m) { return ScalarField(Expression::parse(text, k, m)); }

  bool valid() const { return expr_.valid(); }
  int k() const { return expr_.k(); }
  int m() const { return expr_.m(); }
  const Expression& expr() const { return expr_; }

  double value(const Vec& phi, const Vec& x) const { return expr_.value(phi_span(phi), as_span(x)); }
  double value(const Vec& x) const { return expr_.value({}, as_span(x)); }

  /// Value, gradient and (order 2) Hessian in x.
  Jet jet(const Vec& phi, const Vec& x, int order) const { return expr_.jet(phi_span(phi), as_span(x), order); }
  Jet jet(const Vec& x, int order) const { return expr_.jet({}, as_span(x), order); }

  /// Jet with an extra last slot holding d/dt along phi + t omega.
  Jet jet_along(const Vec& phi, const Vec& x, const Vec& omega, int order) const {
    if (k() == 0) {
      Jet j = expr_.jet({}, as_span(x), order);
      Jet r = Jet::constant(j.v, m() + 1, order >= 2);
      r.g.head(m()) = j.g;
      if (order >= 2) r.h.topLeftCorner(m(), m()) = j.h;
      return r;
    }
    return expr_.jet(phi_span(phi), as_span(x), order, as_span(omega));
  }

 private:
  std::span<const double> phi_span(const Vec& phi) const {
    if (k() == 0) return {};
    return as_span(phi);
  }
  Expression expr_;
};

/// Metric data and derived connection quantities at one chart point.
struct PointGeometry {
  int m = 0;
  Vec x;
  Mat g;
  Mat ginv;
  Eigen::LLT<Mat> llt;
  std::vector<Mat> dg;         // dg[p](i,j) = d_p g_ij
  std::vector<Mat> gam_lower;  // gam_lower[l](j,k) = Gamma_{l,jk}
  std::vector<Mat> gam;        // gam[i](j,k) = Gamma^i_jk
  std::vector<std::vector<Mat>> dgam;  // dgam[p][i](j,k) = d_p Gamma^i_jk (order 2 only)

  double inner(const Vec& a, const Vec& b) const { return a.dot(g * b); }
  double norm2(const Vec& a) const { return a.dot(g * a); }

  /// Gamma_x(a, b)^i = Gamma^i_jk a^j b^k.
  Vec christoffel(const Vec& a, const Vec& b) const {
    Vec r(m);
    for (int i = 0; i < m; ++i) r(i) = a.dot(gam[i] * b);
    return r;
  }

  /// Matrix of b -> Gamma_x(a, b).
  Mat christoffel_matrix(const Vec& a) const {
    Mat M(m, m);
    for (int i = 0; i < m; ++i) M.row(i) = (gam[i].transpose() * a).transpose();
    return M;
  }

  /// G_x(a, b)_k = a^l b^j Gamma_{l,jk}; satisfies (g a, Gamma(b, c)) = (G(a, b), c).
  Vec gee(const Vec& a, const Vec& b) const {
    Vec r = Vec::Zero(m);
    for (int l = 0; l < m; ++l) r += a(l) * (gam_lower[l].transpose() * b);
    return r;
  }

  /// R(a,b)c = (D_a Gamma)(b,c) - (D_b Gamma)(a,c) + Gamma(a, Gamma(b,c)) - Gamma(b, Gamma(a,c)).
  Vec curvature(const Vec& a, const Vec& b, const Vec& c) const {
    if (dgam.empty()) throw GeometryError("curvature requires second derivatives of the metric");
    Vec r = christoffel(a, christoffel(b, c)) - christoffel(b, christoffel(a, c));
    for (int p = 0; p < m; ++p) {
      for (int i = 0; i < m; ++i) r(i) += a(p) * b.dot(dgam[p][i] * c) - b(p) * a.dot(dgam[p][i] * c);
    }
    return r;
  }

  /// Sectional curvature of span{a, b}.
  double sectional(const Vec& a, const Vec& b) const {
    const double aa = norm2(a);
    const double bb = norm2(b);
    const double ab = inner(a, b);
    const double gram = aa * bb - ab * ab;
    if (!(gram > 1e-10 * aa * bb) || aa <= 0.0 || bb <= 0.0)
      throw GeometryError("sectional curvature of a degenerate plane");
    return inner(curvature(a, b, b), a) / gram;
  }

  Vec gradient(const Vec& f_x) const { return llt.solve(f_x); }

  /// Coordinate matrix of the covariant Hessian: f_xx - sum_i f_x[i] Gamma^i.
  Mat hessian_matrix(const Vec& f_x, const Mat& f_xx) const {
    Mat A = f_xx;
    for (int i = 0; i < m; ++i) A -= f_x(i) * gam[i];
    return 0.5 * (A + A.transpose());
  }

  double hessian_quadform(const Vec& f_x, const Mat& f_xx, const Vec& xi) const {
    return xi.dot(f_xx * xi) - f_x.dot(christoffel(xi, xi));
  }

  /// Minimal eigenvalue of the symmetric form A relative to g.
  double min_relative_eigenvalue(const Mat& A) const {
    const Mat L = llt.matrixL();
    const Mat Linv = L.triangularView<Eigen::Lower>().solve(Mat::Identity(m, m));
    const Mat S = Linv * A * Linv.transpose();
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (S + S.transpose()), Eigen::EigenvaluesOnly);
    return es.eigenvalues()(0);
  }

  /// Columns form a g-orthonormal basis (L^{-T}).
  Mat orthonormal_basis() const {
    const Mat L = llt.matrixL();
    return L.transpose().triangularView<Eigen::Upper>().solve(Mat::Identity(m, m));
  }
};

/// Result of the sectional-curvature maximization at a point.
struct SectionalMax {
  double value = 0.0;
  Vec a;  // g-orthonormal pair spanning the maximizing plane
  Vec b;
};

class ChartManifold {
 public:
  ChartManifold() = default;

  /// `entries` holds the m*m metric expressions in row-major order; each is
  /// declared with k = 0 and the chart dimension m.
  ChartManifold(int m, std::vector<Expression> entries, Box box)
      : m_(m), entries_(std::move(entries)), box_(std::move(box)) {
    if (m < 1) throw ConfigError("chart dimension must be >= 1");
    if (static_cast<int>(entries_.size()) != m * m) throw ConfigError("metric must have m*m entries");
    if (box_.dim() != m) throw ConfigError("chart box dimension differs from m");
    for (int i = 0; i < m; ++i)
      if (!(box_.lo(i) < box_.hi(i))) throw ConfigError("chart box must have lo < hi on every axis");
    constant_ = true;
    for (const auto& e : entries_) {
      if (e.k() != 0 || e.m() != m) throw ConfigError("metric entries must be expressions in x only");
      for (const auto& n : e.nodes())
        if (n.kind == NodeKind::kVar) constant_ = false;
    }
    check_symmetric();
    if (constant_) cached_ = std::make_shared<const PointGeometry>(at(box_.center(), 2));
  }

  static ChartManifold parse(int m, const std::vector<std::string>& entries, Box box) {
    std::vector<Expression> e;
    e.reserve(entries.size());
    for (const auto& s : entries) e.push_back(Expression::parse(s, 0, m));
    return ChartManifold(m, std::move(e), std::move(box));
  }

  static ChartManifold flat(int m, Box box) {
    std::vector<Expression> e;
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) e.push_back(Expression::constant(i == j ? 1.0 : 0.0, 0, m));
    return ChartManifold(m, std::move(e), std::move(box));
  }

  int m() const { return m_; }
  const Box& box() const { return box_; }
  const std::vector<Expression>& entries() const { return entries_; }
  const Expression& entry(int i, int j) const { return entries_[i * m_ + j]; }
  bool is_constant() const { return constant_; }

  Mat metric(const Vec& x) const {
    Mat g(m_, m_);
    for (int i = 0; i < m_; ++i)
      for (int j = i; j < m_; ++j) g(i, j) = g(j, i) = entry(i, j).value({}, as_span(x));
    return g;
  }

  /// Geometry at x. order 1: metric, first derivatives, Christoffel symbols.
  /// order 2 additionally differentiates the Christoffel symbols.
  PointGeometry at(const Vec& x, int order = 1) const {
    if (constant_ && cached_) {
      PointGeometry pg = *cached_;
      pg.x = x;
      return pg;
    }
    PointGeometry pg;
    pg.m = m_;
    pg.x = x;
    pg.g = Mat(m_, m_);
    pg.dg.assign(m_, Mat::Zero(m_, m_));
    std::vector<std::vector<Mat>> ddg;
    const bool second = order >= 2;
    if (second) ddg.assign(m_, std::vector<Mat>(m_, Mat::Zero(m_, m_)));
    for (int i = 0; i < m_; ++i) {
      for (int j = i; j < m_; ++j) {
        if (constant_) {
          pg.g(i, j) = pg.g(j, i) = entry(i, j).value({}, as_span(x));
          continue;
        }
        const Jet J = entry(i, j).jet({}, as_span(x), second ? 2 : 1);
        pg.g(i, j) = pg.g(j, i) = J.v;
        for (int p = 0; p < m_; ++p) {
          pg.dg[p](i, j) = pg.dg[p](j, i) = J.g(p);
          if (second)
            for (int q = 0; q < m_; ++q) ddg[p][q](i, j) = ddg[p][q](j, i) = J.h(p, q);
        }
      }
    }
    pg.llt.compute(pg.g);
    if (pg.llt.info() != Eigen::Success || !(pg.llt.matrixL().toDenseMatrix().diagonal().minCoeff() > 0.0))
      throw GeometryError("metric is not positive definite at x = " + format_point(x));
    pg.ginv = pg.llt.solve(Mat::Identity(m_, m_));

    pg.gam_lower.assign(m_, Mat::Zero(m_, m_));
    for (int l = 0; l < m_; ++l)
      for (int j = 0; j < m_; ++j)
        for (int k = 0; k < m_; ++k)
          pg.gam_lower[l](j, k) = 0.5 * (pg.dg[j](l, k) + pg.dg[k](l, j) - pg.dg[l](j, k));
    pg.gam.assign(m_, Mat::Zero(m_, m_));
    for (int i = 0; i < m_; ++i)
      for (int l = 0; l < m_; ++l)
        if (pg.ginv(i, l) != 0.0) pg.gam[i] += pg.ginv(i, l) * pg.gam_lower[l];

    if (second) {
      // d_p Gamma^i_jk = -g^ia (d_p g_ab) Gamma^b_jk + g^il d_p Gamma_{l,jk}
      pg.dgam.assign(m_, std::vector<Mat>(m_, Mat::Zero(m_, m_)));
      for (int p = 0; p < m_; ++p) {
        std::vector<Mat> dlow(m_, Mat::Zero(m_, m_));
        for (int l = 0; l < m_; ++l)
          for (int j = 0; j < m_; ++j)
            for (int k = 0; k < m_; ++k)
              dlow[l](j, k) = 0.5 * (ddg[p][j](l, k) + ddg[p][k](l, j) - ddg[p][l](j, k));
        const Mat gdg = pg.ginv * pg.dg[p];
        for (int i = 0; i < m_; ++i) {
          Mat& D = pg.dgam[p][i];
          for (int l = 0; l < m_; ++l) {
            D += pg.ginv(i, l) * dlow[l];
            D -= gdg(i, l) * pg.gam[l];
          }
        }
      }
    }
    return pg;
  }

  static std::string format_point(const Vec& x) {
    std::string s = "(";
    for (Eigen::Index i = 0; i < x.size(); ++i) s += (i ? "," : "") + std::to_string(x(i));
    return s + ")";
  }

 private:
  void check_symmetric() const {
    Rng rng(0x5EED);
    for (int i = 0; i < m_; ++i) {
      for (int j = i + 1; j < m_; ++j) {
        const Expression& a = entry(i, j);
        const Expression& b = entry(j, i);
        if (a.same_tree(b)) continue;
        for (int s = 0; s < 16; ++s) {
          Vec x(m_);
          for (int d = 0; d < m_; ++d) x(d) = rng.uniform(box_.lo(d), box_.hi(d));
          double va = 0.0;
          double vb = 0.0;
          try {
            va = a.value({}, as_span(x));
            vb = b.value({}, as_span(x));
          } catch (const DomainError&) {
            continue;
          }
          if (std::abs(va - vb) > 1e-12 * (1.0 + std::abs(va)))
            throw ConfigError("metric entries (" + std::to_string(i + 1) + "," + std::to_string(j + 1) + ") and (" +
                              std::to_string(j + 1) + "," + std::to_string(i + 1) + ") differ");
        }
      }
    }
  }

  int m_ = 0;
  std::vector<Expression> entries_;
  Box box_;
  bool constant_ = true;
  std::shared_ptr<const PointGeometry> cached_;
};

// Free-function forms of the point operations.

inline Vec christoffel(const ChartManifold& M, const Vec& x, const Vec& a, const Vec& b) {
  return M.at(x).christoffel(a, b);
}

inline Vec gee(const ChartManifold& M, const Vec& x, const Vec& a, const Vec& b) { return M.at(x).gee(a, b); }

inline Vec curvature(const ChartManifold& M, const Vec& x, const Vec& a, const Vec& b, const Vec& c) {
  return M.at(x, 2).curvature(a, b, c);
}

inline double sectional_curvature(const ChartManifold& M, const Vec& x, const Vec& a, const Vec& b) {
  return M.at(x, 2).sectional(a, b);
}

/// Largest sectional curvature at the point. In dimension 2 there is a single
/// plane; otherwise alternating maximization over g-orthonormal pairs: for a
/// fixed b, K(a, b) is a quadratic form in a, so each half-step takes the top
/// eigenvector of that form on the complement of the other vector.
inline SectionalMax max_sectional(const PointGeometry& pg, int restarts = 8, std::uint64_t seed = 17) {
  const int m = pg.m;
  SectionalMax best;
  if (m < 2) {
    best.value = 0.0;
    return best;
  }
  const Mat E = pg.orthonormal_basis();
  // Rt(a,b,c,d) = <R(e_a, e_b) e_c, e_d>
  std::vector<double> Rt(static_cast<std::size_t>(m) * m * m * m, 0.0);
  auto idx = [m](int a, int b, int c, int d) { return ((static_cast<std::size_t>(a) * m + b) * m + c) * m + d; };
  for (int a = 0; a < m; ++a)
    for (int b = 0; b < m; ++b) {
      if (a == b) continue;
      for (int c = 0; c < m; ++c) {
        const Vec r = pg.g * pg.curvature(E.col(a), E.col(b), E.col(c));
        for (int d = 0; d < m; ++d) Rt[idx(a, b, c, d)] = E.col(d).dot(r);
      }
    }
  auto K = [&](const Vec& al, const Vec& be) {
    double s = 0.0;
    for (int a = 0; a < m; ++a)
      for (int b = 0; b < m; ++b)
        for (int c = 0; c < m; ++c)
          for (int d = 0; d < m; ++d) s += Rt[idx(a, b, c, d)] * al(a) * be(b) * be(c) * al(d);
    return s;
  };
  auto form_in_first = [&](const Vec& be) {
    Mat Q = Mat::Zero(m, m);
    for (int a = 0; a < m; ++a)
      for (int b = 0; b < m; ++b)
        for (int c = 0; c < m; ++c)
          for (int d = 0; d < m; ++d) Q(a, d) += Rt[idx(a, b, c, d)] * be(b) * be(c);
    return Mat(0.5 * (Q + Q.transpose()));
  };
  auto top_on_complement = [m](const Mat& Q, const Vec& other) {
    const Mat Pr = Mat::Identity(m, m) - other * other.transpose();
    Eigen::SelfAdjointEigenSolver<Mat> es(Pr * Q * Pr);
    // The eigenvector along `other` has eigenvalue 0; pick the best one orthogonal to it.
    double bestv = -std::numeric_limits<double>::infinity();
    Vec v = Vec::Zero(m);
    for (int i = 0; i < m; ++i) {
      const Vec c = es.eigenvectors().col(i);
      if (std::abs(c.dot(other)) > 0.5) continue;
      if (es.eigenvalues()(i) > bestv) {
        bestv = es.eigenvalues()(i);
        v = c;
      }
    }
    Vec w = v - v.dot(other) * other;
    return Vec(w / w.norm());
  };

  if (m == 2) {
    best.value = K(Vec::Unit(2, 0), Vec::Unit(2, 1));
    best.a = E.col(0);
    best.b = E.col(1);
    return best;
  }

  std::vector<std::pair<Vec, Vec>> starts;
  for (int i = 0; i < m; ++i)
    for (int j = i + 1; j < m; ++j) starts.emplace_back(Vec::Unit(m, i), Vec::Unit(m, j));
  Rng rng(seed);
  for (int r = 0; r < restarts; ++r) {
    Vec a = rng.normal_vector(m).normalized();
    Vec b = rng.normal_vector(m);
    b -= b.dot(a) * a;
    starts.emplace_back(a, b.normalized());
  }
  best.value = -std::numeric_limits<double>::infinity();
  for (auto [al, be] : starts) {
    double val = K(al, be);
    for (int it = 0; it < 200; ++it) {
      al = top_on_complement(form_in_first(be), be);
      be = top_on_complement(form_in_first(al), al);
      const double nv = K(al, be);
      const bool done = std::abs(nv - val) <= 1e-15 * (1.0 + std::abs(nv));
      val = nv;
      if (done) break;
    }
    if (val > best.value) {
      best.value = val;
      best.a = E * al;
      best.b = E * be;
    }
  }
  return best;
}

inline SectionalMax max_sectional(const ChartManifold& M, const Vec& x, int restarts = 8) {
  return max_sectional(M.at(x, 2), restarts);
}

/// Covariant gradient g^{-1} f_x of a phi-independent field.
inline Vec gradient(const ChartManifold& M, const ScalarField& f, const Vec& x) {
  return M.at(x).gradient(f.jet(x, 1).g);
}

inline double hessian_quadform(const ChartManifold& M, const ScalarField& f, const Vec& x, const Vec& xi) {
  const Jet j = f.jet(x, 2);
  return M.at(x).hessian_quadform(j.g, j.h, xi);
}

/// Point and velocity of a parametrized curve.
struct CurveSample {
  Vec x;
  Vec v;
};
using Curve = std::function<CurveSample(double)>;

/// Orthonormal frame carried along a curve by parallel transport, stored at
/// nodes and interpolated by cubic Hermite polynomials.
class TangentFrame {
 public:
  TangentFrame() = default;
  TangentFrame(std::vector<double> t, std::vector<Mat> E, std::vector<Mat> dE)
      : t_(std::move(t)), E_(std::move(E)), dE_(std::move(dE)) {}

  const std::vector<double>& times() const { return t_; }
  const std::vector<Mat>& frames() const { return E_; }
  double t_begin() const { return std::min(t_.front(), t_.back()); }
  double t_end() const { return std::max(t_.front(), t_.back()); }

  Mat at(double t) const {
    const bool inc = t_.back() >= t_.front();
    if (t < t_begin() - 1e-12 || t > t_end() + 1e-12) throw DomainError("time outside transported frame range");
    std::size_t i;
    if (inc) {
      i = static_cast<std::size_t>(std::upper_bound(t_.begin(), t_.end(), t) - t_.begin());
    } else {
      i = static_cast<std::size_t>(std::upper_bound(t_.begin(), t_.end(), t, std::greater<double>()) - t_.begin());
    }
    i = std::clamp<std::size_t>(i, 1, t_.size() - 1);
    const double t0 = t_[i - 1];
    const double h = t_[i] - t0;
    const double s = (t - t0) / h;
    const double h00 = (1 + 2 * s) * (1 - s) * (1 - s);
    const double h10 = s * (1 - s) * (1 - s);
    const double h01 = s * s * (3 - 2 * s);
    const double h11 = s * s * (s - 1);
    return h00 * E_[i - 1] + h10 * h * dE_[i - 1] + h01 * E_[i] + h11 * h * dE_[i];
  }

  /// max over nodes of |E^T g E - I| with g supplied per node.
  double orthonormality_error(const std::function<Mat(std::size_t)>& metric_at_node) const {
    double err = 0.0;
    for (std::size_t i = 0; i < E_.size(); ++i) {
      const Mat G = E_[i].transpose() * metric_at_node(i) * E_[i];
      err = std::max(err, (G - Mat::Identity(G.rows(), G.cols())).cwiseAbs().maxCoeff());
    }
    return err;
  }

 private:
  std::vector<double> t_;
  std::vector<Mat> E_;
  std::vector<Mat> dE_;
};

/// Transports the columns of X0 along the curve, solving
/// dX/dt = -Gamma_{x(t)}(x'(t), X). Returns X at every requested time.
inline std::vector<Mat> parallel_transport(const ChartManifold& M, const Curve& curve, const Mat& X0,
                                           std::span<const double> times, const AdaptiveOptions& opt = {}) {
  const int m = M.m();
  const int r = static_cast<int>(X0.cols());
  Rhs rhs = [&](const State& s, State& ds, double t) {
    const CurveSample c = curve(t);
    const Mat G = M.at(c.x).christoffel_matrix(c.v);
    Eigen::Map<const Mat> X(s.data(), m, r);
    Eigen::Map<Mat> dX(ds.data(), m, r);
    dX = -G * X;
  };
  State s0(X0.data(), X0.data() + X0.size());
  std::vector<Mat> out(times.size());
  integrate_dense(
      rhs, s0, times, [&](std::size_t i, const State& s) { out[i] = Eigen::Map<const Mat>(s.data(), m, r); }, opt);
  return out;
}

inline Vec parallel_transport(const ChartManifold& M, const Curve& curve, const Vec& xi0, double t0, double t1,
                              const AdaptiveOptions& opt = {}) {
  const double ts[2] = {t0, t1};
  return parallel_transport(M, curve, Mat(xi0), ts, opt).back().col(0);
}

/// Parallel-transported g-orthonormal frame on nodes spaced at most `node_dt`
/// apart between t0 and t1 (either direction).
inline TangentFrame transport_frame(const ChartManifold& M, const Curve& curve, double t0, double t1,
                                    double node_dt = 0.02, const AdaptiveOptions& opt = {}) {
  const int n = std::max(1, static_cast<int>(std::ceil(std::abs(t1 - t0) / node_dt)));
  std::vector<double> ts(n + 1);
  for (int i = 0; i <= n; ++i) ts[i] = t0 + (t1 - t0) * i / n;
  ts[n] = t1;
  const CurveSample c0 = curve(t0);
  const Mat E0 = M.at(c0.x).orthonormal_basis();
  std::vector<Mat> E = parallel_transport(M, curve, E0, ts, opt);
  std::vector<Mat> dE(E.size());
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const CurveSample c = curve(ts[i]);
    dE[i] = -M.at(c.x).christoffel_matrix(c.v) * E[i];
  }
  return TangentFrame(std::move(ts), std::move(E), std::move(dE));
}

}  // namespace qpl
