#pragma once

// System in variations along a solution x(t) = u(phi0 + t omega), written in a
// parallel-transported orthonormal frame as y'' = A(t) y; the derivative test
// for the quadratic form F and discrete-QR exponent estimates.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qpl/conditions.hpp"
#include "qpl/geometry.hpp"
#include "qpl/problem.hpp"
#include "qpl/random.hpp"
#include "qpl/torus.hpp"

namespace qpl {

/// r(s) = 1 for s <= B, B^2/s^2 beyond.
inline double cutoff_r(double s, double B) { return s <= B ? 1.0 : B * B / (s * s); }

/// Constants of the cutoff construction sampled over T^k x closure of Omega.
struct CutoffConstants {
  double C = 0.0;       // max of |grad V|, |grad W|, |H_W| (metric norms)
  double alpha2 = 0.0;  // min eigenvalue of [[1, -b/2], [-b/2, q]] over points and unit directions
  double B = 2.0;
  bool admissible = false;  // alpha2 > 0 and alpha2 B^2 >= 1 + C(1 + 3C/2)
};

inline CutoffConstants cutoff_constants(const ProblemSpec& pr, const DomainSample& ds, int directions = 64) {
  CutoffConstants out;
  const int m = pr.m;
  const std::vector<Vec> phis = cond_detail::torus_nodes(pr.k, pr.config.phi_grid);
  std::vector<Vec> dirs;  // unit vectors in orthonormal coordinates
  if (m == 1) {
    dirs.push_back(Vec::Ones(1));
  } else if (m == 2) {
    for (int i = 0; i < directions; ++i) {
      const double a = std::numbers::pi * i / directions;
      dirs.push_back(Vec{{std::cos(a), std::sin(a)}});
    }
  } else {
    for (int i = 0; i < m; ++i) dirs.push_back(Vec::Unit(m, i));
    Rng rng(pr.config.seed);
    for (int i = 0; i < directions; ++i) dirs.push_back(rng.normal_vector(m).normalized());
  }
  out.alpha2 = std::numeric_limits<double>::infinity();
  for (const Vec& x : ds.closure()) {
    const PointGeometry pg = pr.M.at(x, 2);
    const Jet jv = pr.dom.V.jet(x, 2);
    out.C = std::max(out.C, std::sqrt(jv.g.dot(pg.gradient(jv.g))));
    for (const Vec& phi : phis) {
      const Jet jw = pr.W.jet(phi, x, 2);
      out.C = std::max(out.C, std::sqrt(jw.g.dot(pg.gradient(jw.g))));
      const Mat L = pg.llt.matrixL();
      const Mat Linv = L.triangularView<Eigen::Lower>().solve(Mat::Identity(m, m));
      Eigen::SelfAdjointEigenSolver<Mat> es(Linv * pg.hessian_matrix(jw.g, jw.h) * Linv.transpose(),
                                            Eigen::EigenvaluesOnly);
      out.C = std::max(out.C, es.eigenvalues().cwiseAbs().maxCoeff());
    }
    const Mat E = pg.orthonormal_basis();
    const Mat HV = pg.hessian_matrix(jv.g, jv.h);
    const double ks = max_sectional(pg, pr.config.restarts).value;
    for (const Vec& d : dirs) {
      const Vec eps = E * d;
      const double b = std::abs(jv.g.dot(eps));
      const double q = 0.5 * eps.dot(HV * eps) - ks;
      const double tr = 1.0 + q;
      const double det = q - 0.25 * b * b;
      const double lmin = 0.5 * (tr - std::sqrt(std::max(0.0, tr * tr - 4.0 * det)));
      out.alpha2 = std::min(out.alpha2, lmin);
    }
  }
  if (out.alpha2 > 0.0) {
    out.B = std::max(2.0, std::sqrt((1.0 + out.C * (1.0 + 1.5 * out.C)) / out.alpha2));
    out.admissible = out.alpha2 * out.B * out.B >= 1.0 + out.C * (1.0 + 1.5 * out.C) - 1e-12;
  }
  return out;
}

/// Trajectory, transported frame and cutoff of the system in variations.
struct VariationalSystem {
  const ProblemSpec* pr = nullptr;
  FourierField u;
  Vec phi0;
  TangentFrame frame;
  bool use_cutoff = false;  // false: r = 1
  double B = 2.0;
  double C = 0.0;

  CurveSample curve(double t) const {
    const LineSample s = line_sample(u, phi0, pr->omega, t);
    return {s.value, s.first};
  }
  Vec phi(double t) const { return phi0 + t * pr->omega.entries(); }
  double r(double speed) const { return use_cutoff ? cutoff_r(speed, B) : 1.0; }
};

/// Builds the system on [t0, t1], re-transporting with a finer node spacing
/// when the interpolated frame drifts from orthonormality by more than 1e-6.
inline VariationalSystem make_variational_system(const ProblemSpec& pr, const FourierField& u, const Vec& phi0,
                                                 double t0, double t1, double frame_dt = 0.02,
                                                 bool use_cutoff = false, double B = 2.0, double C = 0.0) {
  VariationalSystem vs;
  vs.pr = &pr;
  vs.u = u;
  vs.phi0 = phi0;
  vs.use_cutoff = use_cutoff;
  vs.B = B;
  vs.C = C;
  Curve c = [&vs](double t) { return vs.curve(t); };
  double dt = frame_dt;
  for (int attempt = 0; attempt < 4; ++attempt, dt *= 0.5) {
    vs.frame = transport_frame(pr.M, c, t0, t1, dt);
    double err = vs.frame.orthonormality_error(
        [&](std::size_t i) { return pr.M.metric(vs.curve(vs.frame.times()[i]).x); });
    for (std::size_t i = 0; i + 1 < vs.frame.times().size(); ++i) {
      const double tm = 0.5 * (vs.frame.times()[i] + vs.frame.times()[i + 1]);
      const Mat E = vs.frame.at(tm);
      const Mat G = E.transpose() * pr.M.metric(vs.curve(tm).x) * E;
      err = std::max(err, (G - Mat::Identity(pr.m, pr.m)).cwiseAbs().maxCoeff());
    }
    if (err <= 1e-6) return vs;
  }
  throw GeometryError("transported frame drifts from orthonormality by more than 1e-6");
}

/// A(t) with entries <H_W e_b - r R(xi, e_b) xi, e_a>, R(xi, e)xi written in
/// the standard convention as R(e, xi)xi.
inline Mat build_A(const VariationalSystem& vs, double t) {
  const ProblemSpec& pr = *vs.pr;
  const CurveSample c = vs.curve(t);
  const Mat E = vs.frame.at(t);
  const PointGeometry pg = pr.M.at(c.x, 2);
  const Jet jw = pr.W.jet(vs.phi(t), c.x, 2);
  Mat A = E.transpose() * pg.hessian_matrix(jw.g, jw.h) * E;
  const double r = vs.r(std::sqrt(pg.norm2(c.v)));
  if (r != 0.0 && c.v.norm() > 0.0) {
    Mat Rm(pr.m, pr.m);
    for (int b = 0; b < pr.m; ++b) Rm.col(b) = pg.curvature(E.col(b), c.v, c.v);
    A -= r * (E.transpose() * pg.g * Rm);
  }
  return A;
}

using MatrixFunction = std::function<Mat(double)>;

namespace dich_detail {

// z' = [[0, I], [A, 0]] z applied to the columns of Z.
inline Mat block_rhs(const Mat& A, const Mat& Z) {
  const int m = static_cast<int>(A.rows());
  Mat dZ(Z.rows(), Z.cols());
  dZ.topRows(m) = Z.bottomRows(m);
  dZ.bottomRows(m) = A * Z.topRows(m);
  return dZ;
}

inline Mat rk4_step(const MatrixFunction& A, const Mat& Z, double t, double h) {
  const Mat Ah = A(t + 0.5 * h);
  const Mat k1 = block_rhs(A(t), Z);
  const Mat k2 = block_rhs(Ah, Z + 0.5 * h * k1);
  const Mat k3 = block_rhs(Ah, Z + 0.5 * h * k2);
  const Mat k4 = block_rhs(A(t + h), Z + h * k3);
  return Z + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

}  // namespace dich_detail

/// Fundamental matrix of y'' = A(t) y in first-order form from t0 to t1.
inline Mat fundamental_matrix(const MatrixFunction& A, int m, double t0, double t1, double h = 0.01) {
  const int n = std::max(1, static_cast<int>(std::ceil(std::abs(t1 - t0) / h)));
  const double step = (t1 - t0) / n;
  Mat Z = Mat::Identity(2 * m, 2 * m);
  for (int i = 0; i < n; ++i) Z = dich_detail::rk4_step(A, Z, t0 + i * step, step);
  return Z;
}

enum class DichotomyVerdict { kDichotomic, kNotDichotomic, kInconclusive };

inline const char* to_string(DichotomyVerdict v) {
  switch (v) {
    case DichotomyVerdict::kDichotomic: return "dichotomic";
    case DichotomyVerdict::kNotDichotomic: return "not_dichotomic";
    case DichotomyVerdict::kInconclusive: return "inconclusive";
  }
  return "?";
}

struct DichotomyReport {
  std::vector<double> exponents;  // descending
  int unstable = 0;
  int stable = 0;
  double gap = 0.0;           // min |exponent|
  double ci_halfwidth = 0.0;  // from the spread of block exponents
  double alpha = std::numeric_limits<double>::quiet_NaN();
  double alpha2 = std::numeric_limits<double>::quiet_NaN();
  double B = std::numeric_limits<double>::quiet_NaN();
  double C = std::numeric_limits<double>::quiet_NaN();
  double T = 0.0;
  DichotomyVerdict verdict = DichotomyVerdict::kInconclusive;
  std::vector<double> times;               // running-exponent series
  std::vector<std::vector<double>> running;
  std::vector<std::string> notes;
};

/// Discrete-QR exponents of y'' = A(t) y over [t0, t0 + dir T]. The first half
/// of the window is spin-up; exponents average over the second half, whose
/// five sub-blocks give the confidence half-width.
inline DichotomyReport estimate_exponents(const MatrixFunction& A, int m, double t0, double T, double reorth_dt,
                                          double gap_min = 0.05, int direction = 1, double h_max = 0.01) {
  DichotomyReport rep;
  rep.T = T;
  const int dim = 2 * m;
  const int n_re = std::max(10, static_cast<int>(std::lround(T / reorth_dt)));
  const double dT = T / n_re;
  const int sub = std::max(1, static_cast<int>(std::ceil(dT / h_max)));
  const double h = direction * dT / sub;
  const int spin = n_re / 2;
  constexpr int kBlocks = 5;
  std::vector<Vec> block(kBlocks, Vec::Zero(dim));
  Vec total = Vec::Zero(dim);
  Vec sum_all = Vec::Zero(dim);
  Mat Q = Mat::Identity(dim, dim);
  double t = t0;
  for (int i = 0; i < n_re; ++i) {
    for (int s = 0; s < sub; ++s) Q = dich_detail::rk4_step(A, Q, t0 + direction * (i * dT + s * dT / sub), h);
    t = t0 + direction * (i + 1) * dT;
    Eigen::HouseholderQR<Mat> qr(Q);
    const Mat R = qr.matrixQR().triangularView<Eigen::Upper>();
    Q = qr.householderQ() * Mat::Identity(dim, dim);
    Vec logs(dim);
    for (int j = 0; j < dim; ++j) logs(j) = std::log(std::abs(R(j, j)));
    sum_all += logs;
    rep.times.push_back(t);
    std::vector<double> run(dim);
    for (int j = 0; j < dim; ++j) run[j] = sum_all(j) / ((i + 1) * dT);
    rep.running.push_back(run);
    if (i >= spin) {
      total += logs;
      const int b = std::min(kBlocks - 1, (i - spin) * kBlocks / (n_re - spin));
      block[b] += logs;
    }
  }
  const double avg_T = (n_re - spin) * dT;
  Vec ex = total / avg_T;
  // Sort descending; block exponents follow the same R-diagonal slots.
  std::vector<int> order(dim);
  for (int j = 0; j < dim; ++j) order[j] = j;
  std::sort(order.begin(), order.end(), [&](int a, int b) { return ex(a) > ex(b); });
  rep.exponents.resize(dim);
  for (int j = 0; j < dim; ++j) rep.exponents[j] = ex(order[j]);
  const double block_T = avg_T / kBlocks;
  for (int j = 0; j < dim; ++j) {
    double mean = 0.0, var = 0.0;
    for (int b = 0; b < kBlocks; ++b) mean += block[b](j) / block_T;
    mean /= kBlocks;
    for (int b = 0; b < kBlocks; ++b) var += std::pow(block[b](j) / block_T - mean, 2);
    var /= (kBlocks - 1);
    rep.ci_halfwidth = std::max(rep.ci_halfwidth, 2.0 * std::sqrt(var / kBlocks));
  }
  rep.gap = std::numeric_limits<double>::infinity();
  for (double e : rep.exponents) {
    rep.gap = std::min(rep.gap, std::abs(e));
    if (e > gap_min) ++rep.unstable;
    if (e < -gap_min) ++rep.stable;
  }
  if (rep.gap < gap_min) {
    rep.verdict = DichotomyVerdict::kNotDichotomic;
    rep.notes.push_back("exponent within " + std::to_string(gap_min) + " of zero");
  } else if (rep.ci_halfwidth >= rep.gap) {
    rep.verdict = DichotomyVerdict::kInconclusive;
    rep.notes.push_back("window too short: exponent confidence half-width exceeds the gap");
  } else {
    rep.verdict = DichotomyVerdict::kDichotomic;
  }
  return rep;
}

inline DichotomyReport estimate_exponents(const VariationalSystem& vs, double T, double reorth_dt,
                                          double gap_min = 0.05, int direction = 1) {
  const double t0 = direction > 0 ? vs.frame.t_begin() : vs.frame.t_end();
  if (T > vs.frame.t_end() - vs.frame.t_begin() + 1e-9) throw DomainError("exponent window exceeds the frame range");
  return estimate_exponents([&vs](double t) { return build_A(vs, t); }, vs.pr->m, t0, T, reorth_dt, gap_min,
                            direction);
}

/// F(t, y, y') = <y', y> + (r/2) <grad V(x), xi> |y|^2 in frame coordinates.
inline double quadratic_form_F(const VariationalSystem& vs, double t, const Vec& y, const Vec& dy) {
  const CurveSample c = vs.curve(t);
  const double speed = std::sqrt(vs.pr->M.at(c.x).norm2(c.v));
  return dy.dot(y) + 0.5 * vs.r(speed) * vs.pr->dom.V.jet(c.x, 1).g.dot(c.v) * y.squaredNorm();
}

struct FDerivativeReport {
  double alpha = std::numeric_limits<double>::infinity();  // min of dF/dt / (|y|^2 + |y'|^2)
  double t_argmin = 0.0;
  int samples = 0;
  int skipped = 0;  // degenerate y = 0 nodes
};

/// Integrates `samples` random solutions of y'' = A y over [t0, t0 + T] and
/// takes the minimum ratio of the central-difference dF/dt to |y|^2 + |y'|^2.
inline FDerivativeReport check_F_derivative(const VariationalSystem& vs, int samples, double T, double dt,
                                            std::uint64_t seed = 0, const std::vector<Vec>* initial = nullptr) {
  FDerivativeReport out;
  const int m = vs.pr->m;
  const double t0 = vs.frame.t_begin();
  const int n = std::max(2, static_cast<int>(std::lround(T / dt)));
  const double h = T / n;
  const MatrixFunction A = [&vs](double t) { return build_A(vs, t); };
  Rng rng(seed);
  std::vector<Vec> starts;
  if (initial) {
    starts = *initial;
  } else {
    for (int i = 0; i < samples; ++i) starts.push_back(rng.normal_vector(2 * m));
  }
  out.samples = static_cast<int>(starts.size());
  for (const Vec& z0 : starts) {
    Mat z = z0;
    double f_prev = quadratic_form_F(vs, t0, z.topRows(m).col(0), z.bottomRows(m).col(0));
    Mat z_mid = dich_detail::rk4_step(A, z, t0, h);
    double f_mid = quadratic_form_F(vs, t0 + h, z_mid.topRows(m).col(0), z_mid.bottomRows(m).col(0));
    for (int i = 1; i < n; ++i) {
      const double t = t0 + i * h;
      const Mat z_next = dich_detail::rk4_step(A, z_mid, t, h);
      const double f_next = quadratic_form_F(vs, t + h, z_next.topRows(m).col(0), z_next.bottomRows(m).col(0));
      const double denom = z_mid.col(0).squaredNorm();
      if (denom > 0.0) {
        const double ratio = (f_next - f_prev) / (2 * h) / denom;
        if (ratio < out.alpha) {
          out.alpha = ratio;
          out.t_argmin = t;
        }
      } else {
        ++out.skipped;
      }
      f_prev = f_mid;
      f_mid = f_next;
      z_mid = z_next;
      const double norm = z_mid.norm();
      if (norm > 1e12) {
        // Linear system: rescale the state and the stored form values together.
        z_mid /= norm;
        f_prev /= norm * norm;
        f_mid /= norm * norm;
      }
    }
  }
  return out;
}

/// Full analysis along u(phi0 + t omega), t in [0, cfg.dich_T].
inline DichotomyReport analyze_dichotomy(const ProblemSpec& pr, const FourierField& u, const Vec& phi0,
                                         const DomainSample& ds) {
  const RunConfig& cfg = pr.config;
  const CutoffConstants cc = cutoff_constants(pr, ds);
  const double T = std::max(cfg.dich_T, cfg.f_T);
  const VariationalSystem vs = make_variational_system(pr, u, phi0, 0.0, T, cfg.frame_dt, false, cc.B, cc.C);
  DichotomyReport rep = estimate_exponents(vs, cfg.dich_T, cfg.reorth_dt, cfg.gap_min);
  const FDerivativeReport fd = check_F_derivative(vs, cfg.f_samples, cfg.f_T, cfg.f_dt, cfg.seed);
  rep.alpha = fd.alpha;
  rep.alpha2 = cc.alpha2;
  rep.B = cc.B;
  rep.C = cc.C;
  if (!cc.admissible) rep.notes.push_back("cutoff constant alpha2 is not positive on the sampled domain");
  if (rep.verdict == DichotomyVerdict::kDichotomic && !(fd.alpha > 0.0)) {
    rep.verdict = DichotomyVerdict::kInconclusive;
    rep.notes.push_back("exponents separated but the F-derivative test found alpha <= 0");
  }
  return rep;
}

}  // namespace qpl
