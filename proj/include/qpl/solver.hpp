#pragma once

// Spectral Galerkin minimization of the torus action
//   J[u] = (2 pi)^{-k} int [ (1/2) (g(u) D u, D u) + W(phi, u) ] dphi
// over truncated Fourier fields, with a logarithmic barrier keeping u inside
// the sublevel set {V < v}.

#include <chrono>
#include <cmath>
#include <deque>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qpl/conditions.hpp"
#include "qpl/connect.hpp"
#include "qpl/geometry.hpp"
#include "qpl/problem.hpp"
#include "qpl/torus.hpp"

namespace qpl {

/// Action functional on a fixed truncation and quadrature grid, with its exact
/// gradient in the packed coefficient parameters.
class ActionFunctional {
 public:
  struct Value {
    double J = 0.0;        // action without barrier
    double barrier = 0.0;  // -beta mean log(v - V(u))
    double containment = std::numeric_limits<double>::infinity();  // min over grid of v - V(u)
    Vec grad;              // gradient of J + barrier (empty when not requested)
    bool inside = true;    // every grid value lies in the chart box and in {V < v}
    Vec offending_phi;
  };

  ActionFunctional(const ProblemSpec& pr, int N, int P_eval)
      : pr_(&pr), basis_(HalfSpace::make(pr.k, N), TorusGrid(pr.k, P_eval)) {
    const int H = basis_.modes().size();
    lam_ = Vec(H);
    for (int j = 0; j < H; ++j) lam_(j) = pr.omega.dot(basis_.modes()[j]);
  }

  const SpectralBasis& basis() const { return basis_; }
  const Vec& frequencies() const { return lam_; }
  int num_modes() const { return basis_.modes().size(); }

  /// J (+ barrier with weight beta) and optionally its parameter gradient.
  /// Points outside the chart box or outside {V < v} (when beta > 0 or
  /// `require_inside`) mark the value as infeasible.
  Value evaluate(const FourierField& u, double beta, bool want_grad, bool require_inside = true) const {
    const ProblemSpec& pr = *pr_;
    const int m = pr.m;
    const Mat U = basis_.synthesize(u);
    const FourierField du = directional_derivative(u, pr.omega);
    const Mat DU = basis_.synthesize(du);
    const int npts = basis_.grid().size();
    Value out;
    Mat R(m, want_grad ? npts : 0);
    Mat Pm(m, want_grad ? npts : 0);
    double sumJ = 0.0;
    double sumB = 0.0;
    for (int p = 0; p < npts; ++p) {
      const Vec x = U.col(p);
      const Vec phi = basis_.grid().point(p);
      if (!pr.M.box().contains(x)) {
        out.inside = false;
        out.offending_phi = phi;
        return out;
      }
      const Jet jv = pr.dom.V.jet(x, 1);
      const double margin = pr.dom.v - jv.v;
      out.containment = std::min(out.containment, margin);
      if (!(margin > 0.0) && (require_inside || beta > 0.0)) {
        out.inside = false;
        out.offending_phi = phi;
        return out;
      }
      const PointGeometry pg = pr.M.at(x);
      const Vec d = DU.col(p);
      const Jet jw = pr.W.jet(phi, x, 1);
      sumJ += 0.5 * pg.norm2(d) + jw.v;
      if (beta > 0.0) sumB -= beta * std::log(margin);
      if (want_grad) {
        Vec r = pg.gee(d, d) + jw.g;
        if (beta > 0.0) r += (beta / margin) * jv.g;
        R.col(p) = r;
        Pm.col(p) = pg.g * d;
      }
    }
    out.J = sumJ / npts;
    out.barrier = sumB / npts;
    if (want_grad) {
      const Mat& C = basis_.cos_table();
      const Mat& S = basis_.sin_table();
      const Vec w = basis_.weights() / static_cast<double>(npts);
      const Mat ga = (R * C.transpose() - (Pm * S.transpose()) * lam_.asDiagonal()) * w.asDiagonal();
      const Mat gb = (-R * S.transpose() - (Pm * C.transpose()) * lam_.asDiagonal()) * w.asDiagonal();
      FourierField gf(u.modes_ptr(), m);
      gf.re() = ga;
      gf.im() = gb;
      gf.im().col(0).setZero();
      out.grad = gf.parameters();
    }
    return out;
  }

  /// Diagonal of the flat quadratic part, used as L-BFGS preconditioner.
  Vec preconditioner_diagonal(const FourierField& shape) const {
    FourierField d(shape.modes_ptr(), shape.m());
    for (int j = 0; j < num_modes(); ++j) {
      const double w = j == 0 ? 1.0 : 2.0;
      d.re().col(j).setConstant(w * (1.0 + lam_(j) * lam_(j)));
      d.im().col(j).setConstant(w * (1.0 + lam_(j) * lam_(j)));
    }
    return d.parameters();
  }

 private:
  const ProblemSpec* pr_;
  SpectralBasis basis_;
  Vec lam_;
};

/// Quadrature of the action on `grid`; DomainError when u leaves the chart box.
inline double functional_J(const ProblemSpec& pr, const FourierField& u, const TorusGrid& grid) {
  ActionFunctional F(pr, u.N(), grid.P());
  const auto v = F.evaluate(u, 0.0, false, false);
  if (!v.inside) {
    std::string phi;
    for (Eigen::Index i = 0; i < v.offending_phi.size(); ++i) phi += (i ? "," : "") + std::to_string(v.offending_phi(i));
    throw DomainError("field leaves the chart box at phi = (" + phi + ")");
  }
  return v.J;
}

/// Gradient of functional_J in the packed coefficient parameters, evaluated
/// on a grid padded to twice the given points per axis.
inline Vec gradient_J(const ProblemSpec& pr, const FourierField& u, const TorusGrid& grid) {
  if (grid.P() < 2 * u.N() + 2)
    throw BandwidthError("grid P = " + std::to_string(grid.P()) + " too small for truncation N = " +
                         std::to_string(u.N()) + "; increase P");
  ActionFunctional F(pr, u.N(), 2 * grid.P());
  const auto v = F.evaluate(u, 0.0, true, false);
  if (!v.inside) throw DomainError("field leaves the chart box");
  return v.grad;
}

inline FourierField gradient_field(const ProblemSpec& pr, const FourierField& u, const TorusGrid& grid) {
  return u.with_parameters(gradient_J(pr, u, grid));
}

struct InitialGuess {
  FourierField u;
  Vec x0;
  bool fallback = false;  // barycenter used: no interior near-critical point
};

/// Constant field at the interior sample point minimizing |grad Wbar|_g,
/// Wbar being the torus average of W.
inline InitialGuess initial_guess(const ProblemSpec& pr, const DomainSample& ds, int N) {
  if (ds.interior.empty()) throw DomainError("empty sublevel-set sample: no initial guess");
  const TorusGrid grid(pr.k, std::max(pr.config.phi_grid, 2 * N + 2));
  double best = std::numeric_limits<double>::infinity();
  std::size_t arg = 0;
  for (std::size_t i = 0; i < ds.interior.size(); ++i) {
    const Vec& x = ds.interior[i];
    Vec gbar = Vec::Zero(pr.m);
    for (int p = 0; p < grid.size(); ++p) gbar += pr.W.jet(grid.point(p), x, 1).g;
    gbar /= grid.size();
    const double n = std::sqrt(gbar.dot(pr.M.at(x).gradient(gbar)));
    if (n < best) {
      best = n;
      arg = i;
    }
  }
  InitialGuess g;
  g.fallback = ds.interior_on_rim[arg];
  g.x0 = g.fallback ? ds.barycenter : ds.interior[arg];
  g.u = FourierField::constant(pr.k, N, g.x0);
  return g;
}

inline InitialGuess initial_guess(const ProblemSpec& pr) {
  return initial_guess(pr, sample_domain(pr.M, pr.dom), pr.config.N);
}

enum class SolveStatus { kConverged, kMaxIterations, kLineSearchFailure, kInfeasibleStart };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::kConverged: return "converged";
    case SolveStatus::kMaxIterations: return "max_iterations";
    case SolveStatus::kLineSearchFailure: return "line_search_failure";
    case SolveStatus::kInfeasibleStart: return "infeasible_start";
  }
  return "?";
}

struct SolveReport {
  SolveStatus status = SolveStatus::kMaxIterations;
  double J = 0.0;
  double grad_norm = std::numeric_limits<double>::infinity();  // unbarriered, max norm
  int iterations = 0;
  int evaluations = 0;
  FourierField u;
  double containment = 0.0;
  double tail_ratio = 0.0;
  bool resolved = false;
  Vec x0;
  bool fallback_guess = false;
  int N = 0;
  int P = 0;
  std::vector<std::pair<double, double>> history;  // (beta, objective) per accepted iterate
  std::vector<std::string> warnings;
  double seconds = 0.0;

  bool converged() const { return status == SolveStatus::kConverged; }
};

namespace solver_detail {

// One barrier stage of preconditioned L-BFGS with Armijo backtracking.
struct Lbfgs {
  const ActionFunctional& F;
  const RunConfig& cfg;
  Vec Dinv;
  std::deque<std::pair<Vec, Vec>> mem;

  double objective(const ActionFunctional::Value& v) const { return v.J + v.barrier; }

  Vec direction(const Vec& g) const {
    Vec q = g;
    std::vector<double> alpha(mem.size());
    for (int i = static_cast<int>(mem.size()) - 1; i >= 0; --i) {
      const auto& [s, y] = mem[i];
      alpha[i] = s.dot(q) / y.dot(s);
      q -= alpha[i] * y;
    }
    double gamma = 1.0;
    if (!mem.empty()) {
      const auto& [s, y] = mem.back();
      gamma = s.dot(y) / y.dot(Dinv.cwiseProduct(y));
    }
    Vec r = gamma * Dinv.cwiseProduct(q);
    for (std::size_t i = 0; i < mem.size(); ++i) {
      const auto& [s, y] = mem[i];
      const double b = y.dot(r) / y.dot(s);
      r += (alpha[i] - b) * s;
    }
    return -r;
  }

  // Returns the status when the stage ends; `tol` applies to the max norm of
  // the stage gradient.
  SolveStatus run(FourierField& u, double beta, double tol, SolveReport& rep) {
    Vec x = u.parameters();
    ActionFunctional::Value cur = F.evaluate(u, beta, true);
    ++rep.evaluations;
    if (!cur.inside) return SolveStatus::kInfeasibleStart;
    while (true) {
      if (cur.grad.cwiseAbs().maxCoeff() <= tol) return SolveStatus::kConverged;
      if (rep.iterations >= cfg.max_iter) return SolveStatus::kMaxIterations;
      Vec d = direction(cur.grad);
      double slope = cur.grad.dot(d);
      if (!(slope < 0.0)) {
        mem.clear();
        d = -Dinv.cwiseProduct(cur.grad);
        slope = cur.grad.dot(d);
      }
      const double f0 = objective(cur);
      double alpha = 1.0;
      bool accepted = false;
      ActionFunctional::Value trial;
      Vec xt;
      for (int b = 0; b < cfg.max_backtracks; ++b) {
        xt = x + alpha * d;
        trial = F.evaluate(u.with_parameters(xt), beta, true);
        ++rep.evaluations;
        if (trial.inside) {
          const double f1 = objective(trial);
          if (f1 <= f0 + cfg.armijo_c1 * alpha * slope) {
            accepted = true;
            break;
          }
          // At roundoff level the Armijo decrease is not resolvable; accept a
          // step that keeps the objective within 1e-14 and lowers the gradient.
          if (f1 <= f0 + 1e-14 * (1.0 + std::abs(f0)) &&
              trial.grad.cwiseAbs().maxCoeff() < cur.grad.cwiseAbs().maxCoeff()) {
            accepted = true;
            break;
          }
        }
        alpha *= cfg.backtrack;
      }
      if (!accepted) {
        if (!mem.empty()) {
          mem.clear();
          continue;
        }
        return SolveStatus::kLineSearchFailure;
      }
      const Vec s = xt - x;
      const Vec y = trial.grad - cur.grad;
      if (s.dot(y) > 1e-16 * s.norm() * y.norm()) {
        mem.emplace_back(s, y);
        if (static_cast<int>(mem.size()) > cfg.lbfgs_memory) mem.pop_front();
      }
      x = xt;
      cur = trial;
      u = u.with_parameters(x);
      ++rep.iterations;
      rep.history.emplace_back(beta, objective(cur));
    }
  }
};

}  // namespace solver_detail

/// Minimizes J from `start` (or from the averaged-force initial guess).
inline SolveReport minimize(const ProblemSpec& pr, const RunConfig& cfg,
                            const std::optional<FourierField>& start = std::nullopt) {
  const auto t0 = std::chrono::steady_clock::now();
  SolveReport rep;
  rep.N = cfg.N;
  rep.P = cfg.grid_points();
  if (rep.P < 2 * cfg.N + 2)
    throw BandwidthError("grid P = " + std::to_string(rep.P) + " is below 2N+2 = " + std::to_string(2 * cfg.N + 2));
  FourierField u;
  if (start) {
    u = *start;
    rep.x0 = u.re().col(0);
  } else {
    const InitialGuess g = initial_guess(pr, sample_domain(pr.M, pr.dom), cfg.N);
    u = g.u;
    rep.x0 = g.x0;
    rep.fallback_guess = g.fallback;
    if (g.fallback) rep.warnings.push_back("no interior near-critical point of the averaged force; barycenter used");
  }
  const ActionFunctional F(pr, cfg.N, 2 * rep.P);
  solver_detail::Lbfgs opt{F, cfg, F.preconditioner_diagonal(u).cwiseInverse(), {}};
  const auto first = F.evaluate(u, cfg.beta0, false);
  if (!first.inside) {
    rep.status = SolveStatus::kInfeasibleStart;
    rep.u = u;
    rep.warnings.push_back("initial guess is outside the sublevel set or the chart box");
    return rep;
  }
  SolveStatus st = SolveStatus::kConverged;
  for (double beta = cfg.beta0; beta > cfg.beta_min && st == SolveStatus::kConverged; beta *= cfg.beta_factor) {
    opt.mem.clear();
    st = opt.run(u, beta, std::max(cfg.g_tol, beta), rep);
    if (st == SolveStatus::kLineSearchFailure) st = SolveStatus::kConverged;  // next stage continues
  }
  if (st == SolveStatus::kConverged) {
    opt.mem.clear();
    st = opt.run(u, 0.0, cfg.g_tol, rep);
  }
  const auto fin = F.evaluate(u, 0.0, true);
  ++rep.evaluations;
  rep.u = u;
  rep.J = fin.J;
  rep.grad_norm = fin.inside ? fin.grad.cwiseAbs().maxCoeff() : std::numeric_limits<double>::infinity();
  rep.containment = fin.containment;
  rep.tail_ratio = u.tail_ratio();
  rep.resolved = rep.tail_ratio < cfg.tail_max;
  if (st == SolveStatus::kConverged && !(rep.grad_norm <= cfg.g_tol && rep.containment > 0.0))
    st = SolveStatus::kLineSearchFailure;
  rep.status = st;
  if (!rep.resolved)
    rep.warnings.push_back("last-shell energy ratio " + std::to_string(rep.tail_ratio) + " exceeds resolution threshold");
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

inline SolveReport minimize(const ProblemSpec& pr) { return minimize(pr, pr.config); }

/// s -> J[chi(s, u1(.), u2(.))] with chi applied pointwise on the grid and
/// D_omega taken by central differences along the line through each node.
inline std::vector<double> connecting_profile(const ProblemSpec& pr, const FourierField& u1, const FourierField& u2,
                                              const TorusGrid& grid, std::span<const double> s_grid,
                                              double dt = 1e-4) {
  std::vector<double> J(s_grid.size(), 0.0);
  const Vec& om = pr.omega.entries();
  for (int p = 0; p < grid.size(); ++p) {
    const Vec phi = grid.point(p);
    const CurvePath c0 = conformal_connect(pr.M, pr.dom.V, pr.dom.v, eval(u1, phi), eval(u2, phi)).path;
    const CurvePath cp =
        conformal_connect(pr.M, pr.dom.V, pr.dom.v, eval(u1, Vec(phi + dt * om)), eval(u2, Vec(phi + dt * om))).path;
    const CurvePath cm =
        conformal_connect(pr.M, pr.dom.V, pr.dom.v, eval(u1, Vec(phi - dt * om)), eval(u2, Vec(phi - dt * om))).path;
    for (std::size_t i = 0; i < s_grid.size(); ++i) {
      const Vec x = c0.point(s_grid[i]);
      const Vec d = (cp.point(s_grid[i]) - cm.point(s_grid[i])) / (2 * dt);
      J[i] += 0.5 * pr.M.at(x).norm2(d) + pr.W.value(phi, x);
    }
  }
  for (double& j : J) j /= grid.size();
  return J;
}

}  // namespace qpl
