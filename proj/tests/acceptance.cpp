// Acceptance checks: one PASS/FAIL line per criterion.
//   acceptance                 run all criteria
//   acceptance --criterion N   run criterion N only

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>

#include "test_support.hpp"

using namespace qpl;
using namespace qpl::testing;

namespace {

const std::string kProblems = QPL_PROBLEMS_DIR;
const std::string kCli = QPL_CLI_PATH;

struct Outcome {
  bool pass;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v) {
  std::ostringstream o;
  o << std::setprecision(6) << v;
  return o.str();
}

FourierField random_field(int k, int m, int N, double scale, Rng& rng) {
  FourierField f(k, m, N);
  Vec p = f.parameters();
  for (Eigen::Index i = 0; i < p.size(); ++i) p(i) = scale * rng.uniform(-1, 1);
  return f.with_parameters(p);
}

Outcome criterion1() {
  const auto t0 = std::chrono::steady_clock::now();
  const ProblemSpec pr = load_problem(kProblems + "/linear_flat.qp");
  RunConfig cfg = pr.config;
  cfg.N = 4;
  cfg.P = 16;
  const SolveReport rep = minimize(pr, cfg);
  const double err = rep.u.max_coefficient_distance(linear_flat_exact(4));
  const double t = seconds_since(t0);
  return {rep.converged() && err <= 1e-8 && t < 10.0,
          "benchmark solve: status " + std::string(to_string(rep.status)) + ", max coefficient error " + fmt(err) +
              " (<= 1e-8), " + fmt(t) + " s (< 10 s)"};
}

Outcome criterion2() {
  ProblemSpec pr = load_problem(kProblems + "/linear_flat.qp");
  pr.dom.S = 48;
  const ConditionReport rep = check_conditions(pr);
  const auto* c2 = rep.find("C2_curvature");
  const auto* c1 = rep.find("C1");
  const auto* tb = rep.find("theorem1_boundary");
  const bool ok = c2 && c1 && tb && std::abs(c2->margin - 0.5) <= 1e-4 && std::abs(c1->margin - 2.0) <= 1e-12 &&
                  c1->argmin.norm() <= 1e-12 && tb->margin >= 0.63;
  return {ok, "benchmark margins at S = 48: C2 " + fmt(c2->margin) + " (0.5 +- 1e-4), C1 " + fmt(c1->margin) +
                  " at |x| = " + fmt(c1->argmin.norm()) + " (2 at 0), theorem-1 boundary " + fmt(tb->margin) +
                  " (>= 0.63)"};
}

Outcome criterion3() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  Rng rng(2024);
  for (const char* name : {"linear_flat", "sphere_pole"}) {
    const ProblemSpec pr = load_problem(kProblems + "/" + name + ".qp");
    const double scale = std::string(name) == "sphere_pole" ? 0.002 : 0.01;
    const TorusGrid grid(pr.k, 10);
    const TorusGrid padded(pr.k, 20);
    for (int trial = 0; trial < 20; ++trial) {
      const FourierField u = random_field(pr.k, pr.m, 4, scale, rng);
      const Vec g = gradient_J(pr, u, grid);
      const Vec p = u.parameters();
      Vec fd(p.size());
      const double h = 1e-6;
      for (Eigen::Index i = 0; i < p.size(); ++i) {
        Vec a = p, b = p;
        a(i) += h;
        b(i) -= h;
        fd(i) = (functional_J(pr, u.with_parameters(a), padded) - functional_J(pr, u.with_parameters(b), padded)) /
                (2 * h);
      }
      worst = std::max(worst, (g - fd).cwiseAbs().maxCoeff() / g.cwiseAbs().maxCoeff());
    }
  }
  const double t = seconds_since(t0);
  return {worst <= 1e-6 && t < 30.0, "gradient vs central differences on 2 x 20 fields: max relative error " +
                                         fmt(worst) + " (<= 1e-6), " + fmt(t) + " s (< 30 s)"};
}

Outcome criterion4() {
  Rng rng(44);
  const auto flat = ChartManifold::flat(2, square_box(2, 3));
  const auto sphere = sphere_model(2, 3);
  const auto disk = poincare_model();
  double ef = 0, es = 0, ep = 0;
  for (int i = 0; i < 100; ++i) {
    const Vec a = rng.normal_vector(2), b = rng.normal_vector(2);
    ef = std::max(ef, std::abs(sectional_curvature(flat, rng.uniform_vector(2, -3, 3), a, b)));
    es = std::max(es, std::abs(sectional_curvature(sphere, rng.uniform_vector(2, -3, 3), a, b) - 1.0));
    Vec x;
    do {
      x = rng.uniform_vector(2, -0.7, 0.7);
    } while (x.norm() > 0.7);
    ep = std::max(ep, std::abs(sectional_curvature(disk, x, a, b) + 1.0));
  }
  return {ef <= 1e-12 && es <= 1e-8 && ep <= 1e-8, "sectional curvature errors: flat " + fmt(ef) +
                                                       " (<= 1e-12), sphere " + fmt(es) + " (<= 1e-8), disk " +
                                                       fmt(ep) + " (<= 1e-8)"};
}

Outcome criterion5() {
  double worst = 0.0;
  Rng rng(55);
  const auto sphere = sphere_model(2, 3);
  const auto disk = poincare_model();
  const Curve on_sphere = [](double t) {
    return CurveSample{Vec{{0.6 * std::cos(t), 0.5 * std::sin(1.7 * t)}},
                       Vec{{-0.6 * std::sin(t), 0.85 * std::cos(1.7 * t)}}};
  };
  const Curve on_disk = [](double t) {
    return CurveSample{Vec{{0.4 * std::cos(t), 0.3 * std::sin(1.3 * t)}},
                       Vec{{-0.4 * std::sin(t), 0.39 * std::cos(1.3 * t)}}};
  };
  std::vector<double> times;
  for (int i = 0; i <= 100; ++i) times.push_back(0.1 * i);
  for (const auto& [M, c] : {std::pair{&sphere, on_sphere}, std::pair{&disk, on_disk}}) {
    const Mat X0 = Mat(Vec(rng.normal_vector(2))).replicate(1, 1);
    Mat X(2, 3);
    X.col(0) = rng.normal_vector(2);
    X.col(1) = rng.normal_vector(2);
    X.col(2) = rng.normal_vector(2);
    const auto Xs = parallel_transport(*M, c, X, times);
    const Mat G0 = X.transpose() * M->metric(c(0).x) * X;
    for (std::size_t i = 1; i < times.size(); ++i) {
      const Mat G = Xs[i].transpose() * M->metric(c(times[i]).x) * Xs[i];
      worst = std::max(worst, (G - G0).cwiseAbs().maxCoeff() / times[i]);
    }
  }
  return {worst <= 1e-9, "parallel transport over length 10: max inner-product drift per unit time " + fmt(worst) +
                             " (<= 1e-9)"};
}

Outcome criterion6() {
  Rng rng(66);
  double seg = 0, arc = 0, defect = 0, kappa_min = std::numeric_limits<double>::infinity();
  {
    const auto M = ChartManifold::flat(2, square_box(2, 2));
    const auto V = ScalarField::parse("1", 0, 2);
    for (int i = 0; i < 10; ++i) {
      const Vec x = rng.uniform_vector(2, -1.5, 1.5), y = rng.uniform_vector(2, -1.5, 1.5);
      const auto r = conformal_connect(M, V, 2.0, x, y);
      defect = std::max(defect, r.defect);
      for (int j = 0; j <= 20; ++j) seg = std::max(seg, (r.path.point(j / 20.0) - (x + j / 20.0 * (y - x))).norm());
    }
  }
  {
    const auto M = ChartManifold::flat(2, square_box(2, 0.95));
    const auto V = ScalarField::parse("log(4) - 2*log(1 - x1^2 - x2^2)", 0, 2);
    const double v = std::log(4.0) - 2 * std::log(1 - 0.8 * 0.8);
    for (int i = 0; i < 10; ++i) {
      Vec x, y;
      do {
        x = rng.uniform_vector(2, -0.7, 0.7);
        y = rng.uniform_vector(2, -0.7, 0.7);
      } while (x.norm() > 0.7 || y.norm() > 0.7 || std::abs(x(0) * y(1) - x(1) * y(0)) < 0.05);
      const auto r = conformal_connect(M, V, v, x, y);
      defect = std::max(defect, r.defect);
      // Hyperbolic geodesic: circle through x and y orthogonal to the unit circle.
      Mat A(2, 2);
      A.row(0) = 2 * x.transpose();
      A.row(1) = 2 * y.transpose();
      const Vec c = A.partialPivLu().solve(Vec{{x.squaredNorm() + 1, y.squaredNorm() + 1}});
      const double rad = std::sqrt(c.squaredNorm() - 1);
      for (int j = 0; j <= 50; ++j) arc = std::max(arc, std::abs((r.path.point(j / 50.0) - c).norm() - rad));
    }
  }
  {
    const ProblemSpec pr = load_problem(kProblems + "/linear_flat.qp");
    const std::vector<double> s_grid{0.0, 0.25, 0.5, 0.75, 1.0};
    const std::vector<double> t_grid{0.0, 1.3};
    for (int pair = 0; pair < 20; ++pair) {
      Trajectory tr[2];
      for (auto& x : tr) {
        const Vec a = rng.uniform_vector(2, -0.3, 0.3), b = rng.uniform_vector(2, -0.3, 0.3);
        const double w = rng.uniform(0.5, 2.0), p = rng.uniform(0, 6.28);
        x = [a, b, w, p](double t) {
          return CurveSample{a + b * std::cos(w * t + p), -w * b * std::sin(w * t + p)};
        };
      }
      kappa_min =
          std::min(kappa_min, convexity_margin(pr, tr[0], tr[1], s_grid, t_grid, rng.uniform_vector(2, 0, 6.28)));
    }
  }
  return {seg <= 1e-10 && arc <= 1e-6 && defect <= 1e-8 && kappa_min > 0.0,
          "connecting map: segment deviation " + fmt(seg) + " (<= 1e-10), arc deviation " + fmt(arc) +
              " (<= 1e-6), defect " + fmt(defect) + " (<= 1e-8), min convexity margin over 20 pairs " +
              fmt(kappa_min) + " (> 0)"};
}

Outcome criterion7() {
  const ProblemSpec pr = load_problem(kProblems + "/linear_flat.qp");
  const SolveReport rep = minimize(pr);
  const LineResidual line = line_residual(pr, rep.u, Vec::Zero(2), 100, 0.01);
  const LineResidual twice = line_residual(pr, rep.u, Vec::Zero(2), 200, 0.01);
  const TorusResidual tr = torus_residual(pr, rep.u, TorusGrid(2, 2 * pr.config.grid_points()));
  const double change = std::abs(twice.sup_speed - line.sup_speed);
  return {rep.converged() && line.sup <= 1e-8 && tr.l2 <= 1e-8 && line.sup_speed <= 0.16 && change <= 1e-3,
          "benchmark residuals: line sup " + fmt(line.sup) + " (<= 1e-8), torus L2 " + fmt(tr.l2) +
              " (<= 1e-8), sup speed " + fmt(line.sup_speed) + " (<= 0.16), change under T-doubling " + fmt(change) +
              " (<= 1e-3)"};
}

Outcome criterion8() {
  const ProblemSpec pr = load_problem(kProblems + "/linear_flat.qp");
  const SolveReport sol = minimize(pr);
  const auto vs = make_variational_system(pr, sol.u, Vec::Zero(2), 0, 50);
  const DichotomyReport rep = estimate_exponents(vs, 50, 0.1);
  const FDerivativeReport f = check_F_derivative(vs, 8, 20, 0.01);
  const DichotomyReport free =
      estimate_exponents([](double) { return Mat::Zero(2, 2); }, 2, 0, 50, 0.1);
  bool near = rep.exponents.size() == 4;
  double dev = 0;
  const double expect[4] = {1, 1, -1, -1};
  for (std::size_t i = 0; i < rep.exponents.size() && i < 4; ++i) dev = std::max(dev, std::abs(rep.exponents[i] - expect[i]));
  near = near && dev <= 0.05;
  return {near && rep.unstable == 2 && rep.stable == 2 && f.alpha > 0.0 &&
              free.verdict == DichotomyVerdict::kNotDichotomic,
          "benchmark exponents off {1,1,-1,-1} by " + fmt(dev) + " (<= 0.05), dims (" + std::to_string(rep.unstable) +
              "," + std::to_string(rep.stable) + "), alpha " + fmt(f.alpha) + " (> 0), A = 0 verdict " +
              to_string(free.verdict)};
}

Outcome criterion9() {
  const ProblemSpec pr = load_problem(kProblems + "/linear_flat.qp");
  const UniquenessProbe p = uniqueness_probe(pr, pr.config, 5);
  return {p.converged == 5 && !p.inconclusive && p.max_coefficient_distance <= 1e-8,
          "uniqueness probe: " + std::to_string(p.converged) + "/5 converged, max coefficient distance " +
              fmt(p.max_coefficient_distance) + " (<= 1e-8)"};
}

Outcome criterion10() {
  const auto dir = std::filesystem::temp_directory_path() / "qpl_acceptance_10";
  std::filesystem::create_directories(dir);
  const std::string out = (dir / "report.json").string();
  const std::string cmd = kCli + " check " + kProblems + "/concave_fail.qp > " + out + " 2> /dev/null";
  const int status = std::system(cmd.c_str());
  const int code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  const Json rep = Json::parse(read_file(out));
  double margin = std::numeric_limits<double>::quiet_NaN();
  std::string verdict;
  for (const auto& f : rep["conditions"]["fragments"])
    if (f["name"] == "theorem1_interior") {
      margin = f["margin"].get<double>();
      verdict = f["verdict"].get<std::string>();
    }
  return {code == 2 && verdict == "fail" && margin < 0.0, "check on concave force: exit " + std::to_string(code) +
                                                              " (2), theorem-1 verdict " + verdict + ", margin " +
                                                              fmt(margin) + " (< 0)"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::function<Outcome()>> criteria = {criterion1, criterion2, criterion3, criterion4,
                                                          criterion5, criterion6, criterion7, criterion8,
                                                          criterion9, criterion10};
  int only = 0;
  for (int i = 1; i < argc; ++i) {
    if (std::string(argv[i]) == "--criterion" && i + 1 < argc) {
      only = std::atoi(argv[++i]);
    } else {
      std::cerr << "usage: acceptance [--criterion N]\n";
      return 1;
    }
  }
  if (only < 0 || only > static_cast<int>(criteria.size())) {
    std::cerr << "criterion must be between 1 and " << criteria.size() << '\n';
    return 1;
  }
  bool all = true;
  for (int c = 1; c <= static_cast<int>(criteria.size()); ++c) {
    if (only != 0 && c != only) continue;
    Outcome o;
    try {
      o = criteria[c - 1]();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    std::cout << "criterion " << c << ": " << (o.pass ? "PASS" : "FAIL") << "  " << o.detail << std::endl;
    all = all && o.pass;
  }
  return all ? 0 : 1;
}
