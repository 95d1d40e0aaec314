#include <gtest/gtest.h>

#include <cmath>

#include "test_support.hpp"

using namespace qpl;
using namespace qpl::testing;

namespace {

FourierField random_small_field(int N, double scale, Rng& rng) {
  FourierField f(2, 2, N);
  Vec p = f.parameters();
  for (Eigen::Index i = 0; i < p.size(); ++i) p(i) = scale * rng.uniform(-1, 1);
  return f.with_parameters(p);
}

}  // namespace

TEST(Verify, ClosedFormTorusResidualVanishes) {
  const auto pr = linear_flat();
  const auto r = torus_residual(pr, linear_flat_exact(4), TorusGrid(2, 16));
  EXPECT_LE(r.sup, 1e-8);
  EXPECT_LE(r.l2, r.sup);
  EXPECT_TRUE(r.warnings.empty());
}

TEST(Verify, ConstantSolutionHasZeroResidual) {
  auto pr = linear_flat();
  pr.W = ScalarField::parse("x1^2/2 + x2^2/2 - 0.3*x1 + 0.4*x2", 2, 2);
  const auto u = FourierField::constant(2, 4, Vec{{0.3, -0.4}});
  EXPECT_LE(torus_residual(pr, u, TorusGrid(2, 16)).sup, 1e-15);
  const auto line = line_residual(pr, u, Vec::Zero(2), 10, 0.01);
  EXPECT_LE(line.sup, 1e-15);
  EXPECT_EQ(line.sup_speed, 0.0);
}

TEST(Verify, NonSolutionHasVisibleResidual) {
  const auto pr = linear_flat();
  Rng rng(2);
  const auto r = torus_residual(pr, random_small_field(4, 0.01, rng), TorusGrid(2, 16));
  EXPECT_GT(r.l2, 1e-3);
}

TEST(Verify, ClosedFormLineResidualAndSpeed) {
  const auto pr = linear_flat();
  const auto u = linear_flat_exact(4);
  const auto line = line_residual(pr, u, Vec::Zero(2), 100, 0.01);
  EXPECT_LE(line.sup, 1e-8);
  // |dx|^2 = 0.0225 sin^2 t + (0.2 sqrt2/3)^2 cos^2(sqrt2 t); its sup over the
  // torus is sqrt(0.0225 + 0.08/9).
  const double torus_sup = std::sqrt(0.0225 + 0.08 / 9);
  EXPECT_LE(line.sup_speed, torus_sup + 1e-12);
  EXPECT_GE(line.sup_speed, torus_sup - 1e-3);
  const auto twice = line_residual(pr, u, Vec::Zero(2), 200, 0.01);
  EXPECT_LT(std::abs(twice.sup_speed - line.sup_speed), 1e-3);
}

TEST(Verify, LineResidualAtZeroMatchesTorusResidual) {
  const auto pr = sphere_pole();
  Rng rng(6);
  const auto u = random_small_field(4, 0.002, rng);
  const TorusGrid grid(2, 16);
  const auto tr = torus_residual(pr, u, grid);
  for (int p : {0, 17, 100, 255}) {
    const auto line = line_residual(pr, u, grid.point(p), 0.01, 0.01);
    EXPECT_LE((line.residuals.col(1) - tr.values.col(p)).norm(), 1e-9);
  }
}

TEST(Verify, LineLeavingChartIsDomainError) {
  const auto pr = linear_flat();
  EXPECT_THROW(line_residual(pr, FourierField::constant(2, 4, Vec{{1.6, 0}}), Vec::Zero(2), 1, 0.1), DomainError);
}

TEST(Verify, D1Examples) {
  const auto pr = linear_flat();
  const auto u = linear_flat_exact(4);
  const Vec phi0{{0.3, 1.1}};
  EXPECT_EQ(d1_distance(pr, u, u, phi0, 20, 0.01).d1_T, 0.0);
  const double eps = 0.01;
  const auto shifted = u + FourierField::constant(2, 4, Vec{{eps, 0}});
  const auto d = d1_distance(pr, u, shifted, phi0, 20, 0.01);
  EXPECT_NEAR(d.d1_T, eps * eps, 1e-15);
  EXPECT_NEAR(d.d1_2T, eps * eps, 1e-15);
  EXPECT_EQ(d.c, 1.0);
  EXPECT_EQ(d.C, 1.0);
}

TEST(Verify, D1IsAPseudometric) {
  const auto pr = sphere_pole();
  Rng rng(12);
  const Vec phi0 = Vec::Zero(2);
  for (int trial = 0; trial < 5; ++trial) {
    const auto a = random_small_field(4, 0.002, rng);
    const auto b = random_small_field(4, 0.002, rng);
    const auto c = random_small_field(4, 0.002, rng);
    const double ab = d1_distance(pr, a, b, phi0, 10, 0.01).d1_T;
    EXPECT_EQ(ab, d1_distance(pr, b, a, phi0, 10, 0.01).d1_T);
    const double bc = d1_distance(pr, b, c, phi0, 10, 0.01).d1_T;
    const double ac = d1_distance(pr, a, c, phi0, 10, 0.01).d1_T;
    EXPECT_LE(std::sqrt(ac), std::sqrt(ab) + std::sqrt(bc) + 1e-10);
  }
}

TEST(Verify, UniquenessProbeOnBenchmark) {
  const auto pr = linear_flat();
  const auto probe = uniqueness_probe(pr, pr.config, 5);
  EXPECT_EQ(probe.converged, 5);
  EXPECT_FALSE(probe.inconclusive);
  EXPECT_LE(probe.max_coefficient_distance, 1e-8);
  EXPECT_LE(probe.max_d1, 1e-12);
}

TEST(Verify, SingleTrialProbeIsZero) {
  const auto pr = linear_flat();
  const auto probe = uniqueness_probe(pr, pr.config, 1);
  EXPECT_EQ(probe.max_coefficient_distance, 0.0);
  EXPECT_EQ(probe.max_d1, 0.0);
}

TEST(Verify, ProbeFlagsFailedConditions) {
  auto pr = linear_flat();
  pr.W = ScalarField::parse("-x1^2/2 - x2^2/2 - 0.3*cos(phi1)*x1 - 0.2*sin(phi2)*x2", 2, 2);
  const auto cond = check_conditions(pr);
  ASSERT_EQ(cond.verdict(), Verdict::kFail);
  RunConfig cfg = pr.config;
  cfg.max_iter = 200;
  const auto probe = uniqueness_probe(pr, cfg, 2, &cond);
  bool flagged = false;
  for (const auto& n : probe.notes) flagged |= n == "conditions fail, uniqueness not expected";
  EXPECT_TRUE(flagged);
}

TEST(Verify, ConvergedSolveHasSmallResidual) {
  auto pr = sphere_pole(8, 0);
  const auto rep = minimize(pr);
  ASSERT_TRUE(rep.converged());
  ASSERT_TRUE(rep.resolved);
  const auto r = torus_residual(pr, rep.u, TorusGrid(2, 2 * pr.config.grid_points()));
  EXPECT_LE(r.l2, 1e3 * pr.config.g_tol);
}
