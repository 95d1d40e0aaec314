#include <gtest/gtest.h>

#include <cmath>
#include <iomanip>
#include <sstream>

#include "test_support.hpp"

using namespace qpl;
using namespace qpl::testing;

namespace {

DomainSpec domain(const std::string& V, double v, int S = 24) {
  DomainSpec d;
  d.V = ScalarField::parse(V, 0, 2);
  d.v = v;
  d.S = S;
  return d;
}

std::string num(double v) {
  std::ostringstream o;
  o << std::setprecision(17) << v;
  return o.str();
}

}  // namespace

TEST(Conditions, LambdaVExamples) {
  const auto M = ChartManifold::flat(2, square_box(2, 2));
  const Vec x{{0.3, -0.2}};
  EXPECT_NEAR(lambda_V(M, ScalarField::parse("x1^2/2 + x2^2/2", 0, 2), x), 1.0, 1e-14);
  EXPECT_NEAR(lambda_V(M, ScalarField::parse("2*x1 - x2", 0, 2), x), 0.0, 1e-14);
  EXPECT_NEAR(lambda_V(M, ScalarField::parse("(2*x1^2 + 3*x2^2)/1", 0, 2), x), 4.0, 1e-14);
  EXPECT_NEAR(lambda_V(M, ScalarField::parse("(2*x1^2 + 3*x2^2)/2", 0, 2), x), 2.0, 1e-14);
}

TEST(Conditions, MuVExamples) {
  const auto M = ChartManifold::flat(2, square_box(2, 2));
  const auto V = ScalarField::parse("x1^2/2 + x2^2/2", 0, 2);
  EXPECT_NEAR(mu_V(M, V, Vec::Zero(2)), 1.0, 1e-14);
  EXPECT_NEAR(mu_V(M, V, Vec{{0.6, 0.8}}), 0.5, 1e-14);
  EXPECT_NEAR(mu_V(M, ScalarField::parse("0.6*x1 + 0.8*x2", 0, 2), Vec{{0.1, 0.1}}), -0.5, 1e-14);
}

TEST(Conditions, RankOneBoundOnMuV) {
  const auto M = sphere_model(2, 2);
  const auto V = ScalarField::parse("x1^2 + x1*x2 + sin(x2) + exp(x1/3)", 0, 2);
  Rng rng(4);
  for (int i = 0; i < 200; ++i) {
    const Vec x = rng.uniform_vector(2, -1.8, 1.8);
    const Vec dv = V.jet(x, 1).g;
    const double grad2 = dv.dot(M.at(x).gradient(dv));
    EXPECT_LE(lambda_V(M, V, x), mu_V(M, V, x) + 0.5 * grad2 + 1e-12);
    EXPECT_GE(lambda_V(M, V, x), mu_V(M, V, x) - 1e-12);
  }
}

TEST(Conditions, MuVIsInvariantUnderLinearChartChange) {
  // x = A y; in y coordinates the flat metric is A^T A and V(y) = V(A y).
  Rng rng(8);
  for (int trial = 0; trial < 5; ++trial) {
    Mat A(2, 2);
    do {
      for (int i = 0; i < 4; ++i) A(i / 2, i % 2) = rng.uniform(-1, 1);
    } while (std::abs(A.determinant()) < 0.3);
    const Mat G = A.transpose() * A;
    const std::string x1 = "(" + num(A(0, 0)) + "*x1 + " + num(A(0, 1)) + "*x2)";
    const std::string x2 = "(" + num(A(1, 0)) + "*x1 + " + num(A(1, 1)) + "*x2)";
    const auto Vx = ScalarField::parse("x1^2 + x1*x2 + sin(x2) + x1^4/4", 0, 2);
    const auto Vy = ScalarField::parse(x1 + "^2 + " + x1 + "*" + x2 + " + sin(" + x2 + ") + " + x1 + "^4/4", 0, 2);
    const auto Mx = ChartManifold::flat(2, square_box(2, 10));
    const auto My = ChartManifold::parse(2, {num(G(0, 0)), num(G(0, 1)), num(G(1, 0)), num(G(1, 1))}, square_box(2, 10));
    const Vec y = rng.uniform_vector(2, -1, 1);
    EXPECT_NEAR(mu_V(My, Vy, y), mu_V(Mx, Vx, A * y), 1e-9);
    EXPECT_NEAR(lambda_V(My, Vy, y), lambda_V(Mx, Vx, A * y), 1e-9);
  }
}

TEST(Conditions, MetricPositiveDefiniteOnSphereChart) {
  const auto f = check_metric(sphere_model(2, 3), 24);
  EXPECT_EQ(f.verdict, Verdict::kPass);
  EXPECT_NEAR(f.margin, 4.0 / 361.0, 1e-12);
}

TEST(Conditions, C1PassesOnBenchmarkWithMarginTwo) {
  const auto M = ChartManifold::flat(2, square_box(2, 1.5));
  const auto dom = domain("x1^2/2 + x2^2/2", 0.5);
  const auto ds = sample_domain(M, dom);
  EXPECT_EQ(ds.components, 1);
  EXPECT_FALSE(ds.touches_box);
  const auto f = check_C1(M, dom, ds);
  EXPECT_EQ(f.verdict, Verdict::kPass);
  EXPECT_NEAR(f.margin, 2.0, 1e-14);
  EXPECT_LE(f.argmin.norm(), 1e-14);
}

TEST(Conditions, C1LinearPotentialIsInconclusive) {
  const auto M = ChartManifold::flat(2, square_box(2, 1.5));
  const auto dom = domain("x1 + 0.5*x2", 0.2);
  const auto f = check_C1(M, dom, sample_domain(M, dom));
  EXPECT_EQ(f.verdict, Verdict::kInconclusive);
  EXPECT_NEAR(f.margin, 1.25, 1e-14);
}

TEST(Conditions, C1ConcavePotentialFails) {
  const auto M = ChartManifold::flat(2, square_box(2, 3));
  const auto dom = domain("-x1^2/2 - x2^2/2", -1.0);
  const auto f = check_C1(M, dom, sample_domain(M, dom));
  EXPECT_EQ(f.verdict, Verdict::kFail);
  EXPECT_LT(f.margin, 0.0);
}

TEST(Conditions, DisconnectedSublevelSetIsInconclusive) {
  const auto M = ChartManifold::flat(2, square_box(2, 2));
  const auto dom = domain("(x1^2 - 1)^2 + x2^2", 0.5);
  const auto ds = sample_domain(M, dom);
  EXPECT_EQ(ds.components, 2);
  EXPECT_EQ(check_C1(M, dom, ds).verdict, Verdict::kInconclusive);
}

TEST(Conditions, C2BenchmarkMarginIsOneHalf) {
  const auto M = ChartManifold::flat(2, square_box(2, 1.5));
  const auto dom = domain("x1^2/2 + x2^2/2", 0.5, 48);
  const auto f = check_C2(M, dom, sample_domain(M, dom));
  EXPECT_EQ(f[0].verdict, Verdict::kPass);
  EXPECT_NEAR(f[0].margin, 0.5, 1e-4);
  EXPECT_NEAR(f[0].argmin.norm(), 1.0, 1e-3);
  EXPECT_EQ(f[1].verdict, Verdict::kPass);
  EXPECT_NEAR(f[1].margin, 1.0, 1e-9);
}

TEST(Conditions, C2FailsOnSphereModel) {
  const auto M = sphere_model(2, 1.5);
  const auto dom = domain("x1^2/2 + x2^2/2", 0.5);
  const auto f = check_C2(M, dom, sample_domain(M, dom));
  EXPECT_EQ(f[0].verdict, Verdict::kFail);
  EXPECT_LT(f[0].margin, 0.0);
}

TEST(Conditions, Theorem1BenchmarkMargins) {
  const auto pr = linear_flat();
  const auto f = check_theorem1(pr, sample_domain(pr.M, pr.dom));
  EXPECT_EQ(f[0].verdict, Verdict::kPass);
  EXPECT_GE(f[0].margin, 0.8);
  EXPECT_EQ(f[1].verdict, Verdict::kPass);
  EXPECT_GE(f[1].margin, 1.0 - std::sqrt(0.13) - 1e-12);
  EXPECT_LE(f[1].margin, 1.0 - std::sqrt(0.13) + 0.02);
}

TEST(Conditions, Theorem1FailsForConstantForce) {
  auto pr = linear_flat();
  pr.W = ScalarField::parse("1.5", 2, 2);
  const auto f = check_theorem1(pr, sample_domain(pr.M, pr.dom));
  EXPECT_EQ(f[0].verdict, Verdict::kFail);
  EXPECT_EQ(f[1].verdict, Verdict::kFail);
  EXPECT_NEAR(f[0].margin, 0.0, 1e-14);
  EXPECT_NEAR(f[1].margin, 0.0, 1e-14);
}

TEST(Conditions, RefinementKeepsComfortablePasses) {
  auto pr = linear_flat();
  const auto coarse = check_conditions(pr);
  pr.dom.S = 48;
  const auto fine = check_conditions(pr);
  for (const auto& f : coarse.fragments) {
    if (f.verdict == Verdict::kPass && f.margin > 0.1) {
      const auto* g = fine.find(f.name);
      ASSERT_NE(g, nullptr);
      EXPECT_EQ(g->verdict, Verdict::kPass) << f.name;
    }
  }
  EXPECT_EQ(coarse.verdict(), Verdict::kPass);
  EXPECT_EQ(fine.verdict(), Verdict::kPass);
}

TEST(Conditions, ReportIsReproducible) {
  const auto pr = sphere_pole();
  const auto a = check_conditions(pr), b = check_conditions(pr);
  ASSERT_EQ(a.fragments.size(), b.fragments.size());
  for (std::size_t i = 0; i < a.fragments.size(); ++i) {
    EXPECT_EQ(a.fragments[i].margin, b.fragments[i].margin);
    EXPECT_EQ(a.fragments[i].verdict, b.fragments[i].verdict);
  }
}

TEST(Conditions, SpherePoleProblemSatisfiesConditions) {
  const auto rep = check_conditions(sphere_pole());
  for (const auto& f : rep.fragments) EXPECT_EQ(f.verdict, Verdict::kPass) << f.name << " margin " << f.margin;
}
