#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "qpl/random.hpp"
#include "qpl/torus.hpp"

using namespace qpl;

namespace {

const FrequencyVector kOmega(Vec{{1.0, std::sqrt(2.0)}});

FourierField single_mode(const MultiIndex& n, Eigen::VectorXcd c, int N = 3) {
  return FourierField::from_modes(2, static_cast<int>(c.size()), N, {{n, c}});
}

FourierField random_field(Rng& rng, int k, int m, int N) {
  FourierField f(k, m, N);
  return f.with_parameters(rng.normal_vector(f.num_parameters()));
}

}  // namespace

TEST(Torus, HalfSpaceIsCanonical) {
  HalfSpace h(2, 2);
  EXPECT_EQ(h.size(), (25 + 1) / 2);
  EXPECT_EQ(h[0], (MultiIndex{0, 0}));
  bool conj = false;
  EXPECT_GE(h.find({-1, 2}, conj), 0);
  EXPECT_TRUE(conj);
  EXPECT_LT(h.find({3, 0}, conj), 0);
}

TEST(Torus, EvalSingleMode) {
  Eigen::VectorXcd c(2);
  c << 0.5, 0.0;
  const auto f = single_mode({1, 0}, c);
  EXPECT_NEAR(eval(f, Vec{{0.0, 0.0}})(0), 1.0, 1e-15);
  EXPECT_NEAR(eval(f, Vec{{std::numbers::pi / 2, 0.0}})(0), 0.0, 1e-15);
  EXPECT_NEAR(eval(f, Vec{{0.3, 0.1}})(1), 0.0, 1e-15);
  const FourierField z(2, 2, 3);
  EXPECT_EQ(eval(z, Vec{{1.0, 2.0}}).norm(), 0.0);
}

TEST(Torus, HermitianViolationRejected) {
  Eigen::VectorXcd c(1), d(1);
  c << std::complex<double>(0.5, 0.2);
  d << std::complex<double>(0.5, 0.2);  // should be the conjugate
  EXPECT_THROW(FourierField::from_modes(2, 1, 2, {{{1, 0}, c}, {{-1, 0}, d}}), MalformedFieldError);
  Eigen::VectorXcd z(1);
  z << std::complex<double>(1.0, 0.1);
  EXPECT_THROW(FourierField::from_modes(2, 1, 2, {{{0, 0}, z}}), MalformedFieldError);
  EXPECT_THROW(FourierField::from_modes(2, 1, 2, {{{3, 0}, c}}), MalformedFieldError);
  d << std::conj(c(0));
  EXPECT_NO_THROW(FourierField::from_modes(2, 1, 2, {{{1, 0}, c}, {{-1, 0}, d}}));
}

TEST(Torus, DirectionalDerivativeMultipliers) {
  Eigen::VectorXcd c(1);
  c << std::complex<double>(0.25, -0.5);
  for (const MultiIndex& n : {MultiIndex{1, 0}, MultiIndex{1, 1}}) {
    const auto d = directional_derivative(single_mode(n, c), kOmega);
    const std::complex<double> mult(0.0, kOmega.dot(n));
    EXPECT_NEAR(std::abs(d.coefficient(n)(0) - mult * c(0)), 0.0, 1e-15);
  }
  EXPECT_NEAR(kOmega.dot({1, 1}), 1.0 + std::sqrt(2.0), 1e-15);
  const auto k = directional_derivative(FourierField::constant(2, 3, Vec{{1.0, 2.0}}), kOmega);
  EXPECT_EQ(k.parameters().norm(), 0.0);
}

TEST(Torus, InnerProductExamples) {
  const TorusGrid grid(2, 8);
  Eigen::VectorXcd c(1);
  c << 0.5;
  const auto cosmode = single_mode({1, 0}, c);
  EXPECT_NEAR(inner0(cosmode, cosmode, grid), 0.5, 1e-14);
  const auto other = single_mode({0, 1}, c);
  EXPECT_NEAR(inner0(cosmode, other, grid), 0.0, 1e-14);
  const auto a = FourierField::constant(2, 3, Vec{{1.0, 2.0}});
  const auto b = FourierField::constant(2, 3, Vec{{-3.0, 0.5}});
  EXPECT_NEAR(inner0(a, b, grid), -2.0, 1e-14);
  EXPECT_NEAR(inner1(a, b, kOmega, grid), -2.0, 1e-14);
  for (const MultiIndex& n : {MultiIndex{1, 0}, MultiIndex{1, -1}, MultiIndex{2, 1}}) {
    const auto f = single_mode(n, c);
    const double lam = kOmega.dot(n);
    EXPECT_NEAR(inner1(f, f, kOmega, grid), 0.5 * (1 + lam * lam), 1e-13);
  }
  EXPECT_NEAR(inner1(cosmode, other, kOmega, grid), 0.0, 1e-14);
}

TEST(Torus, AliasingWarning) {
  Rng rng(1);
  const auto f = random_field(rng, 2, 1, 3);
  std::vector<std::string> warnings;
  inner0(f, f, TorusGrid(2, 6), &warnings);
  EXPECT_FALSE(warnings.empty());
  warnings.clear();
  inner0(f, f, TorusGrid(2, 8), &warnings);
  EXPECT_TRUE(warnings.empty());
}

TEST(Torus, ParsevalAndSkewAdjointness) {
  Rng rng(11);
  const TorusGrid grid(2, 10);
  for (int trial = 0; trial < 120; ++trial) {
    const auto f = random_field(rng, 2, 2, 4);
    const auto g = random_field(rng, 2, 2, 4);
    const double q = inner0(f, g, grid);
    EXPECT_NEAR(q, parseval_inner0(f, g), 1e-10 * (1 + std::abs(q)));
    const double l = inner0(f, directional_derivative(g, kOmega), grid);
    const double r = -inner0(directional_derivative(f, kOmega), g, grid);
    EXPECT_NEAR(l, r, 1e-10 * (1 + std::abs(l)));
  }
}

TEST(Torus, QuadratureExactOnTrigMonomials) {
  const TorusGrid grid(2, 8);
  for (int a = -3; a <= 3; ++a)
    for (int b = -3; b <= 3; ++b) {
      double s = 0;
      for (int j = 0; j < grid.size(); ++j) s += std::cos(a * grid.points()(0, j) + b * grid.points()(1, j));
      EXPECT_NEAR(s / grid.size(), (a == 0 && b == 0) ? 1.0 : 0.0, 1e-14);
    }
  EXPECT_NEAR(grid.weight() * grid.size(), 4 * std::numbers::pi * std::numbers::pi, 1e-12);
}

TEST(Torus, LineSample) {
  const auto k = line_sample(FourierField::constant(2, 2, Vec{{0.4, -1.0}}), Vec::Zero(2), kOmega, 1.7);
  EXPECT_NEAR(k.value(0), 0.4, 1e-15);
  EXPECT_EQ(k.first.norm(), 0.0);
  EXPECT_EQ(k.second.norm(), 0.0);
  Eigen::VectorXcd c(1);
  c << 0.5;
  const auto f = single_mode({1, 0}, c);
  for (double t : {0.0, 0.4, 2.5}) {
    const auto s = line_sample(f, Vec::Zero(2), kOmega, t);
    EXPECT_NEAR(s.value(0), std::cos(t), 1e-14);
    EXPECT_NEAR(s.first(0), -std::sin(t), 1e-14);
    EXPECT_NEAR(s.second(0), -std::cos(t), 1e-14);
  }
  const auto g = single_mode({2, -1}, c);
  const double lam = kOmega.dot({2, -1});
  const auto s = line_sample(g, Vec{{0.3, 1.1}}, kOmega, 0.9);
  EXPECT_NEAR(s.second(0), -lam * lam * s.value(0), 1e-13);
}

TEST(Torus, LineSampleMatchesFiniteDifferences) {
  Rng rng(5);
  const double h = 1e-4;
  for (int trial = 0; trial < 20; ++trial) {
    const auto f = random_field(rng, 2, 2, 3);
    const Vec phi0 = rng.uniform_vector(2, 0, 6.28);
    const double t = rng.uniform(-5, 5);
    const auto s = line_sample(f, phi0, kOmega, t);
    const auto p = line_sample(f, phi0, kOmega, t + h);
    const auto m = line_sample(f, phi0, kOmega, t - h);
    const Vec d1 = (p.value - m.value) / (2 * h);
    const Vec d2 = (p.first - m.first) / (2 * h);
    EXPECT_LE((d1 - s.first).norm(), 1e-6 * s.first.norm());
    EXPECT_LE((d2 - s.second).norm(), 1e-6 * s.second.norm());
    EXPECT_NEAR((s.value - eval(f, phi0 + t * kOmega.entries())).norm(), 0.0, 1e-12);
  }
}

TEST(Torus, AnalyzeSynthesizeRoundTrip) {
  Rng rng(8);
  for (int N : {2, 4}) {
    const TorusGrid grid(2, 2 * N + 2);
    const auto f = random_field(rng, 2, 3, N);
    const auto back = analyze(synthesize(f, grid), grid, N);
    EXPECT_LE(back.max_coefficient_distance(f), 1e-10);
  }
  const TorusGrid grid(2, 8);
  const auto c = analyze(Mat::Constant(2, grid.size(), 0.7), grid, 3);
  EXPECT_NEAR(c.re()(0, 0), 0.7, 1e-15);
  EXPECT_LE(c.parameters().tail(c.num_parameters() - 2).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_THROW(analyze(Mat::Zero(1, 49), TorusGrid(2, 7), 3), BandwidthError);
}

TEST(Torus, IndependenceWarnings) {
  EXPECT_TRUE(kOmega.independence_warnings().empty());
  EXPECT_FALSE(FrequencyVector(Vec{{1.0, 2.0}}).independence_warnings().empty());
  EXPECT_THROW(FrequencyVector(Vec{{1.0, 0.0}}), ConfigError);
}

TEST(Torus, PackingRoundTrip) {
  Rng rng(2);
  const auto f = random_field(rng, 3, 2, 2);
  EXPECT_EQ(f.num_parameters(), 2 * (125 + 1) / 2 * 2 - 2);
  EXPECT_EQ(f.with_parameters(f.parameters()).max_coefficient_distance(f), 0.0);
  for (int trial = 0; trial < 10; ++trial) {
    const Vec phi = rng.uniform_vector(3, 0, 6.28);
    EXPECT_TRUE(eval(f, phi).allFinite());
  }
}
