#pragma once

#include <cmath>
#include <string>

#include "qpl/qpl.hpp"

namespace qpl::testing {

inline Box square_box(int m, double half) {
  return Box{Vec::Constant(m, -half), Vec::Constant(m, half)};
}

inline ChartManifold sphere_model(int m = 2, double half = 3.0) {
  std::vector<std::string> e;
  std::string r2 = "x1^2";
  for (int i = 2; i <= m; ++i) r2 += " + x" + std::to_string(i) + "^2";
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) e.push_back(i == j ? "4/(1 + " + r2 + ")^2" : "0");
  return ChartManifold::parse(m, e, square_box(m, half));
}

inline ChartManifold poincare_model() {
  return ChartManifold::parse(2, {"4/(1 - x1^2 - x2^2)^2", "0", "0", "4/(1 - x1^2 - x2^2)^2"},
                              square_box(2, 0.7));
}

/// The linear flat benchmark: W = |x|^2/2 - (c(phi), x), V = |x|^2/2, v = 1/2.
inline ProblemSpec linear_flat(int N = 4, int P = 16) {
  ProblemSpec p;
  p.name = "linear_flat";
  p.k = 2;
  p.m = 2;
  p.omega = FrequencyVector(Vec{{1.0, std::sqrt(2.0)}});
  p.M = ChartManifold::flat(2, square_box(2, 1.5));
  p.W = ScalarField::parse("x1^2/2 + x2^2/2 - 0.3*cos(phi1)*x1 - 0.2*sin(phi2)*x2", 2, 2);
  p.dom.V = ScalarField::parse("x1^2/2 + x2^2/2", 0, 2);
  p.dom.v = 0.5;
  p.config.N = N;
  p.config.P = P;
  return p;
}

/// Sphere-model problem near the pole.
inline ProblemSpec sphere_pole(int N = 4, int P = 16) {
  ProblemSpec p;
  p.name = "sphere_pole";
  p.k = 2;
  p.m = 2;
  p.omega = FrequencyVector(Vec{{1.0, std::sqrt(2.0)}});
  p.M = sphere_model(2, 1.0);
  p.W = ScalarField::parse("2*(x1^2 + x2^2) - 0.05*cos(phi1)*x1 - 0.03*sin(phi2)*x2", 2, 2);
  p.dom.V = ScalarField::parse("6*(x1^2 + x2^2)", 0, 2);
  p.dom.v = 0.24;
  p.config.N = N;
  p.config.P = P;
  return p;
}

/// Closed-form benchmark solution x1 = 0.15 cos t, x2 = (0.2/3) sin(sqrt2 t).
inline FourierField linear_flat_exact(int N) {
  FourierField f(2, 2, N);
  std::vector<std::pair<MultiIndex, Eigen::VectorXcd>> modes;
  Eigen::VectorXcd a(2), b(2);
  a << std::complex<double>(0.075, 0.0), 0.0;
  b << 0.0, std::complex<double>(0.0, -0.1 / 3.0);
  modes.push_back({{1, 0}, a});
  modes.push_back({{0, 1}, b});
  return FourierField::from_modes(2, 2, N, modes);
}

inline double fd_step_derivative(const std::function<double(double)>& f, double x, double h) {
  return (f(x + h) - f(x - h)) / (2 * h);
}

}  // namespace qpl::testing
