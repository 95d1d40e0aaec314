#pragma once

#include <cmath>

#include <Eigen/Dense>

namespace qpl {

/// Second-order forward-mode number: value, gradient and Hessian with respect
/// to up to `kMaxVars` seeded variables. When `second` is false the Hessian is
/// left empty and only first derivatives propagate.
struct Jet {
  static constexpr int kMaxVars = 8;
  using Grad = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxVars, 1>;
  using Hess = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxVars, kMaxVars>;

  double v = 0.0;
  Grad g;
  Hess h;

  static Jet constant(double value, int n, bool second) {
    Jet j;
    j.v = value;
    j.g = Grad::Zero(n);
    if (second) j.h = Hess::Zero(n, n);
    return j;
  }

  static Jet variable(double value, const Grad& seed, bool second) {
    Jet j;
    j.v = value;
    j.g = seed;
    if (second) j.h = Hess::Zero(seed.size(), seed.size());
    return j;
  }
};

namespace jet_detail {

// Chain rule for a scalar function with derivatives d1, d2 at a.v.
inline Jet apply(const Jet& a, double value, double d1, double d2) {
  Jet r;
  r.v = value;
  r.g = d1 * a.g;
  if (a.h.size() > 0) r.h = d1 * a.h + d2 * (a.g * a.g.transpose());
  return r;
}

}  // namespace jet_detail

inline Jet operator+(const Jet& a, const Jet& b) {
  Jet r;
  r.v = a.v + b.v;
  r.g = a.g + b.g;
  if (a.h.size() > 0) r.h = a.h + b.h;
  return r;
}

inline Jet operator-(const Jet& a, const Jet& b) {
  Jet r;
  r.v = a.v - b.v;
  r.g = a.g - b.g;
  if (a.h.size() > 0) r.h = a.h - b.h;
  return r;
}

inline Jet operator-(const Jet& a) {
  Jet r;
  r.v = -a.v;
  r.g = -a.g;
  if (a.h.size() > 0) r.h = -a.h;
  return r;
}

inline Jet operator*(const Jet& a, const Jet& b) {
  Jet r;
  r.v = a.v * b.v;
  r.g = b.v * a.g + a.v * b.g;
  if (a.h.size() > 0) {
    const Jet::Hess cross = a.g * b.g.transpose();
    r.h = b.v * a.h + a.v * b.h + cross + cross.transpose();
  }
  return r;
}

inline Jet reciprocal(const Jet& a) {
  const double inv = 1.0 / a.v;
  return jet_detail::apply(a, inv, -inv * inv, 2.0 * inv * inv * inv);
}

inline Jet operator/(const Jet& a, const Jet& b) { return a * reciprocal(b); }

inline Jet sin(const Jet& a) {
  const double s = std::sin(a.v);
  return jet_detail::apply(a, s, std::cos(a.v), -s);
}

inline Jet cos(const Jet& a) {
  const double c = std::cos(a.v);
  return jet_detail::apply(a, c, -std::sin(a.v), -c);
}

inline Jet exp(const Jet& a) {
  const double e = std::exp(a.v);
  return jet_detail::apply(a, e, e, e);
}

inline Jet log(const Jet& a) {
  const double inv = 1.0 / a.v;
  return jet_detail::apply(a, std::log(a.v), inv, -inv * inv);
}

inline Jet sqrt(const Jet& a) {
  const double s = std::sqrt(a.v);
  return jet_detail::apply(a, s, 0.5 / s, -0.25 / (s * a.v));
}

inline Jet tanh(const Jet& a) {
  const double t = std::tanh(a.v);
  const double d1 = 1.0 - t * t;
  return jet_detail::apply(a, t, d1, -2.0 * t * d1);
}

/// a^n for integer n. Uses repeated products for the value so that small
/// integer powers match the double-precision path bit for bit.
inline double ipow(double x, int n) {
  if (n < 0) return 1.0 / ipow(x, -n);
  double r = 1.0;
  double base = x;
  while (n > 0) {
    if (n & 1) r *= base;
    base *= base;
    n >>= 1;
  }
  return r;
}

inline Jet pow(const Jet& a, int n) {
  if (n == 0) {
    Jet r = Jet::constant(1.0, static_cast<int>(a.g.size()), a.h.size() > 0);
    return r;
  }
  const double d1 = n * ipow(a.v, n - 1);
  const double d2 = (n == 1) ? 0.0 : n * (n - 1) * ipow(a.v, n - 2);
  return jet_detail::apply(a, ipow(a.v, n), d1, d2);
}

}  // namespace qpl
