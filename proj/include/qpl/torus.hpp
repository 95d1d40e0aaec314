#pragma once

// Real-valued truncated Fourier fields on the k-torus.
//
// A field u : T^k -> R^m is stored through its coefficients c_n for n in the
// canonical half of the cube |n|_inf <= N (n = 0 first, then every n whose
// first nonzero entry is positive). The other half is implied by
// c_{-n} = conj(c_n), so every field is real by construction.

#include <cmath>
#include <complex>
#include <map>
#include <memory>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qpl/errors.hpp"

namespace qpl {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using MultiIndex = std::vector<int>;

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Basic frequency vector omega of the quasiperiodic time dependence.
class FrequencyVector {
 public:
  FrequencyVector() = default;
  explicit FrequencyVector(Vec entries) : entries_(std::move(entries)) {
    if (entries_.size() < 1) throw ConfigError("frequency vector must have k >= 1 entries");
    for (Eigen::Index i = 0; i < entries_.size(); ++i) {
      if (!std::isfinite(entries_(i)) || entries_(i) == 0.0)
        throw ConfigError("frequency vector entries must be finite and nonzero");
    }
  }

  int k() const { return static_cast<int>(entries_.size()); }
  const Vec& entries() const { return entries_; }
  double operator[](int i) const { return entries_(i); }

  double dot(const MultiIndex& n) const {
    double s = 0.0;
    for (int i = 0; i < k(); ++i) s += n[i] * entries_(i);
    return s;
  }

  /// Smallest |(n, omega)| over nonzero n with |n|_inf <= n_check, and the
  /// index attaining it.
  std::pair<double, MultiIndex> smallest_divisor(int n_check) const {
    MultiIndex n(k(), -n_check);
    double best = std::numeric_limits<double>::infinity();
    MultiIndex arg;
    for (;;) {
      bool zero = true;
      for (int v : n) zero = zero && v == 0;
      if (!zero) {
        const double d = std::abs(dot(n));
        if (d < best) {
          best = d;
          arg = n;
        }
      }
      int i = k() - 1;
      while (i >= 0 && n[i] == n_check) n[i--] = -n_check;
      if (i < 0) break;
      ++n[i];
    }
    return {best, arg};
  }

  /// Warnings (never fatal) for approximate rational dependence.
  std::vector<std::string> independence_warnings(int n_check = 12, double delta = 1e-6) const {
    std::vector<std::string> out;
    const auto [d, n] = smallest_divisor(n_check);
    if (d <= delta) {
      std::string idx;
      for (std::size_t i = 0; i < n.size(); ++i) idx += (i ? "," : "") + std::to_string(n[i]);
      out.push_back("frequency vector nearly rationally dependent: |(n,omega)| = " + std::to_string(d) +
                    " at n = (" + idx + ")");
    }
    return out;
  }

 private:
  Vec entries_;
};

/// Canonical half of the truncation cube for given (k, N).
class HalfSpace {
 public:
  HalfSpace(int k, int N) : k_(k), N_(N) {
    if (k < 1 || N < 0) throw ConfigError("invalid torus dimension or truncation order");
    indices_.push_back(MultiIndex(k, 0));
    MultiIndex n(k, -N);
    for (;;) {
      int first = 0;
      for (int v : n)
        if (v != 0) {
          first = v;
          break;
        }
      if (first > 0) indices_.push_back(n);
      int i = k - 1;
      while (i >= 0 && n[i] == N) n[i--] = -N;
      if (i < 0) break;
      ++n[i];
    }
    for (std::size_t j = 0; j < indices_.size(); ++j) lookup_[indices_[j]] = static_cast<int>(j);
  }

  int k() const { return k_; }
  int N() const { return N_; }
  int size() const { return static_cast<int>(indices_.size()); }
  const MultiIndex& operator[](int j) const { return indices_[j]; }
  const std::vector<MultiIndex>& indices() const { return indices_; }

  /// Position of n in the half space; `conjugate` is set when -n is stored instead.
  int find(const MultiIndex& n, bool& conjugate) const {
    if (auto it = lookup_.find(n); it != lookup_.end()) {
      conjugate = false;
      return it->second;
    }
    MultiIndex neg(n);
    for (int& v : neg) v = -v;
    if (auto it = lookup_.find(neg); it != lookup_.end()) {
      conjugate = true;
      return it->second;
    }
    return -1;
  }

  static std::shared_ptr<const HalfSpace> make(int k, int N) { return std::make_shared<const HalfSpace>(k, N); }

 private:
  int k_;
  int N_;
  std::vector<MultiIndex> indices_;
  std::map<MultiIndex, int> lookup_;
};

/// Truncated Fourier field T^k -> R^m.
class FourierField {
 public:
  FourierField() = default;

  /// Zero field.
  FourierField(int k, int m, int N) : modes_(HalfSpace::make(k, N)), m_(m) {
    re_ = Mat::Zero(m, modes_->size());
    im_ = Mat::Zero(m, modes_->size());
  }

  FourierField(std::shared_ptr<const HalfSpace> modes, int m) : modes_(std::move(modes)), m_(m) {
    re_ = Mat::Zero(m, modes_->size());
    im_ = Mat::Zero(m, modes_->size());
  }

  /// Builds a field from an arbitrary list of modes. Pairs (n, -n) must be
  /// complex conjugates; the zero mode must be real.
  static FourierField from_modes(int k, int m, int N,
                                 const std::vector<std::pair<MultiIndex, Eigen::VectorXcd>>& modes,
                                 double tol = 1e-9) {
    FourierField f(k, m, N);
    std::vector<char> seen(f.modes_->size(), 0);
    std::vector<char> seen_conj(f.modes_->size(), 0);
    for (const auto& [n, c] : modes) {
      if (static_cast<int>(n.size()) != k || c.size() != m) throw MalformedFieldError("mode has wrong dimension");
      bool conj = false;
      const int j = f.modes_->find(n, conj);
      if (j < 0) throw MalformedFieldError("mode outside truncation band");
      const Eigen::VectorXcd val = conj ? Eigen::VectorXcd(c.conjugate()) : c;
      auto& flag = conj ? seen_conj[j] : seen[j];
      if (flag) throw MalformedFieldError("duplicate mode");
      flag = true;
      const bool other = conj ? seen[j] : seen_conj[j];
      if (other) {
        const double diff = (f.coefficient(j) - val).cwiseAbs().maxCoeff();
        const double scale = std::max(1.0, val.cwiseAbs().maxCoeff());
        if (diff > tol * scale) throw MalformedFieldError("Hermitian symmetry violated: c(-n) != conj(c(n))");
      } else {
        f.re_.col(j) = val.real();
        f.im_.col(j) = val.imag();
      }
    }
    if (f.im_.col(0).cwiseAbs().maxCoeff() > tol) throw MalformedFieldError("zero mode must be real");
    f.im_.col(0).setZero();
    return f;
  }

  /// Constant field.
  static FourierField constant(int k, int N, const Vec& value) {
    FourierField f(k, static_cast<int>(value.size()), N);
    f.re_.col(0) = value;
    return f;
  }

  int k() const { return modes_->k(); }
  int m() const { return m_; }
  int N() const { return modes_->N(); }
  int num_modes() const { return modes_->size(); }
  const HalfSpace& modes() const { return *modes_; }
  const std::shared_ptr<const HalfSpace>& modes_ptr() const { return modes_; }

  const Mat& re() const { return re_; }
  const Mat& im() const { return im_; }
  Mat& re() { return re_; }
  Mat& im() { return im_; }

  Eigen::VectorXcd coefficient(int j) const {
    Eigen::VectorXcd c(m_);
    c.real() = re_.col(j);
    c.imag() = im_.col(j);
    return c;
  }

  /// Coefficient of an arbitrary multi-index (zero outside the band).
  Eigen::VectorXcd coefficient(const MultiIndex& n) const {
    bool conj = false;
    const int j = modes_->find(n, conj);
    if (j < 0) return Eigen::VectorXcd::Zero(m_);
    return conj ? Eigen::VectorXcd(coefficient(j).conjugate()) : coefficient(j);
  }

  /// Number of real parameters: m for the zero mode plus 2m per other mode.
  int num_parameters() const { return m_ * (2 * num_modes() - 1); }

  /// Packing [Re c_0, (Re c_n, Im c_n) for n != 0].
  Vec parameters() const {
    Vec p(num_parameters());
    p.head(m_) = re_.col(0);
    for (int j = 1; j < num_modes(); ++j) {
      p.segment(m_ * (2 * j - 1), m_) = re_.col(j);
      p.segment(m_ * (2 * j), m_) = im_.col(j);
    }
    return p;
  }

  FourierField with_parameters(const Vec& p) const {
    if (p.size() != num_parameters()) throw MalformedFieldError("parameter vector has wrong length");
    FourierField f(modes_, m_);
    f.re_.col(0) = p.head(m_);
    for (int j = 1; j < num_modes(); ++j) {
      f.re_.col(j) = p.segment(m_ * (2 * j - 1), m_);
      f.im_.col(j) = p.segment(m_ * (2 * j), m_);
    }
    return f;
  }

  FourierField operator+(const FourierField& o) const {
    check_compatible(o);
    FourierField f(modes_, m_);
    f.re_ = re_ + o.re_;
    f.im_ = im_ + o.im_;
    return f;
  }

  FourierField operator-(const FourierField& o) const {
    check_compatible(o);
    FourierField f(modes_, m_);
    f.re_ = re_ - o.re_;
    f.im_ = im_ - o.im_;
    return f;
  }

  FourierField operator*(double s) const {
    FourierField f(modes_, m_);
    f.re_ = s * re_;
    f.im_ = s * im_;
    return f;
  }

  /// Applies a linear map to the values: (Au)(phi) = A u(phi).
  FourierField transformed(const Mat& A) const {
    FourierField f(modes_, static_cast<int>(A.rows()));
    f.re_ = A * re_;
    f.im_ = A * im_;
    return f;
  }

  /// Largest coefficient difference in absolute value.
  double max_coefficient_distance(const FourierField& o) const {
    check_compatible(o);
    return std::max((re_ - o.re_).cwiseAbs().maxCoeff(), (im_ - o.im_).cwiseAbs().maxCoeff());
  }

  /// Energy in the outermost shell |n|_inf = N relative to the total energy
  /// of the nonconstant modes; 0 for constant fields.
  double tail_ratio() const {
    double shell = 0.0;
    double total = 0.0;
    for (int j = 1; j < num_modes(); ++j) {
      const double e = re_.col(j).squaredNorm() + im_.col(j).squaredNorm();
      total += e;
      int inf_norm = 0;
      for (int v : (*modes_)[j]) inf_norm = std::max(inf_norm, std::abs(v));
      if (inf_norm == N()) shell += e;
    }
    return total > 0.0 ? shell / total : 0.0;
  }

  void check_compatible(const FourierField& o) const {
    if (o.m_ != m_ || o.k() != k() || o.N() != N()) throw MalformedFieldError("incompatible Fourier fields");
  }

 private:
  std::shared_ptr<const HalfSpace> modes_;
  int m_ = 0;
  Mat re_;
  Mat im_;
};

/// Value of the field at phi.
inline Vec eval(const FourierField& f, std::span<const double> phi) {
  if (static_cast<int>(phi.size()) != f.k()) throw MalformedFieldError("point dimension differs from torus dimension");
  if (f.im().col(0).cwiseAbs().maxCoeff() > 1e-9) throw MalformedFieldError("zero mode must be real");
  Vec u = f.re().col(0);
  for (int j = 1; j < f.num_modes(); ++j) {
    const MultiIndex& n = f.modes()[j];
    double arg = 0.0;
    for (int i = 0; i < f.k(); ++i) arg += n[i] * phi[i];
    u += 2.0 * (std::cos(arg) * f.re().col(j) - std::sin(arg) * f.im().col(j));
  }
  return u;
}

inline Vec eval(const FourierField& f, const Vec& phi) {
  return eval(f, std::span<const double>(phi.data(), static_cast<std::size_t>(phi.size())));
}

/// D_omega f: coefficient n multiplied by i (n, omega).
inline FourierField directional_derivative(const FourierField& f, const FrequencyVector& omega) {
  if (omega.k() != f.k()) throw MalformedFieldError("frequency vector dimension differs from torus dimension");
  FourierField d(f.modes_ptr(), f.m());
  for (int j = 1; j < f.num_modes(); ++j) {
    const double lam = omega.dot(f.modes()[j]);
    d.re().col(j) = -lam * f.im().col(j);
    d.im().col(j) = lam * f.re().col(j);
  }
  return d;
}

/// Uniform tensor grid on [0, 2 pi)^k with P points per axis, lexicographic
/// order with the last axis fastest.
class TorusGrid {
 public:
  TorusGrid(int k, int P) : k_(k), P_(P) {
    if (k < 1 || P < 1) throw ConfigError("invalid torus grid");
    size_ = 1;
    for (int i = 0; i < k; ++i) size_ *= P;
    points_ = Mat(k, size_);
    for (int j = 0; j < size_; ++j) {
      int r = j;
      for (int i = k - 1; i >= 0; --i) {
        points_(i, j) = kTwoPi * (r % P) / P;
        r /= P;
      }
    }
  }

  int k() const { return k_; }
  int P() const { return P_; }
  int size() const { return size_; }
  const Mat& points() const { return points_; }
  Vec point(int j) const { return points_.col(j); }
  /// Quadrature weight of one node, (2 pi)^k / P^k.
  double weight() const { return std::pow(kTwoPi, k_) / size_; }

 private:
  int k_;
  int P_;
  int size_;
  Mat points_;
};

/// Cosine and sine tables of a half space on a grid; synthesis, analysis and
/// the adjoint maps used for coefficient-space gradients.
class SpectralBasis {
 public:
  SpectralBasis(std::shared_ptr<const HalfSpace> modes, const TorusGrid& grid)
      : modes_(std::move(modes)), grid_(grid) {
    if (modes_->k() != grid.k()) throw MalformedFieldError("grid and field torus dimensions differ");
    const int H = modes_->size();
    cos_ = Mat(H, grid.size());
    sin_ = Mat(H, grid.size());
    for (int j = 0; j < H; ++j) {
      const MultiIndex& n = (*modes_)[j];
      for (int p = 0; p < grid.size(); ++p) {
        double arg = 0.0;
        for (int i = 0; i < grid.k(); ++i) arg += n[i] * grid.points()(i, p);
        cos_(j, p) = std::cos(arg);
        sin_(j, p) = std::sin(arg);
      }
    }
    weights_ = Vec::Constant(H, 2.0);
    weights_(0) = 1.0;
  }

  const TorusGrid& grid() const { return grid_; }
  const HalfSpace& modes() const { return *modes_; }
  const std::shared_ptr<const HalfSpace>& modes_ptr() const { return modes_; }
  const Mat& cos_table() const { return cos_; }
  const Mat& sin_table() const { return sin_; }
  const Vec& weights() const { return weights_; }

  /// Samples (m x grid size).
  Mat synthesize(const FourierField& f) const {
    return (f.re() * weights_.asDiagonal()) * cos_ - (f.im() * weights_.asDiagonal()) * sin_;
  }

  /// Discrete Fourier analysis of samples onto the half space.
  FourierField analyze(const Mat& samples) const {
    const int P = grid_.P();
    if (P < 2 * modes_->N() + 2)
      throw BandwidthError("grid with P = " + std::to_string(P) + " points per axis cannot resolve truncation N = " +
                           std::to_string(modes_->N()) + "; need P >= 2N+2 = " + std::to_string(2 * modes_->N() + 2));
    FourierField f(modes_, static_cast<int>(samples.rows()));
    const double inv = 1.0 / grid_.size();
    f.re() = samples * cos_.transpose() * inv;
    f.im() = -samples * sin_.transpose() * inv;
    f.im().col(0).setZero();
    return f;
  }

 private:
  std::shared_ptr<const HalfSpace> modes_;
  TorusGrid grid_;
  Mat cos_;
  Mat sin_;
  Vec weights_;
};

inline Mat synthesize(const FourierField& f, const TorusGrid& grid) {
  return SpectralBasis(f.modes_ptr(), grid).synthesize(f);
}

inline FourierField analyze(const Mat& samples, const TorusGrid& grid, int N) {
  return SpectralBasis(HalfSpace::make(grid.k(), N), grid).analyze(samples);
}

/// (f, g)_0 = (2 pi)^{-k} integral of the pointwise dot product, by the
/// trapezoid rule. The product has bandwidth N_f + N_g per axis; a grid with
/// P <= N_f + N_g aliases and appends a warning.
inline double inner0(const FourierField& f, const FourierField& g, const TorusGrid& grid,
                     std::vector<std::string>* warnings = nullptr) {
  if (f.m() != g.m()) throw MalformedFieldError("inner product of fields with different target dimension");
  if (warnings && grid.P() <= f.N() + g.N())
    warnings->push_back("inner0: grid P = " + std::to_string(grid.P()) + " aliases product of bandwidth " +
                        std::to_string(f.N() + g.N()));
  const Mat a = synthesize(f, grid);
  const Mat b = synthesize(g, grid);
  return a.cwiseProduct(b).sum() / grid.size();
}

/// Coefficient-space (Parseval) form of inner0.
inline double parseval_inner0(const FourierField& f, const FourierField& g) {
  f.check_compatible(g);
  double s = f.re().col(0).dot(g.re().col(0));
  for (int j = 1; j < f.num_modes(); ++j)
    s += 2.0 * (f.re().col(j).dot(g.re().col(j)) + f.im().col(j).dot(g.im().col(j)));
  return s;
}

/// (f, g)_1 = (f, g)_0 + (D f, D g)_0.
inline double inner1(const FourierField& f, const FourierField& g, const FrequencyVector& omega,
                     const TorusGrid& grid, std::vector<std::string>* warnings = nullptr) {
  return inner0(f, g, grid, warnings) +
         inner0(directional_derivative(f, omega), directional_derivative(g, omega), grid, warnings);
}

/// Value and first two t-derivatives of u(phi0 + t omega).
struct LineSample {
  double t = 0.0;
  Vec value;
  Vec first;
  Vec second;
};

inline LineSample line_sample(const FourierField& f, const Vec& phi0, const FrequencyVector& omega, double t) {
  LineSample s;
  s.t = t;
  s.value = f.re().col(0);
  s.first = Vec::Zero(f.m());
  s.second = Vec::Zero(f.m());
  for (int j = 1; j < f.num_modes(); ++j) {
    const MultiIndex& n = f.modes()[j];
    const double lam = omega.dot(n);
    double arg = lam * t;
    for (int i = 0; i < f.k(); ++i) arg += n[i] * phi0(i);
    const double c = std::cos(arg);
    const double sn = std::sin(arg);
    const Vec term = 2.0 * (c * f.re().col(j) - sn * f.im().col(j));
    s.value += term;
    s.first += 2.0 * lam * (-sn * f.re().col(j) - c * f.im().col(j));
    s.second -= lam * lam * term;
  }
  return s;
}

inline std::vector<LineSample> line_sample(const FourierField& f, const Vec& phi0, const FrequencyVector& omega,
                                           std::span<const double> times) {
  std::vector<LineSample> out;
  out.reserve(times.size());
  for (double t : times) out.push_back(line_sample(f, phi0, omega, t));
  return out;
}

}  // namespace qpl
