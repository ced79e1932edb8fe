#pragma once

// Small dense real/complex linear algebra: LU with partial pivoting,
// determinants, linear solves and eigenvalues of small real matrices.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "mcstab/errors.hpp"

namespace mcstab {

using cplx = std::complex<double>;

namespace detail {
inline bool is_finite(double v) { return std::isfinite(v); }
inline bool is_finite(cplx v) { return std::isfinite(v.real()) && std::isfinite(v.imag()); }
}  // namespace detail

/// Row-major dense matrix. Shapes are at least 1x1 and entries supplied at
/// construction must be finite.
template <class T>
class Matrix {
 public:
  using value_type = T;

  Matrix(std::size_t rows, std::size_t cols, T fill = T{})
      : rows_(rows), cols_(cols), a_(rows * cols, fill) {
    if (rows == 0 || cols == 0) throw std::invalid_argument("Matrix: empty shape");
    check_finite();
  }

  Matrix(std::size_t rows, std::size_t cols, std::vector<T> entries)
      : rows_(rows), cols_(cols), a_(std::move(entries)) {
    if (rows == 0 || cols == 0) throw std::invalid_argument("Matrix: empty shape");
    if (a_.size() != rows * cols) throw std::invalid_argument("Matrix: entry count != rows*cols");
    check_finite();
  }

  Matrix(std::initializer_list<std::initializer_list<T>> rows) : rows_(rows.size()), cols_(0) {
    if (rows_ == 0) throw std::invalid_argument("Matrix: empty shape");
    cols_ = rows.begin()->size();
    if (cols_ == 0) throw std::invalid_argument("Matrix: empty shape");
    a_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      if (r.size() != cols_) throw std::invalid_argument("Matrix: ragged rows");
      a_.insert(a_.end(), r.begin(), r.end());
    }
    check_finite();
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = T{1};
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool square() const { return rows_ == cols_; }

  T& operator()(std::size_t i, std::size_t j) { return a_[i * cols_ + j]; }
  const T& operator()(std::size_t i, std::size_t j) const { return a_[i * cols_ + j]; }

  std::span<T> data() { return a_; }
  std::span<const T> data() const { return a_; }

  void check_finite() const {
    for (const auto& v : a_)
      if (!detail::is_finite(v)) throw std::invalid_argument("Matrix: non-finite entry");
  }

  Matrix transpose() const {
    Matrix t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
    return t;
  }

  Matrix adjoint() const {
    Matrix t = transpose();
    if constexpr (std::is_same_v<T, cplx>)
      for (auto& v : t.a_) v = std::conj(v);
    return t;
  }

  double max_abs() const {
    double m = 0.0;
    for (const auto& v : a_) m = std::max(m, static_cast<double>(std::abs(v)));
    return m;
  }

  /// Infinity norm (max absolute row sum).
  double norm_inf() const {
    double m = 0.0;
    for (std::size_t i = 0; i < rows_; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < cols_; ++j) s += std::abs((*this)(i, j));
      m = std::max(m, s);
    }
    return m;
  }

  friend Matrix operator*(const Matrix& a, const Matrix& b) {
    if (a.cols_ != b.rows_) throw std::invalid_argument("Matrix: shape mismatch in product");
    Matrix c(a.rows_, b.cols_);
    for (std::size_t i = 0; i < a.rows_; ++i)
      for (std::size_t k = 0; k < a.cols_; ++k) {
        const T aik = a(i, k);
        for (std::size_t j = 0; j < b.cols_; ++j) c(i, j) += aik * b(k, j);
      }
    return c;
  }

  friend Matrix operator-(const Matrix& a, const Matrix& b) {
    if (a.rows_ != b.rows_ || a.cols_ != b.cols_) throw std::invalid_argument("Matrix: shape mismatch");
    Matrix c = a;
    for (std::size_t k = 0; k < c.a_.size(); ++k) c.a_[k] -= b.a_[k];
    return c;
  }

  friend Matrix operator+(const Matrix& a, const Matrix& b) {
    if (a.rows_ != b.rows_ || a.cols_ != b.cols_) throw std::invalid_argument("Matrix: shape mismatch");
    Matrix c = a;
    for (std::size_t k = 0; k < c.a_.size(); ++k) c.a_[k] += b.a_[k];
    return c;
  }

  friend Matrix operator*(T s, const Matrix& a) {
    Matrix c = a;
    for (auto& v : c.a_) v *= s;
    return c;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::vector<T> a_;
};

using RealMatrix = Matrix<double>;
using ComplexMatrix = Matrix<cplx>;

inline ComplexMatrix to_complex(const RealMatrix& m) {
  ComplexMatrix c(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) c(i, j) = m(i, j);
  return c;
}

template <class T>
std::vector<T> multiply(const Matrix<T>& m, std::span<const T> x) {
  if (x.size() != m.cols()) throw std::invalid_argument("multiply: length mismatch");
  std::vector<T> y(m.rows(), T{});
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) y[i] += m(i, j) * x[j];
  return y;
}

/// Pivots below this magnitude mark the matrix singular.
inline constexpr double kSingularPivot = 1e-300;

template <class T>
struct LuFactors {
  Matrix<T> lu;                  // unit-lower L below the diagonal, U on and above
  std::vector<std::size_t> perm;  // row i of LU is row perm[i] of the input
  int parity = 1;
  bool singular = false;
};

template <class T>
LuFactors<T> lu_factor(Matrix<T> m) {
  if (!m.square()) throw std::invalid_argument("lu_factor: matrix not square");
  const std::size_t n = m.rows();
  LuFactors<T> f{std::move(m), std::vector<std::size_t>(n), 1, false};
  auto& a = f.lu;
  for (std::size_t i = 0; i < n; ++i) f.perm[i] = i;

  for (std::size_t k = 0; k < n; ++k) {
    std::size_t p = k;
    double best = std::abs(a(k, k));
    for (std::size_t i = k + 1; i < n; ++i) {
      const double v = std::abs(a(i, k));
      if (v > best) {
        best = v;
        p = i;
      }
    }
    if (p != k) {
      for (std::size_t j = 0; j < n; ++j) std::swap(a(k, j), a(p, j));
      std::swap(f.perm[k], f.perm[p]);
      f.parity = -f.parity;
    }
    if (best < kSingularPivot) {
      f.singular = true;
      continue;
    }
    const T pivot = a(k, k);
    for (std::size_t i = k + 1; i < n; ++i) {
      const T l = a(i, k) / pivot;
      a(i, k) = l;
      if (l == T{}) continue;
      for (std::size_t j = k + 1; j < n; ++j) a(i, j) -= l * a(k, j);
    }
  }
  return f;
}

template <class T>
std::vector<T> lu_solve(const LuFactors<T>& f, std::span<const T> rhs) {
  const std::size_t n = f.lu.rows();
  if (rhs.size() != n) throw std::invalid_argument("lu_solve: rhs length mismatch");
  if (f.singular) throw SingularMatrix("lu_solve: pivot magnitude below 1e-300");
  std::vector<T> x(n);
  for (std::size_t i = 0; i < n; ++i) {
    T s = rhs[f.perm[i]];
    for (std::size_t j = 0; j < i; ++j) s -= f.lu(i, j) * x[j];
    x[i] = s;
  }
  for (std::size_t i = n; i-- > 0;) {
    T s = x[i];
    for (std::size_t j = i + 1; j < n; ++j) s -= f.lu(i, j) * x[j];
    x[i] = s / f.lu(i, i);
  }
  return x;
}

/// Solves M x = rhs with partial pivoting. Throws SingularMatrix when a pivot
/// falls below 1e-300 in magnitude.
template <class T>
std::vector<T> lu_solve(const Matrix<T>& m, std::span<const T> rhs) {
  if (!m.square() || rhs.size() != m.rows()) throw std::invalid_argument("lu_solve: shape mismatch");
  return lu_solve(lu_factor(m), rhs);
}

template <class T>
T determinant(const Matrix<T>& m) {
  const auto f = lu_factor(m);
  if (f.singular) return T{};
  T d = static_cast<T>(static_cast<double>(f.parity));
  for (std::size_t i = 0; i < f.lu.rows(); ++i) d *= f.lu(i, i);
  return d;
}

struct Spectrum {
  std::vector<cplx> eigenvalues;  // sorted by descending real part, then imaginary part
  double max_residual = 0.0;
};

inline constexpr std::size_t kMaxEigenDimension = 16;

namespace detail {

// Row-major n x n scratch view used by the Hessenberg/QR kernels.
struct Dense {
  std::size_t n;
  std::vector<double> v;
  double& operator()(std::size_t i, std::size_t j) { return v[i * n + j]; }
};

inline void balance(Dense& a) {
  constexpr double radix = 2.0;
  const std::size_t n = a.n;
  bool done = false;
  while (!done) {
    done = true;
    for (std::size_t i = 0; i < n; ++i) {
      double r = 0.0, c = 0.0;
      for (std::size_t j = 0; j < n; ++j)
        if (j != i) {
          c += std::abs(a(j, i));
          r += std::abs(a(i, j));
        }
      if (c == 0.0 || r == 0.0) continue;
      double g = r / radix, f = 1.0;
      const double s = c + r;
      while (c < g) {
        f *= radix;
        c *= radix * radix;
      }
      g = r * radix;
      while (c > g) {
        f /= radix;
        c /= radix * radix;
      }
      if ((c + r) / f < 0.95 * s) {
        done = false;
        g = 1.0 / f;
        for (std::size_t j = 0; j < n; ++j) a(i, j) *= g;
        for (std::size_t j = 0; j < n; ++j) a(j, i) *= f;
      }
    }
  }
}

// Reduction to upper Hessenberg form by stabilized elementary similarity
// transformations.
inline void hessenberg(Dense& a) {
  const std::size_t n = a.n;
  for (std::size_t m = 1; m + 1 < n; ++m) {
    double x = 0.0;
    std::size_t i = m;
    for (std::size_t j = m; j < n; ++j)
      if (std::abs(a(j, m - 1)) > std::abs(x)) {
        x = a(j, m - 1);
        i = j;
      }
    if (i != m) {
      for (std::size_t j = m - 1; j < n; ++j) std::swap(a(i, j), a(m, j));
      for (std::size_t j = 0; j < n; ++j) std::swap(a(j, i), a(j, m));
    }
    if (x != 0.0) {
      for (i = m + 1; i < n; ++i) {
        double y = a(i, m - 1);
        if (y != 0.0) {
          y /= x;
          a(i, m - 1) = y;
          for (std::size_t j = m; j < n; ++j) a(i, j) -= y * a(m, j);
          for (std::size_t j = 0; j < n; ++j) a(j, m) += y * a(j, i);
        }
      }
    }
  }
  for (std::size_t i = 2; i < n; ++i)
    for (std::size_t j = 0; j + 1 < i; ++j) a(i, j) = 0.0;
}

inline double sign_of(double a, double b) { return b >= 0.0 ? std::abs(a) : -std::abs(a); }

// Francis double-shift QR on an upper Hessenberg matrix.
inline std::vector<cplx> hessenberg_qr(Dense& a, int max_iterations_per_eigenvalue) {
  const int n = static_cast<int>(a.n);
  std::vector<double> wr(a.n), wi(a.n);
  double anorm = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = std::max(i - 1, 0); j < n; ++j) anorm += std::abs(a(i, j));

  int nn = n - 1;
  double t = 0.0;
  double p = 0, q = 0, r = 0, s = 0, w = 0, x = 0, y = 0, z = 0;
  while (nn >= 0) {
    int its = 0;
    int l = 0;
    do {
      for (l = nn; l >= 1; --l) {
        s = std::abs(a(l - 1, l - 1)) + std::abs(a(l, l));
        if (s == 0.0) s = anorm;
        if (std::abs(a(l, l - 1)) + s == s) {
          a(l, l - 1) = 0.0;
          break;
        }
      }
      x = a(nn, nn);
      if (l == nn) {
        wr[nn] = x + t;
        wi[nn--] = 0.0;
      } else {
        y = a(nn - 1, nn - 1);
        w = a(nn, nn - 1) * a(nn - 1, nn);
        if (l == nn - 1) {
          p = 0.5 * (y - x);
          q = p * p + w;
          z = std::sqrt(std::abs(q));
          x += t;
          if (q >= 0.0) {
            z = p + sign_of(z, p);
            wr[nn - 1] = wr[nn] = x + z;
            if (z != 0.0) wr[nn] = x - w / z;
            wi[nn - 1] = wi[nn] = 0.0;
          } else {
            wr[nn - 1] = wr[nn] = x + p;
            wi[nn - 1] = -(wi[nn] = z);
          }
          nn -= 2;
        } else {
          if (its == max_iterations_per_eigenvalue)
            throw NoConvergence("eig_real: QR iteration cap of " +
                                std::to_string(max_iterations_per_eigenvalue) +
                                " reached; remaining block order " + std::to_string(nn - l + 1));
          if (its == 10 || its == 20) {
            t += x;
            for (int i = 0; i <= nn; ++i) a(i, i) -= x;
            s = std::abs(a(nn, nn - 1)) + std::abs(a(nn - 1, nn - 2));
            y = x = 0.75 * s;
            w = -0.4375 * s * s;
          }
          ++its;
          int m = nn - 2;
          for (; m >= l; --m) {
            z = a(m, m);
            r = x - z;
            s = y - z;
            p = (r * s - w) / a(m + 1, m) + a(m, m + 1);
            q = a(m + 1, m + 1) - z - r - s;
            r = a(m + 2, m + 1);
            s = std::abs(p) + std::abs(q) + std::abs(r);
            p /= s;
            q /= s;
            r /= s;
            if (m == l) break;
            const double u = std::abs(a(m, m - 1)) * (std::abs(q) + std::abs(r));
            const double v = std::abs(p) * (std::abs(a(m - 1, m - 1)) + std::abs(z) + std::abs(a(m + 1, m + 1)));
            if (u + v == v) break;
          }
          for (int i = m; i <= nn - 2; ++i) {
            a(i + 2, i) = 0.0;
            if (i != m) a(i + 2, i - 1) = 0.0;
          }
          for (int k = m; k <= nn - 1; ++k) {
            if (k != m) {
              p = a(k, k - 1);
              q = a(k + 1, k - 1);
              r = 0.0;
              if (k + 1 != nn) r = a(k + 2, k - 1);
              if ((x = std::abs(p) + std::abs(q) + std::abs(r)) != 0.0) {
                p /= x;
                q /= x;
                r /= x;
              }
            }
            if ((s = sign_of(std::sqrt(p * p + q * q + r * r), p)) != 0.0) {
              if (k == m) {
                if (l != m) a(k, k - 1) = -a(k, k - 1);
              } else {
                a(k, k - 1) = -s * x;
              }
              p += s;
              x = p / s;
              y = q / s;
              z = r / s;
              q /= p;
              r /= p;
              for (int j = k; j <= nn; ++j) {
                p = a(k, j) + q * a(k + 1, j);
                if (k + 1 != nn) {
                  p += r * a(k + 2, j);
                  a(k + 2, j) -= p * z;
                }
                a(k + 1, j) -= p * y;
                a(k, j) -= p * x;
              }
              const int mmin = nn < k + 3 ? nn : k + 3;
              for (int i = l; i <= mmin; ++i) {
                p = x * a(i, k) + y * a(i, k + 1);
                if (k + 1 != nn) {
                  p += z * a(i, k + 2);
                  a(i, k + 2) -= p * r;
                }
                a(i, k + 1) -= p * q;
                a(i, k) -= p;
              }
            }
          }
        }
      }
    } while (l < nn - 1);
  }
  std::vector<cplx> ev(a.n);
  for (std::size_t i = 0; i < a.n; ++i) ev[i] = {wr[i], wi[i]};
  return ev;
}

// ||A v - lambda v|| / ||v|| after a few steps of inverse iteration, scaled by
// max(1, ||A||).
inline double eigenpair_residual(const RealMatrix& m, cplx lambda) {
  const std::size_t n = m.rows();
  const double scale = std::max(1.0, m.norm_inf());
  const ComplexMatrix a = to_complex(m);
  ComplexMatrix shifted = a;
  const cplx sigma = lambda + cplx(1e-10 * scale, 1e-10 * scale);
  for (std::size_t i = 0; i < n; ++i) shifted(i, i) -= sigma;
  const auto f = lu_factor(shifted);
  if (f.singular) return 0.0;  // sigma itself is an exact eigenvalue
  std::vector<cplx> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = cplx(1.0 + 0.1 * static_cast<double>(i), 0.3);
  for (int it = 0; it < 3; ++it) {
    v = lu_solve(f, std::span<const cplx>(v));
    double nv = 0.0;
    for (const auto& c : v) nv = std::max(nv, std::abs(c));
    for (auto& c : v) c /= nv;
  }
  const auto av = multiply(a, std::span<const cplx>(v));
  double res = 0.0, nv = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    res = std::max(res, std::abs(av[i] - lambda * v[i]));
    nv = std::max(nv, std::abs(v[i]));
  }
  return res / nv / scale;
}

}  // namespace detail

/// Eigenvalues of a small real matrix (dimension <= 16) by balancing,
/// Hessenberg reduction and Francis double-shift QR.
inline Spectrum eig_real(const RealMatrix& m, int max_iterations_per_eigenvalue = 60) {
  if (!m.square()) throw std::invalid_argument("eig_real: matrix not square");
  if (m.rows() > kMaxEigenDimension) throw std::invalid_argument("eig_real: dimension above 16");
  detail::Dense a{m.rows(), std::vector<double>(m.data().begin(), m.data().end())};
  detail::balance(a);
  detail::hessenberg(a);
  Spectrum sp;
  sp.eigenvalues = detail::hessenberg_qr(a, max_iterations_per_eigenvalue);

  // Pairs from the 2x2 blocks are exact conjugates; nearly-real roots of a
  // split pair are symmetrized here.
  for (std::size_t i = 0; i < sp.eigenvalues.size(); ++i) {
    auto& e = sp.eigenvalues[i];
    if (e.imag() == 0.0) continue;
    for (std::size_t j = i + 1; j < sp.eigenvalues.size(); ++j) {
      auto& g = sp.eigenvalues[j];
      if (std::abs(g - std::conj(e)) < 1e-9 * std::max(1.0, std::abs(e))) {
        const cplx avg = 0.5 * (e + std::conj(g));
        e = avg;
        g = std::conj(avg);
        break;
      }
    }
  }
  std::sort(sp.eigenvalues.begin(), sp.eigenvalues.end(), [](cplx a, cplx b) {
    if (a.real() != b.real()) return a.real() > b.real();
    return a.imag() > b.imag();
  });
  for (const auto& e : sp.eigenvalues)
    sp.max_residual = std::max(sp.max_residual, detail::eigenpair_residual(m, e));
  return sp;
}

}  // namespace mcstab
