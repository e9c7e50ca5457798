#pragma once

// Dense small-dimension kernels: symmetric storage, unpivoted Cholesky,
// cyclic Jacobi eigendecomposition and weighted norms.
//
// Every reduction in this header runs in plain index order so that results
// replay bit-for-bit across runs and thread counts.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "inflab/error.hpp"

namespace inflab {

using Index = Eigen::Index;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar dot(const Eigen::MatrixBase<DerivedA>& a,
                              const Eigen::MatrixBase<DerivedB>& b) {
  using Scalar = typename DerivedA::Scalar;
  if (a.size() != b.size()) {
    fail(ErrorCode::DimensionMismatch, "dot: sizes " + std::to_string(a.size()) + " and " +
                                           std::to_string(b.size()));
  }
  Scalar acc(0);
  for (Index i = 0; i < a.size(); ++i) acc += a(i) * b(i);
  return acc;
}

template <typename Derived>
typename Derived::Scalar squared_norm(const Eigen::MatrixBase<Derived>& a) {
  return dot(a, a);
}

template <typename Derived>
typename Derived::Scalar norm(const Eigen::MatrixBase<Derived>& a) {
  using std::sqrt;
  return sqrt(squared_norm(a));
}

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& a) {
  for (Index j = 0; j < a.cols(); ++j)
    for (Index i = 0; i < a.rows(); ++i)
      if (!std::isfinite(static_cast<double>(a(i, j)))) return false;
  return true;
}

/// Symmetric matrix with exact symmetry: writes go through the upper triangle
/// and are mirrored.
template <typename Scalar>
class SymMatrix {
 public:
  using DenseType = Matrix<Scalar>;

  SymMatrix() = default;
  explicit SymMatrix(Index dim) : m_(DenseType::Zero(dim, dim)) {}

  static SymMatrix identity(Index dim) {
    SymMatrix s(dim);
    s.m_.setIdentity();
    return s;
  }

  static SymMatrix diagonal(const Vector<Scalar>& d) {
    SymMatrix s(d.size());
    for (Index i = 0; i < d.size(); ++i) s.m_(i, i) = d(i);
    return s;
  }

  /// Copies the upper triangle of `a` and mirrors it.
  template <typename Derived>
  static SymMatrix from_upper(const Eigen::MatrixBase<Derived>& a) {
    if (a.rows() != a.cols()) fail(ErrorCode::DimensionMismatch, "from_upper: matrix not square");
    SymMatrix s(a.rows());
    for (Index j = 0; j < a.cols(); ++j)
      for (Index i = 0; i <= j; ++i) s.m_(i, j) = s.m_(j, i) = a(i, j);
    return s;
  }

  /// (a + a^T) / 2.
  template <typename Derived>
  static SymMatrix symmetrized(const Eigen::MatrixBase<Derived>& a) {
    if (a.rows() != a.cols()) fail(ErrorCode::DimensionMismatch, "symmetrized: matrix not square");
    SymMatrix s(a.rows());
    for (Index j = 0; j < a.cols(); ++j)
      for (Index i = 0; i <= j; ++i) s.m_(i, j) = s.m_(j, i) = (a(i, j) + a(j, i)) / Scalar(2);
    return s;
  }

  Index dim() const { return m_.rows(); }
  Scalar operator()(Index i, Index j) const { return m_(i, j); }
  const DenseType& dense() const { return m_; }

  void set(Index i, Index j, Scalar value) { m_(i, j) = m_(j, i) = value; }

  void add_diagonal(Scalar value) {
    for (Index i = 0; i < dim(); ++i) m_(i, i) += value;
  }

  /// this += weight * x x^T
  template <typename Derived>
  void add_rank_one(Scalar weight, const Eigen::MatrixBase<Derived>& x) {
    for (Index j = 0; j < dim(); ++j) {
      const Scalar wj = weight * x(j);
      for (Index i = 0; i <= j; ++i) m_(i, j) += wj * x(i);
    }
    mirror_upper();
  }

  SymMatrix& operator+=(const SymMatrix& other) {
    m_ += other.m_;
    return *this;
  }
  SymMatrix& operator-=(const SymMatrix& other) {
    m_ -= other.m_;
    return *this;
  }
  SymMatrix& operator*=(Scalar c) {
    m_ *= c;
    return *this;
  }

  /// Row-wise left-to-right matrix-vector product.
  template <typename Derived>
  Vector<Scalar> apply(const Eigen::MatrixBase<Derived>& u) const {
    if (u.size() != dim()) fail(ErrorCode::DimensionMismatch, "SymMatrix::apply");
    Vector<Scalar> out(dim());
    for (Index i = 0; i < dim(); ++i) {
      Scalar acc(0);
      for (Index j = 0; j < dim(); ++j) acc += m_(i, j) * u(j);
      out(i) = acc;
    }
    return out;
  }

  Scalar trace() const { return m_.trace(); }
  Scalar max_abs() const { return dim() == 0 ? Scalar(0) : m_.cwiseAbs().maxCoeff(); }
  Scalar frobenius() const {
    Scalar acc(0);
    for (Index j = 0; j < dim(); ++j)
      for (Index i = 0; i < dim(); ++i) acc += m_(i, j) * m_(i, j);
    using std::sqrt;
    return sqrt(acc);
  }

 private:
  void mirror_upper() {
    for (Index j = 0; j < dim(); ++j)
      for (Index i = 0; i < j; ++i) m_(j, i) = m_(i, j);
  }

  DenseType m_;
};

template <typename Scalar>
SymMatrix<Scalar> operator+(SymMatrix<Scalar> a, const SymMatrix<Scalar>& b) {
  a += b;
  return a;
}

template <typename Scalar>
SymMatrix<Scalar> operator-(SymMatrix<Scalar> a, const SymMatrix<Scalar>& b) {
  a -= b;
  return a;
}

template <typename Scalar>
SymMatrix<Scalar> operator*(Scalar c, SymMatrix<Scalar> a) {
  a *= c;
  return a;
}

template <typename Scalar, typename Derived>
Vector<Scalar> operator*(const SymMatrix<Scalar>& a, const Eigen::MatrixBase<Derived>& u) {
  return a.apply(u);
}

/// Unpivoted Cholesky factorization A = L L^T. A nonpositive pivot is an
/// error; callers that want damping add it themselves.
template <typename Scalar>
class Cholesky {
 public:
  explicit Cholesky(const SymMatrix<Scalar>& a) : l_(Matrix<Scalar>::Zero(a.dim(), a.dim())) {
    using std::sqrt;
    const Index p = a.dim();
    for (Index j = 0; j < p; ++j) {
      Scalar d = a(j, j);
      for (Index k = 0; k < j; ++k) d -= l_(j, k) * l_(j, k);
      if (!(d > Scalar(0))) {
        fail(ErrorCode::NotPositiveDefinite,
             "Cholesky pivot " + std::to_string(static_cast<double>(d)) + " at column " +
                 std::to_string(j));
      }
      const Scalar ljj = sqrt(d);
      l_(j, j) = ljj;
      for (Index i = j + 1; i < p; ++i) {
        Scalar s = a(i, j);
        for (Index k = 0; k < j; ++k) s -= l_(i, k) * l_(j, k);
        l_(i, j) = s / ljj;
      }
    }
  }

  Index dim() const { return l_.rows(); }
  const Matrix<Scalar>& lower() const { return l_; }

  template <typename Derived>
  Vector<Scalar> solve(const Eigen::MatrixBase<Derived>& b) const {
    const Index p = dim();
    if (b.size() != p) fail(ErrorCode::DimensionMismatch, "Cholesky::solve");
    Vector<Scalar> y(p);
    for (Index i = 0; i < p; ++i) {
      Scalar s = b(i);
      for (Index k = 0; k < i; ++k) s -= l_(i, k) * y(k);
      y(i) = s / l_(i, i);
    }
    Vector<Scalar> x(p);
    for (Index i = p - 1; i >= 0; --i) {
      Scalar s = y(i);
      for (Index k = i + 1; k < p; ++k) s -= l_(k, i) * x(k);
      x(i) = s / l_(i, i);
    }
    return x;
  }

  Scalar log_det() const {
    using std::log;
    Scalar acc(0);
    for (Index i = 0; i < dim(); ++i) acc += Scalar(2) * log(l_(i, i));
    return acc;
  }

 private:
  Matrix<Scalar> l_;
};

template <typename Scalar, typename Derived>
Vector<Scalar> cholesky_solve(const SymMatrix<Scalar>& a, const Eigen::MatrixBase<Derived>& b) {
  return Cholesky<Scalar>(a).solve(b);
}

template <typename Scalar>
struct EigenDecomp {
  Vector<Scalar> eigenvalues;   // descending
  Matrix<Scalar> eigenvectors;  // orthonormal columns, matched to eigenvalues
  int sweeps = 0;

  Index dim() const { return eigenvalues.size(); }

  Matrix<Scalar> reconstruct() const {
    return eigenvectors * eigenvalues.asDiagonal() * eigenvectors.transpose();
  }

  /// Q f(Λ) Q^T for a scalar function f applied to the spectrum.
  template <typename F>
  SymMatrix<Scalar> spectral_function(F&& f) const {
    Vector<Scalar> mapped(dim());
    for (Index i = 0; i < dim(); ++i) mapped(i) = f(eigenvalues(i));
    return SymMatrix<Scalar>::symmetrized(eigenvectors * mapped.asDiagonal() *
                                          eigenvectors.transpose());
  }
};

inline constexpr int kJacobiMaxSweeps = 100;

/// Cyclic Jacobi eigendecomposition. Converged when the off-diagonal
/// Frobenius mass drops to 1e-14 ||A||_F (or a few ulps for coarser scalars).
template <typename Scalar>
EigenDecomp<Scalar> sym_eigen(const SymMatrix<Scalar>& a, int max_sweeps = kJacobiMaxSweeps) {
  using std::abs;
  using std::sqrt;
  const Index p = a.dim();
  Matrix<Scalar> m = a.dense();
  Matrix<Scalar> v = Matrix<Scalar>::Identity(p, p);

  const Scalar rel_tol =
      std::max(Scalar(1e-14), Scalar(16) * std::numeric_limits<Scalar>::epsilon());
  const Scalar threshold = rel_tol * a.frobenius();

  auto off_norm = [&]() {
    Scalar acc(0);
    for (Index j = 0; j < p; ++j)
      for (Index i = 0; i < p; ++i)
        if (i != j) acc += m(i, j) * m(i, j);
    return sqrt(acc);
  };

  int sweep = 0;
  while (off_norm() > threshold) {
    if (sweep == max_sweeps) {
      fail(ErrorCode::NoConvergence,
           "Jacobi eigensolver exceeded " + std::to_string(max_sweeps) + " sweeps");
    }
    ++sweep;
    for (Index r = 0; r + 1 < p; ++r) {
      for (Index c = r + 1; c < p; ++c) {
        const Scalar arc = m(r, c);
        if (arc == Scalar(0)) continue;
        const Scalar tau = (m(c, c) - m(r, r)) / (Scalar(2) * arc);
        const Scalar t = (tau >= Scalar(0) ? Scalar(1) : Scalar(-1)) /
                         (abs(tau) + sqrt(Scalar(1) + tau * tau));
        const Scalar cs = Scalar(1) / sqrt(Scalar(1) + t * t);
        const Scalar sn = t * cs;
        for (Index k = 0; k < p; ++k) {
          if (k == r || k == c) continue;
          const Scalar mkr = m(k, r);
          const Scalar mkc = m(k, c);
          m(k, r) = m(r, k) = cs * mkr - sn * mkc;
          m(k, c) = m(c, k) = sn * mkr + cs * mkc;
        }
        m(r, r) -= t * arc;
        m(c, c) += t * arc;
        m(r, c) = m(c, r) = Scalar(0);
        for (Index k = 0; k < p; ++k) {
          const Scalar vkr = v(k, r);
          const Scalar vkc = v(k, c);
          v(k, r) = cs * vkr - sn * vkc;
          v(k, c) = sn * vkr + cs * vkc;
        }
      }
    }
  }

  std::vector<Index> order(static_cast<std::size_t>(p));
  std::iota(order.begin(), order.end(), Index(0));
  std::stable_sort(order.begin(), order.end(),
                   [&](Index i, Index j) { return m(i, i) > m(j, j); });

  EigenDecomp<Scalar> out;
  out.eigenvalues.resize(p);
  out.eigenvectors.resize(p, p);
  out.sweeps = sweep;
  for (Index k = 0; k < p; ++k) {
    const Index src = order[static_cast<std::size_t>(k)];
    out.eigenvalues(k) = m(src, src);
    out.eigenvectors.col(k) = v.col(src);
  }
  return out;
}

/// sqrt(u^T A u). A quadratic form below -1e-12 means A is not PSD.
template <typename Scalar, typename Derived>
Scalar weighted_norm(const Eigen::MatrixBase<Derived>& u, const SymMatrix<Scalar>& a) {
  using std::sqrt;
  if (u.size() != a.dim()) fail(ErrorCode::DimensionMismatch, "weighted_norm");
  const Scalar q = dot(u, a.apply(u));
  if (q < Scalar(-1e-12)) {
    fail(ErrorCode::NegativeQuadraticForm,
         "u^T A u = " + std::to_string(static_cast<double>(q)));
  }
  return q > Scalar(0) ? sqrt(q) : Scalar(0);
}

template <typename Scalar>
Scalar spectral_norm(const SymMatrix<Scalar>& a) {
  if (a.dim() == 0) return Scalar(0);
  const auto eig = sym_eigen(a);
  using std::abs;
  return std::max(abs(eig.eigenvalues(0)), abs(eig.eigenvalues(a.dim() - 1)));
}

}  // namespace inflab
