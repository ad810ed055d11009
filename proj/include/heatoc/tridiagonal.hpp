#pragma once

#include <complex>
#include <stdexcept>
#include <type_traits>

#include <Eigen/Core>

namespace heatoc {

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// An m×m tridiagonal matrix held by its three bands.  `lower(i)` is entry
/// (i+1, i) and `upper(i)` is entry (i, i+1).
template <typename Scalar>
struct Tridiagonal {
  VectorX<Scalar> lower;
  VectorX<Scalar> diagonal;
  VectorX<Scalar> upper;

  Eigen::Index size() const { return diagonal.size(); }
};

/// Returns T·v in O(m) work.  Works for any scalar the bands promote to
/// (real bands times a complex vector yields a complex vector).
template <typename Scalar, typename Derived>
VectorX<typename Eigen::ScalarBinaryOpTraits<Scalar, typename Derived::Scalar>::ReturnType>
multiply(const Tridiagonal<Scalar>& T, const Eigen::MatrixBase<Derived>& v) {
  using Result =
      typename Eigen::ScalarBinaryOpTraits<Scalar, typename Derived::Scalar>::ReturnType;
  const Eigen::Index m = T.size();
  if (v.size() != m) {
    throw std::invalid_argument("tridiagonal multiply: dimension mismatch");
  }
  VectorX<Result> out(m);
  if (m == 1) {
    out(0) = T.diagonal(0) * v(0);
    return out;
  }
  out(0) = T.diagonal(0) * v(0) + T.upper(0) * v(1);
  for (Eigen::Index i = 1; i + 1 < m; ++i) {
    out(i) = T.lower(i - 1) * v(i - 1) + T.diagonal(i) * v(i) + T.upper(i) * v(i + 1);
  }
  out(m - 1) = T.lower(m - 2) * v(m - 2) + T.diagonal(m - 1) * v(m - 1);
  return out;
}

/// Factorization of the shifted matrix (I − σ·T) for a fixed real tridiagonal
/// T and a real or complex shift σ.  The factorization is done once; `solve`
/// is then a forward/backward sweep (Thomas algorithm without pivoting).
///
/// No pivoting is needed for the shifts used here: T is the negative
/// semi-definite heat matrix and Re σ ≥ 0, which keeps the shifted matrix
/// diagonally dominant.
template <typename Scalar>
class ShiftedTridiagonalSolver {
 public:
  ShiftedTridiagonalSolver(const Tridiagonal<double>& T, Scalar shift)
      : shift_(shift), sub_(T.size() > 1 ? T.size() - 1 : 0), inv_pivot_(T.size()),
        super_(T.size() > 1 ? T.size() - 1 : 0) {
    const Eigen::Index m = T.size();
    for (Eigen::Index i = 0; i + 1 < m; ++i) {
      sub_(i) = -shift * T.lower(i);
      super_(i) = -shift * T.upper(i);
    }
    Scalar pivot = Scalar(1) - shift * T.diagonal(0);
    for (Eigen::Index i = 0; i < m; ++i) {
      if (i > 0) {
        pivot = Scalar(1) - shift * T.diagonal(i) - sub_(i - 1) * super_(i - 1) * inv_pivot_(i - 1);
      }
      if (std::abs(pivot) == 0.0) {
        throw std::runtime_error("shifted tridiagonal system is singular");
      }
      inv_pivot_(i) = Scalar(1) / pivot;
    }
  }

  Eigen::Index size() const { return inv_pivot_.size(); }
  Scalar shift() const { return shift_; }

  /// Solves (I − σT)x = rhs.
  template <typename Derived>
  VectorX<Scalar> solve(const Eigen::MatrixBase<Derived>& rhs) const {
    const Eigen::Index m = size();
    if (rhs.size() != m) {
      throw std::invalid_argument("shifted tridiagonal solve: dimension mismatch");
    }
    VectorX<Scalar> x(m);
    x(0) = Scalar(rhs(0));
    for (Eigen::Index i = 1; i < m; ++i) {
      x(i) = Scalar(rhs(i)) - sub_(i - 1) * inv_pivot_(i - 1) * x(i - 1);
    }
    x(m - 1) *= inv_pivot_(m - 1);
    for (Eigen::Index i = m - 2; i >= 0; --i) {
      x(i) = (x(i) - super_(i) * x(i + 1)) * inv_pivot_(i);
    }
    return x;
  }

 private:
  Scalar shift_;
  VectorX<Scalar> sub_;
  VectorX<Scalar> inv_pivot_;
  VectorX<Scalar> super_;
};

}  // namespace heatoc
