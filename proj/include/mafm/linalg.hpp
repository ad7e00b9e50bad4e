#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "mafm/error.hpp"
#include "mafm/series.hpp"

namespace mafm {

/// p x r matrix with orthonormal columns, 1 <= r <= p.
class Basis {
 public:
  static constexpr double kOrthonormalTol = 1e-10;

  explicit Basis(Matrix cols) : cols_(std::move(cols)) {
    require(cols_.cols() >= 1 && cols_.cols() <= cols_.rows(), ErrorKind::invalid_argument,
            "Basis: rank must satisfy 1 <= r <= p (got p=" + std::to_string(cols_.rows()) +
                ", r=" + std::to_string(cols_.cols()) + ")");
    require(cols_.allFinite(), ErrorKind::invalid_input, "Basis: non-finite entries");
    const Matrix gram = cols_.transpose() * cols_;
    const double dev = (gram - Matrix::Identity(rank(), rank())).cwiseAbs().maxCoeff();
    require(dev <= kOrthonormalTol, ErrorKind::invalid_argument,
            "Basis: columns are not orthonormal (max |U'U - I| = " + std::to_string(dev) + ")");
  }

  Index dim() const noexcept { return cols_.rows(); }
  Index rank() const noexcept { return cols_.cols(); }
  const Matrix& matrix() const noexcept { return cols_; }

  Matrix projector() const { return cols_ * cols_.transpose(); }

  /// Rows of the basis, as an r-vector.
  Vector row(Index i) const { return cols_.row(i).transpose(); }

 private:
  Matrix cols_;
};

/// Sine of the largest principal angle between two spans, in [0, 1].
struct SubspaceDistance {
  double value = 0.0;
  operator double() const noexcept { return value; }
};

struct TopEigen {
  Basis vectors;
  Vector values;  // descending, length r
  double trace = 0.0;
};

namespace detail {

inline void fix_signs(Matrix& v) {
  for (Index j = 0; j < v.cols(); ++j) {
    Index arg = 0;
    v.col(j).cwiseAbs().maxCoeff(&arg);
    if (v(arg, j) < 0.0) v.col(j) = -v.col(j);
  }
}

inline double spectral_norm(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues()(0);
}

}  // namespace detail

/// Eigenvectors of the r largest eigenvalues of the symmetrized input, ordered by
/// descending eigenvalue; each column's largest-magnitude entry is made positive.
inline TopEigen top_eigen(const Matrix& s, Index r) {
  require(s.rows() == s.cols(), ErrorKind::invalid_argument, "top_eigvecs: matrix must be square");
  const Index p = s.rows();
  require(r >= 1 && r <= p, ErrorKind::invalid_argument,
          "top_eigvecs: rank " + std::to_string(r) + " outside [1, " + std::to_string(p) + "]");
  require(s.allFinite(), ErrorKind::invalid_input, "top_eigvecs: non-finite entries");

  const Matrix sym = 0.5 * (s + s.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
  require(es.info() == Eigen::Success, ErrorKind::invalid_input,
          "top_eigvecs: eigendecomposition failed");

  // Eigen returns ascending order.
  Matrix vecs = es.eigenvectors().rightCols(r).rowwise().reverse();
  Vector vals = es.eigenvalues().tail(r).reverse();
  detail::fix_signs(vecs);
  return TopEigen{Basis(std::move(vecs)), std::move(vals), sym.trace()};
}

inline Basis top_eigvecs(const Matrix& s, Index r) { return top_eigen(s, r).vectors; }

/// Basis of the orthogonal complement from the full Householder completion of U.
inline Basis orth_complement(const Basis& u) {
  const Index p = u.dim();
  const Index r = u.rank();
  require(r < p, ErrorKind::empty_complement,
          "orth_complement: basis spans the whole space (r = p = " + std::to_string(p) + ")");
  Eigen::HouseholderQR<Matrix> qr(u.matrix());
  Matrix q = qr.householderQ();
  return Basis(q.rightCols(p - r));
}

/// ||UU' - VV'||_2 = sqrt(1 - sigma_min(U'V)^2).
///
/// Evaluated through the residual norms ||(I - UU')V||_2 and ||(I - VV')U||_2, which
/// equal the cosine form but keep full relative accuracy for nearly equal spans. Taking
/// the larger of the two makes the result exactly symmetric in its arguments.
inline SubspaceDistance subspace_distance(const Basis& u, const Basis& v) {
  require(u.dim() == v.dim() && u.rank() == v.rank(), ErrorKind::invalid_argument,
          "subspace_distance: shapes differ");
  const Matrix& um = u.matrix();
  const Matrix& vm = v.matrix();
  const double a = detail::spectral_norm(vm - um * (um.transpose() * vm));
  const double b = detail::spectral_norm(um - vm * (vm.transpose() * um));
  return SubspaceDistance{std::clamp(std::max(a, b), 0.0, 1.0)};
}

struct ProcrustesResult {
  Matrix rotation;
  double min_singular_value = 0.0;
  bool ambiguous = false;  // U'Uhat rank-deficient; rotation not unique
};

/// argmin over orthogonal R of ||Uhat - U R||_F.
inline ProcrustesResult procrustes_rotation(const Basis& u, const Basis& uhat) {
  require(u.dim() == uhat.dim() && u.rank() == uhat.rank(), ErrorKind::invalid_argument,
          "procrustes_rotation: shapes differ");
  const Matrix cross = u.matrix().transpose() * uhat.matrix();
  Eigen::JacobiSVD<Matrix> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
  ProcrustesResult out;
  out.rotation = svd.matrixU() * svd.matrixV().transpose();
  out.min_singular_value = svd.singularValues()(svd.singularValues().size() - 1);
  out.ambiguous = out.min_singular_value < 1e-12;
  return out;
}

/// (I - UU') M without forming the projector.
inline Matrix complement_left(const Matrix& u, const Matrix& m) {
  return m - u * (u.transpose() * m);
}

/// M (I - UU') without forming the projector.
inline Matrix complement_right(const Matrix& m, const Matrix& u) {
  return m - (m * u) * u.transpose();
}

}  // namespace mafm
