#pragma once

// Helpers shared by the test binaries. Everything here is independent of the
// library's numerical routes so it can serve as an oracle.

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "mafm/infer.hpp"
#include "mafm/linalg.hpp"
#include "mafm/rng.hpp"
#include "mafm/series.hpp"

namespace mafm::testing {

inline double max_abs(const Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

/// Orthonormal p x r matrix via modified Gram-Schmidt on a Gaussian draw.
inline Matrix random_orthonormal(Index p, Index r, Rng& rng) {
  Matrix q = rng.gaussian(p, r);
  for (Index j = 0; j < r; ++j) {
    for (int pass = 0; pass < 2; ++pass)
      for (Index k = 0; k < j; ++k) q.col(j) -= q.col(k).dot(q.col(j)) * q.col(k);
    q.col(j).normalize();
  }
  return q;
}

/// Kronecker product, column-stacking convention.
inline Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

inline Vector vec(const Matrix& m) { return Eigen::Map<const Vector>(m.data(), m.size()); }

/// Sine of the largest principal angle via the cosine route sqrt(1 - sigma_min^2).
inline double sine_distance_cosine_route(const Matrix& u, const Matrix& v) {
  Eigen::JacobiSVD<Matrix> svd(u.transpose() * v);
  const double smin = svd.singularValues().minCoeff();
  return std::sqrt(std::max(0.0, 1.0 - smin * smin));
}

/// Noise-free two-mode panel X_t = F_t U_A' + U_B G_t' with Gaussian factors.
struct ExactPanel {
  MatrixSeries X;
  Matrix U_A, U_B;
  MatrixSeries F, G;
};

inline ExactPanel exact_panel(Index d1, Index d2, Index r1, Index r2, Index n, Rng& rng,
                              double f_scale = 3.0, double g_scale = 3.0) {
  ExactPanel p{MatrixSeries(d1, d2, n), random_orthonormal(d2, r1, rng),
               random_orthonormal(d1, r2, rng), MatrixSeries(d1, r1, n), MatrixSeries(d2, r2, n)};
  for (Index t = 0; t < n; ++t) {
    p.F[t] = f_scale * rng.gaussian(d1, r1);
    p.G[t] = g_scale * rng.gaussian(d2, r2);
    p.X[t] = p.F[t] * p.U_A.transpose() + p.U_B * p.G[t].transpose();
  }
  return p;
}

// Brute-force sandwich with the full (d1 d2) x (d1 d2) residual covariance.
inline Matrix brute_force_row_cov(const MatrixSeries& x, const MafmFit& fit, Mode mode, Index i) {
  const Index n = x.size();
  const bool is_a = mode == Mode::A;
  const Matrix& a = fit.U_A.matrix();
  const Matrix& b = fit.U_B.matrix();
  const Matrix pa = Matrix::Identity(a.rows(), a.rows()) - a * a.transpose();
  const Matrix pb = Matrix::Identity(b.rows(), b.rows()) - b * b.transpose();

  std::vector<Matrix> resid;
  for (Index t = 0; t < n; ++t) {
    const Matrix r = x[t] - fit.F[t] * a.transpose() - b * fit.G[t].transpose();
    resid.push_back(is_a ? r : Matrix(r.transpose()));
  }
  const Index dim = resid.front().size();
  Matrix cov_e = Matrix::Zero(dim, dim);
  for (const Matrix& r : resid) cov_e += vec(r) * vec(r).transpose();
  cov_e /= static_cast<double>(n);

  const Index own_dim = is_a ? a.rows() : b.rows();
  const Vector e = Vector::Unit(own_dim, i);
  const Vector w = (is_a ? pa : pb) * e;
  const Index r = is_a ? a.cols() : b.cols();
  Matrix out = Matrix::Zero(r, r);
  for (Index t = 0; t < n; ++t) {
    const Matrix m = is_a ? Matrix(pb * fit.F[t]) : Matrix(pa * fit.G[t]);
    const Matrix k = kron(w, m);
    out += k.transpose() * cov_e * k;
  }
  return out / static_cast<double>(n);
}

}  // namespace mafm::testing
