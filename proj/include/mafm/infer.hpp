#pragma once

#include <cmath>
#include <limits>
#include <string>

#include <boost/math/distributions/normal.hpp>
#include <Eigen/Dense>

#include "mafm/error.hpp"
#include "mafm/estimate.hpp"
#include "mafm/linalg.hpp"
#include "mafm/series.hpp"
#include "mafm/synth.hpp"

namespace mafm {

enum class Mode { A, B };

inline const char* to_string(Mode m) noexcept { return m == Mode::A ? "A" : "B"; }

struct FactorCov {
  Matrix sigma_F;
  Matrix sigma_G;
};

struct RowCov {
  Index index = 0;
  Matrix matrix;
};

struct LoadingInference {
  Mode mode = Mode::A;
  Index row = 0;
  Vector estimate;
  Vector std_err;
  Vector ci_lo;
  Vector ci_hi;
  double level = 0.95;
  double repair = 0.0;  // clipped negative eigenvalue mass relative to trace
  bool flagged = false; // repair above 1% of trace
};

/// Symmetric matrix function helpers with PSD repair.
struct SymmetricRoot {
  Matrix inv_sqrt;
  double repair = 0.0;
};

namespace detail {

inline constexpr double kEigenFloor = 1e-12;
inline constexpr double kRepairFlag = 0.01;

/// S^{-1/2} after clipping negative eigenvalues at zero; eigenvalues below
/// kEigenFloor * trace are floored before inversion.
inline SymmetricRoot inverse_sqrt(const Matrix& s) {
  const Matrix sym = 0.5 * (s + s.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
  Vector ev = es.eigenvalues();
  double neg = 0.0;
  for (Index k = 0; k < ev.size(); ++k)
    if (ev(k) < 0.0) {
      neg -= ev(k);
      ev(k) = 0.0;
    }
  const double trace = ev.sum();
  const double floor = std::max(kEigenFloor * trace, std::numeric_limits<double>::min());
  SymmetricRoot out;
  out.repair = trace > 0.0 ? neg / trace : (neg > 0.0 ? 1.0 : 0.0);
  const Vector scale = ev.unaryExpr([floor](double v) { return 1.0 / std::sqrt(std::max(v, floor)); });
  out.inv_sqrt = es.eigenvectors() * scale.asDiagonal() * es.eigenvectors().transpose();
  return out;
}

inline double min_eig_ratio(const Matrix& s) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (s + s.transpose()), Eigen::EigenvaluesOnly);
  const double tr = es.eigenvalues().sum();
  return tr > 0.0 ? es.eigenvalues()(0) / tr : 0.0;
}

inline Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

}  // namespace detail

/// Plug-in covariance estimators for loading-row inference, computed once per fit.
class PlugInInference {
 public:
  PlugInInference(const MatrixSeries& x, const MafmFit& fit)
      : x_(x), fit_(fit), n_(x.size()) {
    require(fit.U_A.dim() == x.cols() && fit.U_B.dim() == x.rows() &&
                fit.F.size() == x.size() && fit.G.size() == x.size(),
            ErrorKind::invalid_argument, "inference: fit shapes do not match the panel");
    const Matrix& a = fit.U_A.matrix();
    const Matrix& b = fit.U_B.matrix();
    residuals_ = MatrixSeries(x.rows(), x.cols(), n_);
    projected_F_ = MatrixSeries(x.rows(), a.cols(), n_);
    projected_G_ = MatrixSeries(x.cols(), b.cols(), n_);
    Matrix sf = Matrix::Zero(a.cols(), a.cols());
    Matrix sg = Matrix::Zero(b.cols(), b.cols());
    double resid_sq = 0.0;
    for (Index t = 0; t < n_; ++t) {
      residuals_[t] = x[t] - fit.F[t] * a.transpose() - b * fit.G[t].transpose();
      resid_sq += residuals_[t].squaredNorm();
      projected_F_[t] = complement_left(b, fit.F[t]);
      projected_G_[t] = complement_left(a, fit.G[t]);
      sf.noalias() += projected_F_[t].transpose() * projected_F_[t];
      sg.noalias() += projected_G_[t].transpose() * projected_G_[t];
    }
    const double inv_n = 1.0 / static_cast<double>(n_);
    covs_.sigma_F = detail::symmetrize(sf * inv_n);
    covs_.sigma_G = detail::symmetrize(sg * inv_n);
    resid_ms_ = resid_sq / static_cast<double>(x.stacked().size());
    data_ms_ = x.stacked().squaredNorm() / static_cast<double>(x.stacked().size());
  }

  /// (1/n) sum_t U_A' X_t' P_{B-perp} X_t U_A
  const Matrix& sigma_F() const noexcept { return covs_.sigma_F; }
  /// (1/n) sum_t U_B' X_t P_{A-perp} X_t' U_B
  const Matrix& sigma_G() const noexcept { return covs_.sigma_G; }
  const FactorCov& factor_cov() const noexcept { return covs_; }

  /// R_t = X_t - F_t U_A' - U_B G_t'
  const MatrixSeries& residuals() const noexcept { return residuals_; }

  double residual_mean_square() const noexcept { return resid_ms_; }

  /// Signal-by-noise covariance for row i of U_A (mode A) or U_B (mode B).
  ///
  /// The sandwich (1/n) sum_t [w' (x) M_t'] S_E [w (x) M_t] with
  /// S_E = (1/n) sum_s vec(R_s) vec(R_s)' is contracted as
  /// (1/n^2) sum_t M_t' C M_t with C = sum_s (R_s w)(R_s w)', so the
  /// (d1 d2)^2 noise covariance is never formed.
  RowCov row_cov(Mode mode, Index i) const {
    const bool is_a = mode == Mode::A;
    const Matrix& own = is_a ? fit_.U_A.matrix() : fit_.U_B.matrix();
    require(i >= 0 && i < own.rows(), ErrorKind::invalid_argument,
            std::string("row index out of range for mode ") + to_string(mode));
    // w = P_perp e_i on the side of the loading being inferred.
    Vector w = -own * own.row(i).transpose();
    w(i) += 1.0;
    const Index m = is_a ? x_.rows() : x_.cols();
    Matrix proj(m, n_);
    for (Index s = 0; s < n_; ++s)
      proj.col(s) = is_a ? Vector(residuals_[s] * w) : Vector(residuals_[s].transpose() * w);
    Matrix c = Matrix::Zero(m, m);
    c.selfadjointView<Eigen::Lower>().rankUpdate(proj);
    c = c.selfadjointView<Eigen::Lower>();

    const MatrixSeries& mt = is_a ? projected_F_ : projected_G_;
    const Index r = mt.cols();
    Matrix acc = Matrix::Zero(r, r);
    for (Index t = 0; t < n_; ++t) {
      const Matrix ct = c * mt[t];
      acc.noalias() += mt[t].transpose() * ct;
    }
    const double inv_n2 = 1.0 / (static_cast<double>(n_) * static_cast<double>(n_));
    return RowCov{i, detail::symmetrize(acc * inv_n2)};
  }

  /// Per-coordinate Wald intervals from Cov(row) ~ (1/n) S^{-1} S_row S^{-1}. They
  /// cover the rotated truth row e_i' U R.
  LoadingInference confidence_interval(Mode mode, Index i, double level) const {
    require(level > 0.0 && level < 1.0, ErrorKind::invalid_argument,
            "confidence level must lie in (0, 1)");
    const Matrix& scov = mode == Mode::A ? covs_.sigma_F : covs_.sigma_G;
    check_factor_cov(scov);
    check_residuals();
    const RowCov rc = row_cov(mode, i);
    if (detail::min_eig_ratio(rc.matrix) <= detail::kEigenFloor)
      fail(ErrorKind::ill_conditioned,
           "inference: signal-by-noise covariance is singular for row " + std::to_string(i));
    const SymmetricRoot root = detail::inverse_sqrt(rc.matrix);

    const Matrix sinv = scov.inverse();
    const Matrix cov = detail::symmetrize(sinv * rc.matrix * sinv) / static_cast<double>(n_);
    const boost::math::normal std_normal;
    const double z = boost::math::quantile(std_normal, 0.5 * (1.0 + level));

    LoadingInference out;
    out.mode = mode;
    out.row = i;
    out.level = level;
    out.estimate = (mode == Mode::A ? fit_.U_A : fit_.U_B).row(i);
    out.std_err = cov.diagonal().cwiseMax(0.0).cwiseSqrt();
    out.ci_lo = out.estimate - z * out.std_err;
    out.ci_hi = out.estimate + z * out.std_err;
    out.repair = root.repair;
    out.flagged = root.repair > detail::kRepairFlag;
    return out;
  }

  /// sqrt(n) S_row^{-1/2} S (estimate - center); rotations cancel in the plug-in form.
  Vector pivot(Mode mode, Index i, const Vector& center) const {
    const Matrix& scov = mode == Mode::A ? covs_.sigma_F : covs_.sigma_G;
    check_factor_cov(scov);
    check_residuals();
    const RowCov rc = row_cov(mode, i);
    const Vector est = (mode == Mode::A ? fit_.U_A : fit_.U_B).row(i);
    return std::sqrt(static_cast<double>(n_)) * detail::inverse_sqrt(rc.matrix).inv_sqrt * scov *
           (est - center);
  }

 private:
  static void check_factor_cov(const Matrix& s) {
    if (detail::min_eig_ratio(s) <= 1e-10)
      fail(ErrorKind::ill_conditioned, "inference: projected factor covariance is singular");
  }

  void check_residuals() const {
    if (!(resid_ms_ > 1e-14 * data_ms_))
      fail(ErrorKind::ill_conditioned,
           "inference: residuals vanish, signal-by-noise covariance is degenerate");
  }

  const MatrixSeries& x_;
  const MafmFit& fit_;
  Index n_;
  MatrixSeries residuals_;
  MatrixSeries projected_F_;  // P_{B-perp} F_t
  MatrixSeries projected_G_;  // P_{A-perp} G_t
  FactorCov covs_;
  double resid_ms_ = 0.0;
  double data_ms_ = 0.0;
};

inline Matrix sigma_f_hat(const MatrixSeries& x, const MafmFit& fit) {
  return PlugInInference(x, fit).sigma_F();
}

inline Matrix sigma_g_hat(const MatrixSeries& x, const MafmFit& fit) {
  return PlugInInference(x, fit).sigma_G();
}

inline MatrixSeries residual_series(const MatrixSeries& x, const MafmFit& fit) {
  return PlugInInference(x, fit).residuals();
}

inline RowCov sigma_a_hat(const MatrixSeries& x, const MafmFit& fit, Index i) {
  return PlugInInference(x, fit).row_cov(Mode::A, i);
}

inline RowCov sigma_b_hat(const MatrixSeries& x, const MafmFit& fit, Index j) {
  return PlugInInference(x, fit).row_cov(Mode::B, j);
}

inline LoadingInference loading_row_ci(const MatrixSeries& x, const MafmFit& fit, Mode mode,
                                       Index i, double level) {
  return PlugInInference(x, fit).confidence_interval(mode, i, level);
}

/// Population covariances of a simulated panel with i.i.d. N(0, sigma^2) noise.
///
/// Sigma_F = E[F~' P_{B-perp} F~] = (W L)' (sum_i [P]_ii Sigma_{f,i}) (W L), where
/// Sigma_{f,i} is the stationary covariance of factor row i; under i.i.d. noise
/// Sigma_{A,i} = sigma^2 ||P_{A-perp} e_i||^2 Sigma_F.
struct PopulationCovs {
  Matrix sigma_F;
  Matrix sigma_G;
  Matrix U_A;
  Matrix U_B;
  double sigma2 = 0.0;

  Matrix row_cov(Mode mode, Index i) const {
    const Matrix& u = mode == Mode::A ? U_A : U_B;
    require(i >= 0 && i < u.rows(), ErrorKind::invalid_argument, "row index out of range");
    const double leverage = 1.0 - u.row(i).squaredNorm();
    return sigma2 * leverage * (mode == Mode::A ? sigma_F : sigma_G);
  }
};

inline PopulationCovs population_covs(const SimTruth& truth) {
  auto projected = [](const Matrix& u_other, const std::vector<Matrix>& phis, const Matrix& w,
                      const Vector& lambda) {
    const Index r = w.rows();
    Matrix raw = Matrix::Zero(r, r);
    for (std::size_t i = 0; i < phis.size(); ++i) {
      const Index ii = static_cast<Index>(i);
      const double weight = 1.0 - u_other.row(ii).squaredNorm();
      raw += weight * var1_stationary_cov(phis[i], Matrix::Identity(r, r));
    }
    const Matrix scale = w * lambda.asDiagonal();
    return detail::symmetrize(scale.transpose() * raw * scale);
  };
  PopulationCovs out;
  out.U_A = truth.U_A;
  out.U_B = truth.U_B;
  out.sigma2 = truth.sigma_eps * truth.sigma_eps;
  out.sigma_F = projected(truth.U_B, truth.phi_F, truth.W_A, truth.lambda_A);
  out.sigma_G = projected(truth.U_A, truth.phi_G, truth.W_B, truth.lambda_B);
  return out;
}

enum class PivotKind { oracle, data_driven };

inline const char* to_string(PivotKind k) noexcept {
  return k == PivotKind::oracle ? "oracle" : "datadriven";
}

/// Procrustes-rotated truth row R' U' e_i for the fitted basis.
inline Vector rotated_truth_row(const MafmFit& fit, const Matrix& truth_u, Mode mode, Index i) {
  const Basis& est = mode == Mode::A ? fit.U_A : fit.U_B;
  const Matrix rot = procrustes_rotation(Basis(truth_u), est).rotation;
  return rot.transpose() * truth_u.row(i).transpose();
}

/// Oracle pivot sqrt(n) R' S_row^{-1/2} S R (U_hat' - R'U') e_i with population
/// covariances.
inline Vector oracle_pivot(const MafmFit& fit, const PopulationCovs& pop, Index n, Mode mode,
                           Index i) {
  const Matrix& truth_u = mode == Mode::A ? pop.U_A : pop.U_B;
  const Basis& est = mode == Mode::A ? fit.U_A : fit.U_B;
  const Matrix rot = procrustes_rotation(Basis(truth_u), est).rotation;
  const Vector diff = est.row(i) - rot.transpose() * truth_u.row(i).transpose();
  const Matrix& s = mode == Mode::A ? pop.sigma_F : pop.sigma_G;
  const Matrix root = detail::inverse_sqrt(pop.row_cov(mode, i)).inv_sqrt;
  return std::sqrt(static_cast<double>(n)) * rot.transpose() * root * s * rot * diff;
}

/// Standardized loading row against simulation truth, oracle or plug-in covariances.
inline Vector standardized_row(const MatrixSeries& x, const MafmFit& fit, const SimTruth& truth,
                               PivotKind kind, Mode mode, Index i) {
  if (kind == PivotKind::oracle) return oracle_pivot(fit, population_covs(truth), x.size(), mode, i);
  const Matrix& truth_u = mode == Mode::A ? truth.U_A : truth.U_B;
  return PlugInInference(x, fit).pivot(mode, i, rotated_truth_row(fit, truth_u, mode, i));
}

}  // namespace mafm
