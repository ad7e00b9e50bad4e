#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mafm/error.hpp"
#include "mafm/linalg.hpp"
#include "mafm/series.hpp"

namespace mafm {

struct LoadingPairEstimate {
  Basis U_A;  // d2 x r1
  Basis U_B;  // d1 x r2
};

/// Successive projector changes of one refinement iteration.
struct IterationChange {
  double b = 0.0;
  double a = 0.0;
};

struct MafmFit {
  Basis U_A;
  Basis U_B;
  MatrixSeries F;  // d1 x r1 per t
  MatrixSeries G;  // d2 x r2 per t
  int iterations = 0;
  std::vector<IterationChange> trace;
  bool converged = false;
};

/// Observer hook for one loading update inside the refinement loop.
struct UpdateEvent {
  int iteration = 0;
  char mode = 'B';             // which loading was updated
  const Basis* projected_off;  // estimate whose complement was used
  const Basis* result;
};

struct CompasOptions {
  double eps = 1e-8;
  int max_iter = 100;
  std::function<void(const UpdateEvent&)> observer;
};

namespace detail {

/// Relative floor on the r-th eigenvalue of a Gram matrix.
inline constexpr double kRankGuard = 1e-12;

/// sum_t Y_t Y_t' where Y_t = rows [t*d, (t+1)*d) of a vertically stacked matrix.
inline Matrix gram_of_row_blocks(const Matrix& y, Index d, Index n) {
  const Index k = y.cols();
  Matrix wide(d, n * k);
  for (Index t = 0; t < n; ++t) wide.middleCols(t * k, k) = y.middleRows(t * d, d);
  Matrix g = Matrix::Zero(d, d);
  g.selfadjointView<Eigen::Lower>().rankUpdate(wide);
  return g.selfadjointView<Eigen::Lower>();
}

/// sum_t Z_t' Z_t where Z_t = columns [t*d, (t+1)*d) of a horizontally stacked matrix.
inline Matrix gram_of_col_blocks(const Matrix& z, Index d, Index n) {
  const Index k = z.rows();
  Matrix tall(n * k, d);
  for (Index t = 0; t < n; ++t) tall.middleRows(t * k, k) = z.middleCols(t * d, d);
  Matrix g = Matrix::Zero(d, d);
  g.selfadjointView<Eigen::Lower>().rankUpdate(tall.transpose());
  return g.selfadjointView<Eigen::Lower>();
}

/// Cached stacked layouts and modewise Gram matrices of one panel.
class GramCache {
 public:
  explicit GramCache(const MatrixSeries& x)
      : x_(x), d1_(x.rows()), d2_(x.cols()), n_(x.size()), tall_(x.stacked_rows()) {
    const double inv_n = 1.0 / static_cast<double>(n_);
    row_gram_ = Matrix::Zero(d1_, d1_);
    row_gram_.selfadjointView<Eigen::Lower>().rankUpdate(x.stacked(), inv_n);
    row_gram_ = row_gram_.selfadjointView<Eigen::Lower>();
    col_gram_ = Matrix::Zero(d2_, d2_);
    col_gram_.selfadjointView<Eigen::Lower>().rankUpdate(tall_.transpose(), inv_n);
    col_gram_ = col_gram_.selfadjointView<Eigen::Lower>();
  }

  /// (1/n) sum_t X_t X_t'
  const Matrix& row_gram() const noexcept { return row_gram_; }
  /// (1/n) sum_t X_t' X_t
  const Matrix& col_gram() const noexcept { return col_gram_; }

  /// (1/n) sum_t X_t P X_t' with P the projector onto the first s columns of the
  /// orthogonal complement of `a`. For the full complement this is the row Gram minus
  /// the low-rank part along `a`, which costs O(n d1 d2 r1) instead of O(n d1 d2^2).
  Matrix row_gram_off(const Basis& a, Index s) const {
    const double inv_n = 1.0 / static_cast<double>(n_);
    if (s == d2_ - a.rank()) {
      const Matrix y = tall_ * a.matrix();
      return row_gram_ - inv_n * gram_of_row_blocks(y, d1_, n_);
    }
    const Matrix v = orth_complement(a).matrix().leftCols(s);
    return inv_n * gram_of_row_blocks(tall_ * v, d1_, n_);
  }

  /// (1/n) sum_t X_t' P X_t with P the projector onto the first s columns of the
  /// orthogonal complement of `b`.
  Matrix col_gram_off(const Basis& b, Index s) const {
    const double inv_n = 1.0 / static_cast<double>(n_);
    if (s == d1_ - b.rank()) {
      const Matrix z = b.matrix().transpose() * x_.stacked();
      return col_gram_ - inv_n * gram_of_col_blocks(z, d2_, n_);
    }
    const Matrix v = orth_complement(b).matrix().leftCols(s);
    return inv_n * gram_of_col_blocks(v.transpose() * x_.stacked(), d2_, n_);
  }

 private:
  const MatrixSeries& x_;
  Index d1_, d2_, n_;
  Matrix tall_;
  Matrix row_gram_;
  Matrix col_gram_;
};

/// Leading r-dimensional eigenspace, rejecting Grams whose r-th eigenvalue falls
/// below kRankGuard * trace / p.
inline Basis guarded_leading_space(const Matrix& gram, Index r, ErrorKind on_degenerate,
                                   const char* what) {
  TopEigen te = top_eigen(gram, r);
  const double floor = kRankGuard * te.trace / static_cast<double>(gram.rows());
  if (!(te.trace > 0.0) || te.values(r - 1) <= floor) {
    fail(on_degenerate, std::string(what) + ": Gram matrix has rank below " + std::to_string(r) +
                            " (r-th eigenvalue " + std::to_string(te.values(r - 1)) +
                            ", trace " + std::to_string(te.trace) + ")");
  }
  return std::move(te.vectors);
}

inline void check_panel(const MatrixSeries& x, Index r1, Index r2, const char* what) {
  require(x.size() >= 1, ErrorKind::invalid_argument, std::string(what) + ": empty series");
  require(x.all_finite(), ErrorKind::invalid_input, std::string(what) + ": non-finite data");
  require(r1 >= 1 && r1 < x.cols(), ErrorKind::invalid_argument,
          std::string(what) + ": r1 must satisfy 1 <= r1 < d2");
  require(r2 >= 1 && r2 < x.rows(), ErrorKind::invalid_argument,
          std::string(what) + ": r2 must satisfy 1 <= r2 < d1");
}

inline LoadingPairEstimate mine_cached(const GramCache& cache, Index r1, Index r2) {
  Basis ua = guarded_leading_space(cache.col_gram(), r1, ErrorKind::invalid_input, "mine");
  Basis ub = guarded_leading_space(cache.row_gram(), r2, ErrorKind::invalid_input, "mine");
  return {std::move(ua), std::move(ub)};
}

}  // namespace detail

/// Factor series from final loadings: F_t = P_{B-perp} X_t U_A and G_t' = U_B' X_t.
struct FactorSeries {
  MatrixSeries F;
  MatrixSeries G;
};

inline FactorSeries estimate_factors(const MatrixSeries& x, const Basis& ua, const Basis& ub) {
  require(ua.dim() == x.cols() && ub.dim() == x.rows(), ErrorKind::invalid_argument,
          "estimate_factors: basis dimensions do not match the panel");
  const Index n = x.size();
  FactorSeries out{MatrixSeries(x.rows(), ua.rank(), n), MatrixSeries(x.cols(), ub.rank(), n)};
  const Matrix& a = ua.matrix();
  const Matrix& b = ub.matrix();
  for (Index t = 0; t < n; ++t) {
    const Matrix xa = x[t] * a;
    out.F[t] = complement_left(b, xa);
    out.G[t].noalias() = x[t].transpose() * b;
  }
  return out;
}

/// X_t - P_{B-perp} X_t P_{A-perp}.
inline MatrixSeries fitted_values(const MatrixSeries& x, const Basis& ua, const Basis& ub) {
  require(ua.dim() == x.cols() && ub.dim() == x.rows(), ErrorKind::invalid_argument,
          "fitted_values: basis dimensions do not match the panel");
  MatrixSeries out(x.rows(), x.cols(), x.size());
  for (Index t = 0; t < x.size(); ++t) {
    const Matrix resid = complement_right(complement_left(ub.matrix(), x[t]), ua.matrix());
    out[t] = x[t] - resid;
  }
  return out;
}

/// Initialization from the top eigenvectors of the two modewise Gram matrices.
inline LoadingPairEstimate mine(const MatrixSeries& x, Index r1, Index r2) {
  detail::check_panel(x, r1, r2, "mine");
  const detail::GramCache cache(x);
  return detail::mine_cached(cache, r1, r2);
}

namespace detail {

inline MafmFit refine(const MatrixSeries& x, const GramCache& cache, Index r1, Index r2,
                      Index s1, Index s2, const LoadingPairEstimate& init,
                      const CompasOptions& opt) {
  require(init.U_A.dim() == x.cols() && init.U_A.rank() == r1, ErrorKind::invalid_argument,
          "compas: A initialization must be d2 x r1");
  require(init.U_B.dim() == x.rows() && init.U_B.rank() == r2, ErrorKind::invalid_argument,
          "compas: B initialization must be d1 x r2");
  require(opt.eps > 0.0, ErrorKind::invalid_argument, "compas: eps must be > 0");
  require(opt.max_iter >= 0, ErrorKind::invalid_argument, "compas: T0 must be >= 0");

  Basis ua = init.U_A;
  Basis ub = init.U_B;
  std::vector<IterationChange> trace;
  bool converged = false;
  int it = 0;
  while (it < opt.max_iter) {
    ++it;
    // B uses the previous A estimate; A uses the B estimate from this iteration.
    Basis ub_next = guarded_leading_space(cache.row_gram_off(ua, s2), r2,
                                          ErrorKind::degenerate_signal, "compas (B update)");
    if (opt.observer) opt.observer(UpdateEvent{it, 'B', &ua, &ub_next});
    Basis ua_next = guarded_leading_space(cache.col_gram_off(ub_next, s1), r1,
                                          ErrorKind::degenerate_signal, "compas (A update)");
    if (opt.observer) opt.observer(UpdateEvent{it, 'A', &ub_next, &ua_next});

    IterationChange change{subspace_distance(ub_next, ub).value,
                           subspace_distance(ua_next, ua).value};
    trace.push_back(change);
    ua = std::move(ua_next);
    ub = std::move(ub_next);
    if (change.b <= opt.eps && change.a <= opt.eps) {
      converged = true;
      break;
    }
  }
  FactorSeries fs = estimate_factors(x, ua, ub);
  return MafmFit{std::move(ua), std::move(ub), std::move(fs.F), std::move(fs.G), it,
                 std::move(trace), converged};
}

}  // namespace detail

/// Complement-projected alternating refinement over the full orthogonal complements.
inline MafmFit compas(const MatrixSeries& x, Index r1, Index r2, const LoadingPairEstimate& init,
                      const CompasOptions& opt = {}) {
  detail::check_panel(x, r1, r2, "compas");
  const detail::GramCache cache(x);
  return detail::refine(x, cache, r1, r2, x.rows() - r2, x.cols() - r1, init, opt);
}

/// Refinement projecting onto the first s1 columns of the B-complement and the first
/// s2 columns of the A-complement.
inline MafmFit compas_partial(const MatrixSeries& x, Index r1, Index r2, Index s1, Index s2,
                              const LoadingPairEstimate& init, const CompasOptions& opt = {}) {
  detail::check_panel(x, r1, r2, "compas_partial");
  require(s1 >= r2 && s1 <= x.rows() - r2, ErrorKind::invalid_argument,
          "compas_partial: s1 must satisfy r2 <= s1 <= d1 - r2");
  require(s2 >= r1 && s2 <= x.cols() - r1, ErrorKind::invalid_argument,
          "compas_partial: s2 must satisfy r1 <= s2 <= d2 - r1");
  const detail::GramCache cache(x);
  return detail::refine(x, cache, r1, r2, s1, s2, init, opt);
}

/// MINE followed by COMPAS, sharing one Gram cache.
inline MafmFit fit_mafm(const MatrixSeries& x, Index r1, Index r2, const CompasOptions& opt = {}) {
  detail::check_panel(x, r1, r2, "fit");
  const detail::GramCache cache(x);
  const LoadingPairEstimate init = detail::mine_cached(cache, r1, r2);
  return detail::refine(x, cache, r1, r2, x.rows() - r2, x.cols() - r1, init, opt);
}

/// Wraps an initialization as a fit with no refinement.
inline MafmFit fit_from_bases(const MatrixSeries& x, const LoadingPairEstimate& est) {
  FactorSeries fs = estimate_factors(x, est.U_A, est.U_B);
  return MafmFit{est.U_A, est.U_B, std::move(fs.F), std::move(fs.G), 0, {}, false};
}

}  // namespace mafm
