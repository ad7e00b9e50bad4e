#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "mafm/error.hpp"
#include "mafm/linalg.hpp"
#include "mafm/rng.hpp"
#include "mafm/series.hpp"

namespace mafm {

using EigenPair = std::pair<double, double>;

/// Highly persistent, moderately persistent and oscillatory AR eigenvalue pairs.
inline std::vector<EigenPair> default_eigen_pool() {
  return {{0.90, 0.70}, {0.50, -0.50}, {-0.90, -0.70}};
}

struct SimConfig {
  Index d1 = 50;
  Index d2 = 50;
  Index r1 = 4;
  Index r2 = 2;
  Index n = 200;
  double delta0 = 0.0;
  double delta1 = 0.0;
  double sigma_eps = 1.0;
  std::vector<EigenPair> eigen_pool = default_eigen_pool();
  Index burn_in = 200;
  std::uint64_t seed = 0;

  /// Throws invalid_argument naming the offending field.
  void validate() const {
    auto bad = [](const std::string& field, const std::string& why) {
      fail(ErrorKind::invalid_argument, "SimConfig." + field + ": " + why);
    };
    if (d1 < 1) bad("d1", "must be >= 1");
    if (d2 < 1) bad("d2", "must be >= 1");
    if (n < 1) bad("n", "must be >= 1");
    if (r1 < 0) bad("r1", "must be >= 0");
    if (r2 < 0) bad("r2", "must be >= 0");
    if (r1 >= d2) bad("r1", "must be < d2 so the A-complement is nonempty");
    if (r2 >= d1) bad("r2", "must be < d1 so the B-complement is nonempty");
    if (!(delta0 >= 0.0 && delta0 < 1.0)) bad("delta0", "must lie in [0, 1)");
    if (!(delta1 >= 0.0 && delta1 < 1.0)) bad("delta1", "must lie in [0, 1)");
    if (delta0 > delta1) bad("delta0", "must be <= delta1");
    if (!(sigma_eps >= 0.0) || !std::isfinite(sigma_eps)) bad("sigma_eps", "must be finite and >= 0");
    if (burn_in < 0) bad("burn_in", "must be >= 0");
    if (eigen_pool.empty()) bad("eigen_pool", "must be nonempty");
    for (const auto& [a, b] : eigen_pool)
      if (!(std::abs(a) < 1.0 && std::abs(b) < 1.0)) bad("eigen_pool", "every |phi| must be < 1");
  }
};

/// One loading matrix together with its singular decomposition U diag(s) W'.
struct LoadingDraw {
  Matrix matrix;
  Matrix left;
  Vector singular_values;
  Matrix right;
};

struct LoadingPair {
  LoadingDraw a;  // d2 x r1
  LoadingDraw b;  // d1 x r2
};

/// Ground truth retained by the generator. Zero-rank modes give empty matrices.
struct SimTruth {
  Matrix A, B;
  Matrix U_A, U_B;
  Matrix W_A, W_B;
  Vector lambda_A, lambda_B;
  MatrixSeries F;  // canonical row factors, d1 x r1 per t
  MatrixSeries G;  // canonical column factors, d2 x r2 per t
  std::vector<Matrix> phi_F, phi_G;
  double sigma_eps = 0.0;
  std::optional<MatrixSeries> noise;
};

struct SimResult {
  MatrixSeries X;
  SimTruth truth;
};

namespace detail {

inline Matrix orthonormal_draw(Index rows, Index cols, Rng& rng) {
  if (rows == 0 || cols == 0) return Matrix(rows, cols);
  Eigen::HouseholderQR<Matrix> qr(rng.gaussian(rows, cols));
  return qr.householderQ() * Matrix::Identity(rows, cols);
}

inline double spectral_radius(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::EigenSolver<Matrix> es(m, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace detail

/// Loading with singular values geometrically spaced from d^{(1-delta0)/2} down to
/// d^{(1-delta1)/2}; r = 1 takes the larger endpoint.
inline LoadingDraw gen_loading(Index d, Index r, double delta0, double delta1, Rng& rng) {
  require(r >= 0 && r <= d, ErrorKind::invalid_argument,
          "gen_loading: rank " + std::to_string(r) + " exceeds dimension " + std::to_string(d));
  require(0.0 <= delta0 && delta0 <= delta1 && delta1 < 1.0, ErrorKind::invalid_argument,
          "gen_loading: need 0 <= delta0 <= delta1 < 1");
  LoadingDraw out;
  out.left = detail::orthonormal_draw(d, r, rng);
  out.right = detail::orthonormal_draw(r, r, rng);
  out.singular_values.resize(r);
  const double dd = static_cast<double>(d);
  const double hi = std::pow(dd, (1.0 - delta0) / 2.0);
  const double lo = std::pow(dd, (1.0 - delta1) / 2.0);
  for (Index k = 0; k < r; ++k) {
    const double frac = r == 1 ? 0.0 : static_cast<double>(k) / static_cast<double>(r - 1);
    out.singular_values(k) = hi * std::pow(lo / hi, frac);
  }
  out.matrix = out.left * out.singular_values.asDiagonal() * out.right.transpose();
  return out;
}

/// Q diag(phi1 x ceil(r/2), phi2 x (r - ceil(r/2))) Q' with (phi1, phi2) drawn
/// uniformly from the pool and Q orthonormalized from a Gaussian draw.
inline Matrix gen_var1_coeff(Index r, const std::vector<EigenPair>& pool, Rng& rng) {
  require(!pool.empty(), ErrorKind::invalid_argument, "gen_var1_coeff: empty eigenvalue pool");
  require(r >= 0, ErrorKind::invalid_argument, "gen_var1_coeff: negative rank");
  const auto [phi1, phi2] = pool[rng.uniform_index(pool.size())];
  require(std::abs(phi1) < 1.0 && std::abs(phi2) < 1.0, ErrorKind::invalid_argument,
          "gen_var1_coeff: eigenvalues must satisfy |phi| < 1");
  const Index head = (r + 1) / 2;
  Vector diag(r);
  for (Index k = 0; k < r; ++k) diag(k) = k < head ? phi1 : phi2;
  const Matrix q = detail::orthonormal_draw(r, r, rng);
  Matrix phi = q * diag.asDiagonal() * q.transpose();
  require(detail::spectral_radius(phi) < 1.0, ErrorKind::invalid_argument,
          "gen_var1_coeff: non-stationary coefficient");
  return phi;
}

inline LoadingPair draw_loadings(const SimConfig& cfg, Rng& rng) {
  LoadingPair out;
  out.a = gen_loading(cfg.d2, cfg.r1, cfg.delta0, cfg.delta1, rng);
  out.b = gen_loading(cfg.d1, cfg.r2, cfg.delta0, cfg.delta1, rng);
  return out;
}

/// Panel for fixed loadings: VAR(1) factor rows, burn-in discarded, i.i.d. Gaussian noise.
inline SimResult simulate_panel(const SimConfig& cfg, const LoadingPair& loadings, Rng& rng,
                                bool keep_noise = true) {
  cfg.validate();
  const Index d1 = cfg.d1, d2 = cfg.d2, r1 = cfg.r1, r2 = cfg.r2, n = cfg.n;
  require(loadings.a.matrix.rows() == d2 && loadings.a.matrix.cols() == r1 &&
              loadings.b.matrix.rows() == d1 && loadings.b.matrix.cols() == r2,
          ErrorKind::invalid_argument, "simulate_panel: loading shapes do not match config");

  SimResult res{MatrixSeries(d1, d2, n), SimTruth{}};
  SimTruth& truth = res.truth;
  truth.A = loadings.a.matrix;
  truth.B = loadings.b.matrix;
  truth.U_A = loadings.a.left;
  truth.U_B = loadings.b.left;
  truth.W_A = loadings.a.right;
  truth.W_B = loadings.b.right;
  truth.lambda_A = loadings.a.singular_values;
  truth.lambda_B = loadings.b.singular_values;
  truth.sigma_eps = cfg.sigma_eps;
  truth.F = MatrixSeries(d1, r1, n);
  truth.G = MatrixSeries(d2, r2, n);
  if (keep_noise) truth.noise = MatrixSeries(d1, d2, n);

  if (r1 > 0)
    for (Index i = 0; i < d1; ++i) truth.phi_F.push_back(gen_var1_coeff(r1, cfg.eigen_pool, rng));
  if (r2 > 0)
    for (Index j = 0; j < d2; ++j) truth.phi_G.push_back(gen_var1_coeff(r2, cfg.eigen_pool, rng));

  Matrix f = rng.gaussian(d1, r1);
  Matrix g = rng.gaussian(d2, r2);
  const Matrix scale_a = truth.W_A * truth.lambda_A.asDiagonal();
  const Matrix scale_b = truth.W_B * truth.lambda_B.asDiagonal();

  auto step = [&rng](Matrix& state, const std::vector<Matrix>& phis) {
    if (state.cols() == 0) return;
    const Matrix innov = rng.gaussian(state.rows(), state.cols());
    for (Index i = 0; i < state.rows(); ++i)
      state.row(i) = (phis[static_cast<std::size_t>(i)] * state.row(i).transpose() +
                      innov.row(i).transpose())
                         .transpose();
  };

  for (Index s = 0; s < cfg.burn_in + n; ++s) {
    step(f, truth.phi_F);
    step(g, truth.phi_G);
    if (s < cfg.burn_in) continue;
    const Index t = s - cfg.burn_in;
    auto x = res.X[t];
    x.noalias() = f * truth.A.transpose();
    x.noalias() += truth.B * g.transpose();
    if (cfg.sigma_eps > 0.0) {
      const Matrix e = cfg.sigma_eps * rng.gaussian(d1, d2);
      x += e;
      if (keep_noise) (*truth.noise)[t] = e;
    }
    truth.F[t] = f * scale_a;
    truth.G[t] = g * scale_b;
  }
  return res;
}

/// Full draw from a single seed: loadings first, then the panel.
inline SimResult simulate(const SimConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const LoadingPair loadings = draw_loadings(cfg, rng);
  return simulate_panel(cfg, loadings, rng, true);
}

/// Stationary covariance S = Phi S Phi' + Q of a stable VAR(1), by solving the
/// vectorized system (I - Phi (x) Phi) vec(S) = vec(Q).
inline Matrix var1_stationary_cov(const Matrix& phi, const Matrix& innov_cov) {
  const Index r = phi.rows();
  if (r == 0) return Matrix(0, 0);
  Matrix kron(r * r, r * r);
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < r; ++j) kron.block(i * r, j * r, r, r) = phi(i, j) * phi;
  const Matrix lhs = Matrix::Identity(r * r, r * r) - kron;
  const Vector rhs = Eigen::Map<const Vector>(innov_cov.data(), r * r);
  const Vector sol = lhs.partialPivLu().solve(rhs);
  Matrix s = Eigen::Map<const Matrix>(sol.data(), r, r);
  return 0.5 * (s + s.transpose());
}

}  // namespace mafm
