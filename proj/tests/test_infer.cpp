#include <cmath>

#include <gtest/gtest.h>

#include "mafm/infer.hpp"
#include "test_support.hpp"

namespace mafm {
namespace {

using testing::kron;
using testing::max_abs;
using testing::random_orthonormal;
using testing::vec;

using testing::brute_force_row_cov;

TEST(RowCov, StreamingMatchesKroneckerBruteForce) {
  struct Shape {
    Index d1, d2, r1, r2;
  };
  const Shape shapes[] = {{2, 2, 1, 1}, {3, 3, 1, 1}, {4, 4, 1, 2}, {2, 8, 3, 1},
                          {4, 3, 2, 1}, {3, 5, 2, 2}, {8, 2, 1, 1}};
  std::uint64_t seed = 10;
  for (const Shape& s : shapes) {
    Rng rng(seed++);
    testing::ExactPanel p = testing::exact_panel(s.d1, s.d2, s.r1, s.r2, 25, rng);
    for (Index t = 0; t < 25; ++t) p.X[t] += rng.gaussian(s.d1, s.d2);
    const MafmFit fit = fit_from_bases(p.X, {Basis(p.U_A), Basis(p.U_B)});
    const PlugInInference inf(p.X, fit);
    for (Index i = 0; i < s.d2; ++i) {
      const Matrix oracle = brute_force_row_cov(p.X, fit, Mode::A, i);
      EXPECT_LT(max_abs(inf.row_cov(Mode::A, i).matrix - oracle), 1e-12 * (1.0 + max_abs(oracle)));
    }
    for (Index j = 0; j < s.d1; ++j) {
      const Matrix oracle = brute_force_row_cov(p.X, fit, Mode::B, j);
      EXPECT_LT(max_abs(inf.row_cov(Mode::B, j).matrix - oracle), 1e-12 * (1.0 + max_abs(oracle)));
    }
  }
}

TEST(RowCov, HandComputedFixture) {
  // U_A = U_B = e_1: residual keeps only entry (2,2), F_t = (0, x21), N_t = (0, x12).
  Matrix x1(2, 2), x2(2, 2);
  x1 << 1, 2, 3, 4;
  x2 << 5, 6, 7, 8;
  const MatrixSeries x = MatrixSeries::from_slices({x1, x2});
  const Matrix e1 = Vector::Unit(2, 0);
  const MafmFit fit = fit_from_bases(x, {Basis(e1), Basis(e1)});
  const PlugInInference inf(x, fit);
  EXPECT_NEAR(inf.sigma_F()(0, 0), 29.0, 1e-12);
  EXPECT_NEAR(inf.sigma_G()(0, 0), 20.0, 1e-12);
  EXPECT_NEAR(inf.row_cov(Mode::A, 1).matrix(0, 0), 1160.0, 1e-10);
  EXPECT_NEAR(inf.row_cov(Mode::B, 1).matrix(0, 0), 800.0, 1e-10);
  EXPECT_NEAR(inf.row_cov(Mode::A, 0).matrix(0, 0), 0.0, 1e-12);
  EXPECT_NEAR(inf.residuals()[0](1, 1), 4.0, 1e-12);
  EXPECT_NEAR(inf.residuals()[1].cwiseAbs().sum(), 8.0, 1e-12);
}

TEST(RowCov, ResidualsEqualDoubleProjection) {
  const Index d1 = 9, d2 = 7;
  Rng rng(77);
  testing::ExactPanel p = testing::exact_panel(d1, d2, 2, 3, 30, rng);
  for (Index t = 0; t < 30; ++t) p.X[t] += rng.gaussian(d1, d2);
  const MafmFit fit = fit_mafm(p.X, 2, 3);
  const MatrixSeries r = residual_series(p.X, fit);
  const MatrixSeries fitted = fitted_values(p.X, fit.U_A, fit.U_B);
  for (Index t = 0; t < 30; ++t) EXPECT_LT(max_abs(r[t] - (p.X[t] - fitted[t])), 1e-12);
}

SimConfig identity_config() {
  SimConfig cfg;
  cfg.d1 = 20;
  cfg.d2 = 20;
  cfg.r1 = 3;
  cfg.r2 = 2;
  cfg.n = 2000;
  cfg.seed = 31;
  return cfg;
}

double rel_frobenius(const Matrix& got, const Matrix& want) { return (got - want).norm() / want.norm(); }

TEST(RowCov, IidNoiseIdentityWithExactBases) {
  const SimConfig cfg = identity_config();
  const SimResult sim = simulate(cfg);
  const MafmFit fit = fit_from_bases(sim.X, {Basis(sim.truth.U_A), Basis(sim.truth.U_B)});
  const PlugInInference inf(sim.X, fit);
  const PopulationCovs pop = population_covs(sim.truth);
  // Unbiased noise variance: the residual lives on a (d1-r2)(d2-r1) dimensional space.
  double ss = 0.0;
  for (Index t = 0; t < cfg.n; ++t) ss += inf.residuals()[t].squaredNorm();
  const double sigma2 = ss / static_cast<double>(cfg.n * (cfg.d1 - cfg.r2) * (cfg.d2 - cfg.r1));
  EXPECT_NEAR(sigma2, 1.0, 0.02);
  for (Index i = 0; i < cfg.d2; ++i) {
    const double lev = 1.0 - sim.truth.U_A.row(i).squaredNorm();
    const Matrix got = inf.row_cov(Mode::A, i).matrix;
    EXPECT_LT(rel_frobenius(got, sigma2 * lev * inf.sigma_F()), 0.1) << "row " << i;
    EXPECT_LT(rel_frobenius(got, pop.row_cov(Mode::A, i)), 0.1) << "row " << i;
  }
  for (Index j = 0; j < cfg.d1; ++j)
    EXPECT_LT(rel_frobenius(inf.row_cov(Mode::B, j).matrix, pop.row_cov(Mode::B, j)), 0.1)
        << "row " << j;
}

// Monte Carlo estimate of E[F~' P_{B-perp} F~] from independent stationary draws,
// compared with the analytic population value.
TEST(PopulationCovs, FactorCovarianceMatchesMonteCarlo) {
  SimConfig cfg;
  cfg.d1 = 12;
  cfg.d2 = 10;
  cfg.r1 = 2;
  cfg.r2 = 2;
  cfg.n = 4000;
  cfg.sigma_eps = 0.0;
  cfg.seed = 4;
  const SimResult sim = simulate(cfg);
  const PopulationCovs pop = population_covs(sim.truth);
  const Matrix pb = Matrix::Identity(cfg.d1, cfg.d1) - sim.truth.U_B * sim.truth.U_B.transpose();
  const Matrix pa = Matrix::Identity(cfg.d2, cfg.d2) - sim.truth.U_A * sim.truth.U_A.transpose();
  Matrix mf = Matrix::Zero(2, 2), mg = Matrix::Zero(2, 2);
  for (Index t = 0; t < cfg.n; ++t) {
    mf += sim.truth.F[t].transpose() * pb * sim.truth.F[t];
    mg += sim.truth.G[t].transpose() * pa * sim.truth.G[t];
  }
  mf /= static_cast<double>(cfg.n);
  mg /= static_cast<double>(cfg.n);
  EXPECT_LT(rel_frobenius(mf, pop.sigma_F), 0.1);
  EXPECT_LT(rel_frobenius(mg, pop.sigma_G), 0.1);
  EXPECT_DOUBLE_EQ(pop.sigma2, 0.0);
}

TEST(ConfidenceInterval, ShapeAndSymmetry) {
  SimConfig cfg;
  cfg.d1 = 15;
  cfg.d2 = 12;
  cfg.r1 = 2;
  cfg.r2 = 2;
  cfg.n = 200;
  cfg.seed = 17;
  const SimResult sim = simulate(cfg);
  const MafmFit fit = fit_mafm(sim.X, 2, 2);
  const PlugInInference inf(sim.X, fit);
  for (Index i = 0; i < cfg.d2; ++i) {
    const LoadingInference ci95 = inf.confidence_interval(Mode::A, i, 0.95);
    const LoadingInference ci99 = inf.confidence_interval(Mode::A, i, 0.99);
    EXPECT_LT(max_abs(ci95.estimate - fit.U_A.row(i).transpose()), 1e-15);
    EXPECT_TRUE((ci95.ci_lo.array() <= ci95.estimate.array()).all());
    EXPECT_TRUE((ci95.estimate.array() <= ci95.ci_hi.array()).all());
    EXPECT_LT(max_abs((ci95.ci_hi - ci95.estimate) - (ci95.estimate - ci95.ci_lo)), 1e-14);
    EXPECT_LT(max_abs(ci95.ci_hi - ci95.estimate - 1.959963984540054 * ci95.std_err), 1e-12);
    const Vector ratio = (ci99.ci_hi - ci99.ci_lo).cwiseQuotient(ci95.ci_hi - ci95.ci_lo);
    for (Index k = 0; k < ratio.size(); ++k) EXPECT_NEAR(ratio(k), 2.5758293035489 / 1.959963984540054, 1e-9);
    EXPECT_FALSE(ci95.flagged);
  }
  const LoadingInference cb = inf.confidence_interval(Mode::B, 3, 0.9);
  EXPECT_EQ(cb.estimate.size(), 2);
  EXPECT_THROW(inf.confidence_interval(Mode::A, cfg.d2, 0.95), Error);
  EXPECT_THROW(inf.confidence_interval(Mode::A, 0, 1.0), Error);
}

TEST(ConfidenceInterval, StandardErrorMatchesSandwich) {
  SimConfig cfg;
  cfg.d1 = 10;
  cfg.d2 = 10;
  cfg.r1 = 2;
  cfg.r2 = 1;
  cfg.n = 150;
  cfg.seed = 18;
  const SimResult sim = simulate(cfg);
  const MafmFit fit = fit_mafm(sim.X, 2, 1);
  const PlugInInference inf(sim.X, fit);
  const Matrix sinv = inf.sigma_F().inverse();
  const Matrix cov = sinv * brute_force_row_cov(sim.X, fit, Mode::A, 4) * sinv / 150.0;
  const LoadingInference ci = inf.confidence_interval(Mode::A, 4, 0.95);
  EXPECT_LT(max_abs(ci.std_err - cov.diagonal().cwiseSqrt()), 1e-12);
}

TEST(ConfidenceInterval, NoiseFreePanelIsIllConditioned) {
  Rng rng(3);
  const testing::ExactPanel p = testing::exact_panel(8, 6, 2, 2, 40, rng);
  const MafmFit fit = fit_from_bases(p.X, {Basis(p.U_A), Basis(p.U_B)});
  try {
    loading_row_ci(p.X, fit, Mode::A, 0, 0.95);
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.kind(), ErrorKind::ill_conditioned);
  }
}

TEST(InverseSqrt, ClipsNegativeEigenvaluesAndReportsRepair) {
  Matrix s(2, 2);
  s << 4.0, 0.0, 0.0, -0.2;
  const SymmetricRoot root = detail::inverse_sqrt(s);
  EXPECT_NEAR(root.repair, 0.05, 1e-15);
  EXPECT_NEAR(root.inv_sqrt(0, 0), 0.5, 1e-15);
  Matrix pd(2, 2);
  pd << 2.0, 0.5, 0.5, 1.0;
  const SymmetricRoot r2 = detail::inverse_sqrt(pd);
  EXPECT_EQ(r2.repair, 0.0);
  EXPECT_LT(max_abs(r2.inv_sqrt * pd * r2.inv_sqrt - Matrix::Identity(2, 2)), 1e-12);
}

TEST(Pivot, OracleAndPlugInAgreeOnLargeSample) {
  SimConfig cfg;
  cfg.d1 = 20;
  cfg.d2 = 20;
  cfg.r1 = 2;
  cfg.r2 = 2;
  cfg.n = 1000;
  cfg.seed = 57;
  const SimResult sim = simulate(cfg);
  const MafmFit fit = fit_mafm(sim.X, 2, 2);
  for (Index i = 0; i < 4; ++i) {
    const Vector o = standardized_row(sim.X, fit, sim.truth, PivotKind::oracle, Mode::A, i);
    const Vector d = standardized_row(sim.X, fit, sim.truth, PivotKind::data_driven, Mode::A, i);
    ASSERT_EQ(o.size(), 2);
    // Both are O(1); with consistent covariances they differ by a small rotation-free amount.
    EXPECT_LT(o.norm(), 6.0);
    EXPECT_LT((o - d).norm(), 0.35 * (1.0 + o.norm()));
  }
}

TEST(Pivot, RotatedTruthIsClosestPointOfTheOrbit) {
  SimConfig cfg;
  cfg.d1 = 15;
  cfg.d2 = 15;
  cfg.r1 = 3;
  cfg.r2 = 1;
  cfg.n = 300;
  cfg.seed = 58;
  const SimResult sim = simulate(cfg);
  const MafmFit fit = fit_mafm(sim.X, 3, 1);
  Matrix rotated(cfg.d2, 3);
  for (Index i = 0; i < cfg.d2; ++i)
    rotated.row(i) = rotated_truth_row(fit, sim.truth.U_A, Mode::A, i).transpose();
  const double best = (fit.U_A.matrix() - rotated).norm();
  Rng rng(1);
  for (int k = 0; k < 50; ++k) {
    const Matrix q = random_orthonormal(3, 3, rng);
    EXPECT_GE((fit.U_A.matrix() - sim.truth.U_A * q).norm(), best - 1e-12);
  }
}

}  // namespace
}  // namespace mafm
