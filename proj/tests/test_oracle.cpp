#include <cmath>

#include <Eigen/Cholesky>

#include <gtest/gtest.h>

#include "soad/errors.hpp"
#include "soad/oracle.hpp"
#include "soad/random.hpp"

using namespace soad;

namespace {

Matrix random_spd(Rng& rng, Index n, double floor = 0.5) {
  const Matrix a = standard_normal(rng, n, n);
  return a * a.transpose() / static_cast<double>(n) + floor * Matrix::Identity(n, n);
}

double log_gauss(const Vector& x, const Vector& m, const Matrix& C) {
  const Eigen::LLT<Matrix> llt(C);
  const Vector d = x - m;
  return -0.5 * d.dot(llt.solve(d));
}

LinearGaussianModel random_model(Rng& rng, Index n, Index L, Index obs_rows) {
  LinearGaussianModel m;
  m.A = 0.5 * standard_normal(rng, n, n);
  m.Q = random_spd(rng, n, 0.2);
  m.m0 = standard_normal(rng, n);
  m.P0 = random_spd(rng, n);
  for (Index k = 0; k < L; ++k) {
    m.H.push_back(standard_normal(rng, obs_rows, n));
    m.R.push_back(random_spd(rng, obs_rows, 0.1));
  }
  return m;
}

std::vector<Vector> random_observations(Rng& rng, const LinearGaussianModel& m) {
  std::vector<Vector> ys;
  for (const auto& h : m.H) ys.push_back(standard_normal(rng, h.rows()));
  return ys;
}

}  // namespace

TEST(ExactPosterior, ConjugateScalar) {
  const auto p = exact_gaussian_posterior(Vector::Zero(1), Matrix::Ones(1, 1), Matrix::Ones(1, 1), Matrix::Ones(1, 1),
                                          Vector::Ones(1));
  EXPECT_NEAR(p.mean[0], 0.5, 1e-15);
  EXPECT_NEAR(p.cov(0, 0), 0.5, 1e-15);
}

TEST(ExactPosterior, NoRowsReturnsPrior) {
  Rng rng = make_rng(1);
  const Vector m = standard_normal(rng, 3);
  const Matrix C = random_spd(rng, 3);
  const auto p = exact_gaussian_posterior(m, C, Matrix(0, 3), Matrix(0, 0), Vector(0));
  EXPECT_EQ(p.mean, m);
  EXPECT_EQ(p.cov, C);
}

TEST(ExactPosterior, ErrorsOnBadInput) {
  EXPECT_THROW(exact_gaussian_posterior(Vector::Zero(2), Matrix::Identity(3, 3), Matrix::Identity(2, 2),
                                        Matrix::Identity(2, 2), Vector::Zero(2)),
               ShapeError);
  EXPECT_THROW(exact_gaussian_posterior(Vector::Zero(1), Matrix::Zero(1, 1), Matrix::Ones(1, 1), Matrix::Zero(1, 1),
                                        Vector::Zero(1)),
               NumericalError);
}

TEST(ExactPosterior, FiveDimensionalAgreesWithQuadrature) {
  // The 5-dim instance has a diagonal prior and observes coordinates 1 and 3 jointly, so the
  // posterior factorises into a 2-D block plus three untouched coordinates.
  Rng rng = make_rng(2);
  const Vector m = standard_normal(rng, 5);
  Vector cdiag(5);
  for (Index i = 0; i < 5; ++i) cdiag[i] = 0.5 + std::abs(standard_normal(rng, 1)[0]);
  const Matrix C = cdiag.asDiagonal();
  Matrix T = Matrix::Zero(2, 5);
  T(0, 1) = 1.0;
  T(0, 3) = 0.5;
  T(1, 3) = 1.0;
  const Matrix R = (Matrix(2, 2) << 0.3, 0.1, 0.1, 0.2).finished();
  const Vector y = standard_normal(rng, 2);
  const auto exact = exact_gaussian_posterior(m, C, T, R, y);
  for (Index i : {0, 2, 4}) {
    EXPECT_NEAR(exact.mean[i], m[i], 1e-12);
    EXPECT_NEAR(exact.cov(i, i), C(i, i), 1e-12);
  }
  const Vector m2 = (Vector(2) << m[1], m[3]).finished();
  const Matrix C2 = (Vector(2) << C(1, 1), C(3, 3)).finished().asDiagonal();
  const Matrix T2 = (Matrix(2, 2) << 1.0, 0.5, 0.0, 1.0).finished();
  GridSpec g;
  for (int d = 0; d < 2; ++d) {
    const double sd = std::sqrt(C2(d, d));
    g.lower.push_back(m2[d] - 8 * sd);
    g.upper.push_back(m2[d] + 8 * sd);
    g.points.push_back(601);
  }
  const auto table = brute_force_posterior([&](const Vector& x) { return log_gauss(x, m2, C2); },
                                           [&](const Vector& x) { return log_gauss(y, T2 * x, R); }, g);
  const Vector qm = table.mean();
  const Matrix qc = table.cov();
  EXPECT_NEAR(qm[0], exact.mean[1], 1e-3);
  EXPECT_NEAR(qm[1], exact.mean[3], 1e-3);
  EXPECT_NEAR(qc(0, 0), exact.cov(1, 1), 1e-3);
  EXPECT_NEAR(qc(0, 1), exact.cov(1, 3), 1e-3);
  EXPECT_NEAR(qc(1, 1), exact.cov(3, 3), 1e-3);
  EXPECT_FALSE(table.coverage_warning);
}

TEST(Smoother, SingleStepIsExactConditioning) {
  Rng rng = make_rng(3);
  const auto model = random_model(rng, 3, 1, 2);
  const auto ys = random_observations(rng, model);
  const auto sm = kalman_smoother(model, ys);
  const auto ex = exact_gaussian_posterior(model.m0, model.P0, model.H[0], model.R[0], ys[0]);
  EXPECT_LT((sm.mean[0] - ex.mean).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((sm.cov[0] - ex.cov).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Smoother, MatchesStackedConditioningOnRandomInstances) {
  Rng rng = make_rng(4);
  for (int trial = 0; trial < 25; ++trial) {
    const Index n = 1 + trial % 3, L = 1 + trial % 4, rows = 1 + trial % 2;
    auto model = random_model(rng, n, L, rows);
    if (trial % 5 == 0) model.H[0] = Matrix(0, n), model.R[0] = Matrix(0, 0);  // unobserved frame
    const auto ys = random_observations(rng, model);
    const auto sm = kalman_smoother(model, ys);
    const auto prior = stacked_prior(model);
    const auto so = stacked_observation(model, ys);
    const auto ex = exact_gaussian_posterior(prior.mean, prior.cov, so.T, so.R, so.y);
    for (Index k = 0; k < L; ++k) {
      const auto ks = static_cast<std::size_t>(k);
      EXPECT_LT((sm.mean[ks] - ex.mean.segment(k * n, n)).cwiseAbs().maxCoeff(), 1e-8) << trial;
      EXPECT_LT((sm.cov[ks] - ex.cov.block(k * n, k * n, n, n)).cwiseAbs().maxCoeff(), 1e-8) << trial;
    }
    // The smoother and the filter agree at the last step.
    EXPECT_LT((sm.mean.back() - sm.filtered_mean.back()).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Smoother, ZeroProcessNoiseFullObservation) {
  // With no process noise the window is x_k = A^k x_0, so the smoothed x_k equals A^k times
  // the smoothed x_0 and the final smoothed mean is the final filtered mean.
  Rng rng = make_rng(5);
  auto model = random_model(rng, 2, 4, 2);
  model.Q.setZero();
  const auto ys = random_observations(rng, model);
  const auto sm = kalman_smoother(model, ys);
  Vector x = sm.mean[0];
  for (std::size_t k = 1; k < 4; ++k) {
    x = model.A * x;
    EXPECT_LT((sm.mean[k] - x).cwiseAbs().maxCoeff(), 1e-8);
  }
  EXPECT_LT((sm.mean[3] - sm.filtered_mean[3]).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Smoother, ShapeErrors) {
  Rng rng = make_rng(6);
  const auto model = random_model(rng, 2, 3, 1);
  EXPECT_THROW(kalman_smoother(model, {Vector::Zero(1)}), ShapeError);
  EXPECT_THROW(kalman_smoother(model, {Vector::Zero(1), Vector::Zero(2), Vector::Zero(1)}), ShapeError);
}

TEST(BruteForce, GaussianMomentsMatchExact) {
  Rng rng = make_rng(7);
  // 1-D
  {
    const double m = 0.3, c = 0.7, r = 0.2, y = 1.1;
    const auto ex = exact_gaussian_posterior(Vector::Constant(1, m), Matrix::Constant(1, 1, c),
                                             Matrix::Ones(1, 1), Matrix::Constant(1, 1, r), Vector::Constant(1, y));
    const double sd = std::sqrt(c);
    const auto t = brute_force_posterior([&](const Vector& x) { return -0.5 * (x[0] - m) * (x[0] - m) / c; },
                                         [&](const Vector& x) { return -0.5 * (y - x[0]) * (y - x[0]) / r; },
                                         {{m - 8 * sd}, {m + 8 * sd}, {2049}});
    EXPECT_NEAR(t.mean()[0], ex.mean[0], 1e-4);
    EXPECT_NEAR(t.cov()(0, 0), ex.cov(0, 0), 1e-4);
  }
  // 2-D correlated
  const Vector m = standard_normal(rng, 2);
  const Matrix C = random_spd(rng, 2);
  const Matrix T = standard_normal(rng, 1, 2);
  const Matrix R = Matrix::Constant(1, 1, 0.3);
  const Vector y = standard_normal(rng, 1);
  const auto ex = exact_gaussian_posterior(m, C, T, R, y);
  GridSpec g;
  for (int d = 0; d < 2; ++d) {
    const double sd = std::sqrt(C(d, d));
    g.lower.push_back(m[d] - 8 * sd);
    g.upper.push_back(m[d] + 8 * sd);
    g.points.push_back(513);
  }
  const auto t = brute_force_posterior([&](const Vector& x) { return log_gauss(x, m, C); },
                                       [&](const Vector& x) { return log_gauss(y, T * x, R); }, g);
  EXPECT_LT((t.mean() - ex.mean).cwiseAbs().maxCoeff(), 1e-4);
  EXPECT_LT((t.cov() - ex.cov).cwiseAbs().maxCoeff(), 1e-4);
}

TEST(BruteForce, FlatLikelihoodReturnsPrior) {
  const GridSpec g{{-6.0}, {6.0}, {601}};
  const auto prior = brute_force_posterior([](const Vector& x) { return -0.5 * x[0] * x[0]; },
                                           [](const Vector&) { return 0.0; }, g);
  const auto shifted = brute_force_posterior([](const Vector& x) { return -0.5 * x[0] * x[0]; },
                                             [](const Vector&) { return 42.0; }, g);
  ASSERT_EQ(prior.density.size(), 601u);
  double total = 0.0;
  for (std::size_t i = 0; i < prior.density.size(); ++i) {
    EXPECT_NEAR(prior.density[i], std::exp(-0.5 * prior.axes[0][i] * prior.axes[0][i]) / std::sqrt(2 * M_PI), 1e-6);
    EXPECT_NEAR(shifted.density[i], prior.density[i], 1e-13);
    total += prior.weights[i];
  }
  EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(BruteForce, ArctanPosteriorIsUnimodalAndSharp) {
  const double sigma = 0.1, x_true = 0.4;
  const double y = std::atan(3 * x_true);
  const auto t = brute_force_posterior([](const Vector& x) { return -0.5 * x[0] * x[0]; },
                                       [&](const Vector& x) {
                                         const double d = y - std::atan(3 * x[0]);
                                         return -0.5 * d * d / (sigma * sigma);
                                       },
                                       {{-6.0}, {6.0}, {4097}});
  EXPECT_NEAR(t.mean()[0], x_true, 0.05);
  EXPECT_LT(t.cov()(0, 0), 0.01);
}

TEST(BruteForce, CoverageWarningForNarrowGrid) {
  const auto narrow = brute_force_posterior([](const Vector& x) { return -0.5 * x[0] * x[0]; },
                                            [](const Vector&) { return 0.0; }, {{-2.0}, {2.0}, {401}});
  EXPECT_TRUE(narrow.coverage_warning);
  const auto wide = brute_force_posterior([](const Vector& x) { return -0.5 * x[0] * x[0]; },
                                          [](const Vector&) { return 0.0; }, {{-8.0}, {8.0}, {401}});
  EXPECT_FALSE(wide.coverage_warning);
}

TEST(BruteForce, DoublingResolutionChangesMomentsLittle) {
  auto lp = [](const Vector& x) { return -0.5 * (x[0] * x[0] + x[1] * x[1] - x[0] * x[1]); };
  auto ll = [](const Vector& x) {
    const double d = 0.5 - std::sin(x[0]) - 0.3 * x[1];
    return -0.5 * d * d / 0.04;
  };
  const auto a = brute_force_posterior(lp, ll, {{-8, -8}, {8, 8}, {257, 257}});
  const auto b = brute_force_posterior(lp, ll, {{-8, -8}, {8, 8}, {513, 513}});
  EXPECT_LT((a.mean() - b.mean()).cwiseAbs().maxCoeff(), 1e-4);
  EXPECT_LT((a.cov() - b.cov()).cwiseAbs().maxCoeff(), 1e-4);
}

TEST(BruteForce, RejectsUnsupportedGrids) {
  auto f = [](const Vector&) { return 0.0; };
  EXPECT_THROW(brute_force_posterior(f, f, {{0, 0, 0}, {1, 1, 1}, {3, 3, 3}}), InputError);
  EXPECT_THROW(brute_force_posterior(f, f, {{0}, {1}, {1}}), InputError);
  EXPECT_THROW(brute_force_posterior(f, f, {{1}, {0}, {5}}), InputError);
}
