#include <cmath>

#include <gtest/gtest.h>

#include "soad/analytic_gaussian.hpp"
#include "soad/errors.hpp"
#include "soad/estimators.hpp"
#include "soad/oracle.hpp"

using namespace soad;

namespace {

/// eps_theta == 0 for every input.
class ZeroDenoiser final : public Denoiser {
 public:
  explicit ZeroDenoiser(Index n) : n_(n) {}
  Index dimension() const override { return n_; }
  std::unique_ptr<Linearization> linearize(const Matrix& z, double) const override {
    struct Lin final : Linearization {
      Matrix v;
      const Matrix& value() const override { return v; }
      Matrix vjp(const Matrix& c) const override { return Matrix::Zero(c.rows(), c.cols()); }
    };
    auto l = std::make_unique<Lin>();
    l->v = Matrix::Zero(z.rows(), z.cols());
    return l;
  }

 private:
  Index n_;
};

Matrix random_spd(Rng& rng, Index n) {
  const Matrix a = standard_normal(rng, n, n);
  return a * a.transpose() / static_cast<double>(n) + 0.2 * Matrix::Identity(n, n);
}

struct Instance {
  ChannelLayout state;
  ChannelLayout layout;
  OperatorList ops;
  Index L = 2;
  ObservationSet obs;
};

/// Random augmented instance on a small ring with a random mask and noisy observations.
Instance random_instance(Rng& rng, std::uint64_t seed, double sigma, bool nonlinear) {
  Instance in;
  const Index n = 2 + static_cast<Index>(seed % 3);
  in.state = ChannelLayout(GridShape{{n}}, 1);
  in.ops = nonlinear ? OperatorList{ObservationOperator::arctan_easy(), ObservationOperator::sin_hard()}
                     : OperatorList{ObservationOperator::identity()};
  in.layout = augmented_layout(in.state, in.ops);
  MaskSpec m;
  m.ratio = 0.5 + 0.5 * static_cast<double>(seed % 2);
  m.seed = seed;
  const Vector x = standard_normal(rng, in.L * n);
  in.obs = observe(augment(x, in.state, in.ops), in.layout, in.L, build_subsampling(m, in.layout, in.L), sigma,
                   seed);
  return in;
}

double rel(const Vector& a, const Vector& b) { return (a - b).norm() / std::max(1e-300, b.norm()); }

}  // namespace

TEST(EstimatorStats, SigmaZeroGivenT) {
  EXPECT_DOUBLE_EQ(sigma_0_given_t(1.0, 1.0), 0.5);
  EXPECT_DOUBLE_EQ(sigma_0_given_t(2.0, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(sigma_0_given_t(2.0, INFINITY), 4.0);
  EXPECT_NEAR(sigma_0_given_t(1.5, 1e8), 2.25, 1e-12);
  for (double sz : {0.3, 1.0, 3.0})
    for (double r : {1e-3, 0.5, 1.0, 7.0}) {
      const double v = sigma_0_given_t(sz, r);
      EXPECT_GT(v, 0.0);
      EXPECT_LT(v, std::min(sz * sz, r * r));
      // (sz^-2 + r^-2)^-1
      EXPECT_NEAR(v, 1.0 / (1.0 / (sz * sz) + 1.0 / (r * r)), 1e-14 * std::max(1.0, v));
    }
}

TEST(EstimatorStats, VariancePerKind) {
  EstimatorConfig c;
  c.sigma_z = 2.0;
  c.gamma = 0.3;
  const double r = 1.7;
  c.kind = EstimatorKind::Dps;
  EXPECT_EQ(estimator_variance(c, r), 0.0);
  c.kind = EstimatorKind::Dmps;
  EXPECT_DOUBLE_EQ(estimator_variance(c, r), r * r);
  c.kind = EstimatorKind::Sda;
  EXPECT_DOUBLE_EQ(estimator_variance(c, r), 0.3 * r * r);
  c.kind = EstimatorKind::Soad;
  EXPECT_DOUBLE_EQ(estimator_variance(c, r), sigma_0_given_t(2.0, r));
  for (auto k : {EstimatorKind::Dps, EstimatorKind::Dmps, EstimatorKind::Sda, EstimatorKind::Soad})
    EXPECT_EQ(parse_estimator_kind(to_string(k)), k);
  c.sigma_z = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(EstimatorStats, ScalarCovarianceIdentityUnderSelection) {
  // sigma_o^2 I + T Sigma_{0|t} T^T with Sigma_{0|t} from matrix Gaussian conditioning equals (sigma_o^2 + v_t) I.
  Rng rng = make_rng(1);
  const NoiseSchedule sch;
  for (int trial = 0; trial < 100; ++trial) {
    const Index n = 3 + trial % 6;
    const double sz = 0.2 + 2.0 * std::uniform_real_distribution<double>()(rng);
    const double t = 0.02 + 0.96 * std::uniform_real_distribution<double>()(rng);
    const auto [mu, sigma] = sch.mu_sigma(t);
    const Matrix prior_prec = Matrix::Identity(n, n) / (sz * sz);
    const Matrix post_cov = (prior_prec + (mu * mu / (sigma * sigma)) * Matrix::Identity(n, n)).inverse();
    std::vector<Index> idx;
    for (Index i = 0; i < n; ++i)
      if (std::bernoulli_distribution(0.5)(rng)) idx.push_back(i);
    if (idx.empty()) idx.push_back(0);
    const Matrix T = SubsamplingOperator(idx, n).dense();
    const double so = 0.1;
    const Matrix general = so * so * Matrix::Identity(T.rows(), T.rows()) + T * post_cov * T.transpose();
    const double v = sigma_0_given_t(sz, sigma / mu);
    const Matrix scalar = (so * so + v) * Matrix::Identity(T.rows(), T.rows());
    EXPECT_LE((general - scalar).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Estimators, EmptyObservationsGiveZeroGradient) {
  const NoiseSchedule sch;
  const ChannelLayout lay = augmented_layout(ChannelLayout(GridShape{{3}}, 1), {ObservationOperator::identity()});
  const AnalyticGaussianScore den(Vector::Zero(12), Matrix::Identity(12, 12), sch);
  const auto model = linear_model(no_observations(lay, 2));
  Rng rng = make_rng(2);
  const Vector z = standard_normal(rng, 12);
  EstimatorConfig c;
  EXPECT_EQ(soad_likelihood_grad(den, sch, z, 0.4, model, c).norm(), 0.0);
  EXPECT_EQ(dps_likelihood_grad(den, sch, z, 0.4, model, c).norm(), 0.0);
  EXPECT_EQ(dmps_likelihood_grad(den, sch, z, 0.4, model, c).norm(), 0.0);
  EXPECT_EQ(sda_likelihood_grad(den, sch, z, 0.4, model, c).norm(), 0.0);
}

TEST(Estimators, SoadQWithZeroDenoiser) {
  // eps = 0 and T = I on every coordinate: Q = -2 mu (mu y - z) -> -2 (y - z) as mu -> 1.
  const NoiseSchedule sch;
  const Index n = 4;
  std::vector<Index> all(n);
  for (Index i = 0; i < n; ++i) all[static_cast<std::size_t>(i)] = i;
  ObservationSet obs;
  obs.layout = ChannelLayout(GridShape{{n}}, 1);
  obs.window_length = 1;
  obs.operators = {SubsamplingOperator(all, n)};
  Rng rng = make_rng(3);
  obs.values = {standard_normal(rng, n)};
  obs.noise_std = {Vector::Constant(n, 0.1)};
  const ZeroDenoiser den(n);
  const Vector z = standard_normal(rng, n);
  const double t = 0.0;  // clamped to t_min
  const double mu = sch.mu(t);
  const Vector Q = soad_likelihood_grad(den, sch, z, t, linear_model(obs), EstimatorConfig{});
  // Q = grad_z ||mu y - z||^2 scaled by mu for the Tweedie mean z / mu: -2 mu (mu y - z) / mu^2 * mu^2.
  EXPECT_LT(rel(Q, -2.0 * (mu * obs.values[0] - z)), 1e-12);
  EXPECT_LT(rel(Q, -2.0 * (obs.values[0] - z)), 1e-6);
}

TEST(Estimators, SoadConditionalScoreIsExactForScalarGaussianPrior) {
  const NoiseSchedule sch;
  Rng rng = make_rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const Index n = 3, L = 2;
    const double sz = 0.5 + 0.25 * trial;
    const ChannelLayout lay = augmented_layout(ChannelLayout(GridShape{{n}}, 1), {ObservationOperator::identity()});
    const Index dim = L * lay.step_size();
    MaskSpec m;
    m.ratio = 0.7;
    m.seed = static_cast<std::uint64_t>(trial);
    const Vector truth = sz * standard_normal(rng, dim);
    const auto obs = observe(truth, lay, L, build_subsampling(m, lay, L), 0.1, static_cast<std::uint64_t>(trial));
    const AnalyticGaussianScore den(Vector::Zero(dim), sz * sz * Matrix::Identity(dim, dim), sch);
    EstimatorConfig c;
    c.sigma_z = sz;
    // Exact: z0 | y ~ N(m_y, C_y), so z_t | y ~ N(mu m_y, mu^2 C_y + sigma^2 I).
    Matrix T = Matrix::Zero(obs.rows(), dim);
    const auto gi = obs.global_indices();
    for (std::size_t r = 0; r < gi.size(); ++r) T(static_cast<Index>(r), gi[r]) = 1.0;
    const auto post = exact_gaussian_posterior(Vector::Zero(dim), sz * sz * Matrix::Identity(dim, dim), T,
                                               0.01 * Matrix::Identity(T.rows(), T.rows()), obs.stacked_values());
    for (double t : {0.1, 0.35, 0.6, 0.9}) {
      const auto [mu, sigma] = sch.mu_sigma(t);
      const Matrix S = mu * mu * post.cov + sigma * sigma * Matrix::Identity(dim, dim);
      const Vector z = mu * truth + sigma * standard_normal(rng, dim);
      const Vector exact = -S.ldlt().solve(z - mu * post.mean);
      const Vector got = conditional_score(den, sch, Matrix(z), t, linear_model(obs), c).col(0);
      EXPECT_LT(rel(got, exact), 1e-8) << "trial " << trial << " t " << t;
    }
  }
}

namespace {

struct FdCase {
  EstimatorKind kind;
  bool nonlinear;
};

class EstimatorFiniteDifference : public ::testing::TestWithParam<FdCase> {};

}  // namespace

TEST_P(EstimatorFiniteDifference, GradientMatchesLogDensity) {
  const NoiseSchedule sch;
  Rng rng = make_rng(100 + static_cast<int>(GetParam().kind));
  EstimatorConfig cfg;
  cfg.kind = GetParam().kind;
  cfg.gamma = 0.7;
  cfg.sigma_z = 1.3;
  double worst = 0.0;
  for (std::uint64_t inst = 0; inst < 20; ++inst) {
    Instance in = random_instance(rng, inst, 0.3, GetParam().nonlinear);
    ObservationModel model;
    model.obs = in.obs;
    Index dim = in.L * in.layout.step_size();
    if (GetParam().nonlinear) {
      model.lift = ObservationLift{in.state, in.ops};
      dim = in.L * in.state.state_size();
    }
    const AnalyticGaussianScore den(0.3 * standard_normal(rng, dim), random_spd(rng, dim), sch);
    const double t = 0.15 + 0.07 * static_cast<double>(inst % 10);
    const Vector z = standard_normal(rng, dim);
    const Vector g = log_likelihood_grad(den, sch, Matrix(z), t, model, cfg).col(0);
    Vector fd(dim);
    const double h = 1e-5;
    for (Index i = 0; i < dim; ++i) {
      Vector zp = z, zm = z;
      zp[i] += h;
      zm[i] -= h;
      fd[i] = (log_likelihood(den, sch, Matrix(zp), t, model, cfg)[0] -
               log_likelihood(den, sch, Matrix(zm), t, model, cfg)[0]) /
              (2 * h);
    }
    worst = std::max(worst, rel(g, fd));
  }
  EXPECT_LE(worst, 1e-4);
}

INSTANTIATE_TEST_SUITE_P(AllKinds, EstimatorFiniteDifference,
                         ::testing::Values(FdCase{EstimatorKind::Dps, false}, FdCase{EstimatorKind::Dmps, false},
                                           FdCase{EstimatorKind::Sda, false}, FdCase{EstimatorKind::Soad, false},
                                           FdCase{EstimatorKind::Dps, true}, FdCase{EstimatorKind::Sda, true},
                                           FdCase{EstimatorKind::Soad, true}),
                         [](const ::testing::TestParamInfo<FdCase>& info) {
                           return to_string(info.param.kind) + (info.param.nonlinear ? "_lifted" : "_augmented");
                         });

TEST(Estimators, NamedGradientsAgreeWithSharedDrift) {
  // c * Q = -sigma^2 grad log p for every kind.
  const NoiseSchedule sch;
  Rng rng = make_rng(5);
  Instance in = random_instance(rng, 1, 0.1, false);
  const Index dim = in.L * in.layout.step_size();
  const AnalyticGaussianScore den(Vector::Zero(dim), random_spd(rng, dim), sch);
  const Vector z = standard_normal(rng, dim);
  const auto model = linear_model(in.obs);
  const double t = 0.5, sigma = sch.sigma(t);
  EstimatorConfig c;
  for (auto kind : {EstimatorKind::Dps, EstimatorKind::Dmps, EstimatorKind::Sda, EstimatorKind::Soad}) {
    c.kind = kind;
    const auto g = guidance(den, sch, Matrix(z), t, model, c);
    const Vector grad = log_likelihood_grad(den, sch, Matrix(z), t, model, c).col(0);
    EXPECT_LT(rel(g.c * g.q.col(0), -sigma * sigma * grad), 1e-12) << to_string(kind);
  }
  c.kind = EstimatorKind::Sda;
  EXPECT_LT(rel(sda_likelihood_grad(den, sch, z, t, model, c), log_likelihood_grad(den, sch, Matrix(z), t, model, c).col(0)), 1e-15);
  EXPECT_LT(rel(soad_likelihood_grad(den, sch, z, t, model, c), guidance(den, sch, Matrix(z), t, model, EstimatorConfig{}).q.col(0)), 1e-15);
}

TEST(Estimators, LimitingCases) {
  const NoiseSchedule sch;
  Rng rng = make_rng(6);
  Instance in = random_instance(rng, 2, 0.1, false);
  const Index dim = in.L * in.layout.step_size();
  const AnalyticGaussianScore den(Vector::Zero(dim), random_spd(rng, dim), sch);
  const auto model = linear_model(in.obs);
  const Vector z = standard_normal(rng, dim);
  EstimatorConfig c;
  // SDA with gamma -> 0 is DPS.
  c.gamma = 1e-12;
  EXPECT_LT(rel(sda_likelihood_grad(den, sch, z, 0.5, model, c), dps_likelihood_grad(den, sch, z, 0.5, model, c)), 1e-9);
  // As t -> 0 the SOAD variance vanishes and SOAD approaches DPS.
  const Vector soad_grad = log_likelihood_grad(den, sch, Matrix(z), 1e-3, model, c).col(0);
  EXPECT_LT(rel(soad_grad, dps_likelihood_grad(den, sch, z, 1e-3, model, c)), 1e-3);
  // DMPS with the mean z / mu: for T = I rows the gradient is (y - Tz/mu)/(s^2 mu) on observed rows.
  const double t = 0.3;
  const auto [mu, sigma] = sch.mu_sigma(t);
  const double var = 0.01 + (sigma / mu) * (sigma / mu);
  Vector expect = Vector::Zero(dim);
  const auto gi = in.obs.global_indices();
  const Vector y = in.obs.stacked_values();
  for (std::size_t r = 0; r < gi.size(); ++r) expect[gi[r]] = (y[static_cast<Index>(r)] - z[gi[r]] / mu) / (var * mu);
  EXPECT_LT(rel(dmps_likelihood_grad(den, sch, z, t, model, c), expect), 1e-12);
}

TEST(Estimators, ErrorCases) {
  const NoiseSchedule sch;
  Rng rng = make_rng(7);
  Instance in = random_instance(rng, 3, 0.0, true);
  const Index dim = in.L * in.layout.step_size();
  const AnalyticGaussianScore den(Vector::Zero(dim), Matrix::Identity(dim, dim), sch);
  EstimatorConfig c;
  c.kind = EstimatorKind::Dps;
  // Noise-free observations make DPS degenerate.
  EXPECT_THROW(log_likelihood_grad(den, sch, Matrix(Matrix::Zero(dim, 1)), 0.5, linear_model(in.obs), c), NumericalError);
  ObservationModel lifted;
  lifted.obs = in.obs;
  lifted.lift = ObservationLift{in.state, in.ops};
  const Index raw = in.L * in.state.state_size();
  const AnalyticGaussianScore raw_den(Vector::Zero(raw), Matrix::Identity(raw, raw), sch);
  EXPECT_THROW(dmps_likelihood_grad(raw_den, sch, Vector::Zero(raw), 0.5, lifted, c), InputError);
  EXPECT_THROW(log_likelihood_grad(raw_den, sch, Matrix(Matrix::Zero(raw, 1)), 0.5, linear_model(in.obs), c), InputError);
}
