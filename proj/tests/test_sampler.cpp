#include <cmath>

#include <gtest/gtest.h>

#include "linear_gaussian_fixture.hpp"
#include "soad/errors.hpp"
#include "soad/sampler.hpp"

using namespace soad;
using soad::testing::make_linear_gaussian_window;
using soad::testing::state_moments;

namespace {

/// Returns NaN for every input.
class NanDenoiser final : public Denoiser {
 public:
  explicit NanDenoiser(Index n) : n_(n) {}
  Index dimension() const override { return n_; }
  std::unique_ptr<Linearization> linearize(const Matrix& z, double) const override {
    struct Lin final : Linearization {
      Matrix v;
      const Matrix& value() const override { return v; }
      Matrix vjp(const Matrix& c) const override { return c; }
    };
    auto l = std::make_unique<Lin>();
    l->v = Matrix::Constant(z.rows(), z.cols(), std::nan(""));
    return l;
  }

 private:
  Index n_;
};

ObservationSet full_observation(const ChannelLayout& layout, Index L, const Vector& z, double sigma) {
  MaskSpec m;
  return observe(z, layout, L, build_subsampling(m, layout, L), sigma, 3);
}

}  // namespace

TEST(Sampler, EiStepExamples) {
  const NoiseSchedule sch;
  Rng rng = make_rng(1);
  const Matrix z = standard_normal(rng, 5, 2);
  const Matrix zero = Matrix::Zero(5, 2);
  EXPECT_LT((ei_predictor_step(sch, z, 0.6, 0.5, zero) - (sch.mu(0.5) / sch.mu(0.6)) * z).norm(), 1e-14);
  const Matrix pi = standard_normal(rng, 5, 2);
  EXPECT_EQ(ei_predictor_step(sch, z, 0.4, 0.4, pi), z);
  // General form.
  const double rm = sch.mu(0.3) / sch.mu(0.4), rs = sch.sigma(0.3) / sch.sigma(0.4);
  EXPECT_LT((ei_predictor_step(sch, z, 0.4, 0.3, pi) - (rm * z + (rs - rm) * pi)).norm(), 1e-14);
}

TEST(Sampler, LmcStepExamples) {
  Rng rng = make_rng(2);
  const Matrix z = standard_normal(rng, 4, 3), xi = standard_normal(rng, 4, 3), s = standard_normal(rng, 4, 3);
  EXPECT_LT((lmc_corrector_step(z, Matrix::Zero(4, 3), 0.25, xi) - (z + 0.5 * xi)).norm(), 1e-15);
  EXPECT_EQ(lmc_corrector_step(z, s, 0.0, xi), z);
  EXPECT_LT((lmc_corrector_step(z, s, 0.1, xi) - (z + 0.05 * s + std::sqrt(0.1) * xi)).norm(), 1e-15);
}

TEST(Sampler, LmcPreservesStandardNormal) {
  Rng rng = make_rng(3);
  const Index n = 100000;
  Matrix z = standard_normal(rng, 1, n);
  for (int it = 0; it < 50; ++it) z = lmc_corrector_step(z, -z, 0.02, rng);
  const double mean = z.mean();
  const double var = (z.array() - mean).square().mean();
  EXPECT_LT(std::abs(mean), 3.0 / std::sqrt(static_cast<double>(n)));
  EXPECT_NEAR(var, 1.0, 0.03);
}

TEST(Sampler, ClippingCoefficient) {
  EXPECT_DOUBLE_EQ(clipping_coefficient(ClippingMode::Literal, 0.3, 0.5), 2.0);
  EXPECT_DOUBLE_EQ(clipping_coefficient(ClippingMode::Literal, 0.3, 4.0), 1.0);
  EXPECT_DOUBLE_EQ(clipping_coefficient(ClippingMode::Literal, 0.3, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(clipping_coefficient(ClippingMode::Capped, 0.3, 0.5), 0.3);
  EXPECT_DOUBLE_EQ(clipping_coefficient(ClippingMode::Capped, 0.3, 10.0), 0.1);
  EXPECT_DOUBLE_EQ(clipping_coefficient(ClippingMode::Capped, 0.3, 0.0), 0.3);
  EXPECT_DOUBLE_EQ(clipping_coefficient(ClippingMode::None, 0.3, 10.0), 0.3);
  for (auto m : {ClippingMode::Literal, ClippingMode::Capped, ClippingMode::None})
    EXPECT_EQ(parse_clipping_mode(to_string(m)), m);
  EXPECT_THROW(parse_lmc_mode("fast"), ConfigError);
}

TEST(Sampler, ReverseGridIsUniform) {
  const NoiseSchedule sch;
  const auto ts = reverse_time_grid(sch, 256);
  ASSERT_EQ(ts.size(), 257u);
  EXPECT_DOUBLE_EQ(ts.front(), sch.t_max());
  EXPECT_NEAR(ts.back(), sch.t_min(), 1e-15);
  const double dt = ts[0] - ts[1];
  for (std::size_t i = 1; i < ts.size(); ++i) EXPECT_NEAR(ts[i - 1] - ts[i], dt, 1e-14);
}

TEST(ForwardCorrector, NoiseFreeObservationIsForwardDiffusion) {
  const NoiseSchedule sch;
  const ChannelLayout lay = augmented_layout(ChannelLayout(GridShape{{3}}, 1), {ObservationOperator::identity()});
  Rng rng = make_rng(4);
  const Vector z0 = standard_normal(rng, 2 * 6);
  const auto obs = full_observation(lay, 2, z0, 0.0);
  Matrix z = standard_normal(rng, 12, 2);
  const Matrix before = z;
  const Matrix eps = standard_normal(rng, obs.rows(), 2);
  const double t = 0.4;
  forward_diffusion_corrector(z, t, obs, sch, eps);
  const auto gi = obs.global_indices();
  const Vector y = obs.stacked_values();
  for (std::size_t r = 0; r < gi.size(); ++r)
    for (Index j = 0; j < 2; ++j)
      EXPECT_NEAR(z(gi[r], j), sch.mu(t) * y[static_cast<Index>(r)] + sch.sigma(t) * eps(static_cast<Index>(r), j), 1e-14);
  // State rows untouched.
  for (Index k = 0; k < 2; ++k) EXPECT_EQ(z.middleRows(k * 6, 3), before.middleRows(k * 6, 3));
}

TEST(ForwardCorrector, NoOpWhenNoiseExceedsRatio) {
  const NoiseSchedule sch;
  const ChannelLayout lay = augmented_layout(ChannelLayout(GridShape{{3}}, 1), {ObservationOperator::identity()});
  Rng rng = make_rng(5);
  const auto obs = full_observation(lay, 1, standard_normal(rng, 6), 0.1);
  Matrix z = standard_normal(rng, 6, 3);
  const Matrix before = z;
  const double t = 0.02;  // r_t ~ 0.031 < 0.1
  ASSERT_LT(sch.ratio(t), 0.1);
  forward_diffusion_corrector(z, t, obs, sch, standard_normal(rng, obs.rows(), 3));
  EXPECT_EQ(z, before);
  EXPECT_THROW(forward_diffusion_corrector(z, 0.5, obs, sch, Matrix::Zero(1, 3)), ShapeError);
}

TEST(ForwardCorrector, MatchesForwardMarginalInDistribution) {
  const NoiseSchedule sch;
  const ChannelLayout lay = augmented_layout(ChannelLayout(GridShape{{2}}, 1), {ObservationOperator::identity()});
  const Vector z0 = (Vector(4) << 0.3, -0.7, 1.1, -0.4).finished();
  const double sigma_obs = 0.1, t = 0.5;
  const auto [mu, sigma] = sch.mu_sigma(t);
  const Index draws = 100000;
  Rng rng = make_rng(6);
  double sum[2] = {0, 0}, sum2[2] = {0, 0};
  for (Index d = 0; d < draws; ++d) {
    const auto obs = full_observation(lay, 1, z0, sigma_obs);
    // fresh y per draw from the observation model
    ObservationSet o = obs;
    o.values[0] = z0.tail(2) + sigma_obs * standard_normal(rng, 2);
    Matrix z = Matrix::Zero(4, 1);
    forward_diffusion_corrector(z, t, o, sch, standard_normal(rng, 2, 1));
    for (int i = 0; i < 2; ++i) {
      sum[i] += z(2 + i, 0);
      sum2[i] += z(2 + i, 0) * z(2 + i, 0);
    }
  }
  for (int i = 0; i < 2; ++i) {
    const double m = sum[i] / draws, v = sum2[i] / draws - m * m;
    EXPECT_LT(std::abs(m - mu * z0[2 + i]), 3.0 * sigma / std::sqrt(static_cast<double>(draws)));
    EXPECT_NEAR(v / (sigma * sigma), 1.0, 0.05);
  }
}

TEST(Assimilate, UnconditionalSamplingMatchesStandardNormal) {
  const NoiseSchedule sch;
  const Index n = 4;
  const AnalyticGaussianScore den(Vector::Zero(n), Matrix::Identity(n, n), sch);
  const ChannelLayout lay(GridShape{{n}}, 1);
  SamplerConfig cfg;
  cfg.seed = 11;
  const auto res = assimilate(den, sch, linear_model(no_observations(lay, 1)), EstimatorConfig{}, cfg, 4096);
  const Vector mean = res.mean();
  const Matrix centered = res.samples.colwise() - mean;
  const Matrix cov = centered * centered.transpose() / 4095.0;
  EXPECT_LE(mean.cwiseAbs().maxCoeff(), 0.05);
  EXPECT_LE((cov - Matrix::Identity(n, n)).cwiseAbs().maxCoeff(), 0.1);
}

TEST(Assimilate, WithoutObservationsOrCorrectorIsPlainEiSampling) {
  const NoiseSchedule sch;
  Rng rng = make_rng(12);
  const Index n = 3;
  const Matrix a = standard_normal(rng, n, n);
  const AnalyticGaussianScore den(standard_normal(rng, n), a * a.transpose() + Matrix::Identity(n, n), sch);
  SamplerConfig cfg;
  cfg.corrector_steps = 0;
  cfg.num_steps = 40;
  cfg.seed = 99;
  const Index members = 5;
  const auto res =
      assimilate(den, sch, linear_model(no_observations(ChannelLayout(GridShape{{n}}, 1), 1)), EstimatorConfig{}, cfg, members);
  // Reference: per-member streams, z_1 ~ N(0, I), then EI steps with pi = sigma eps.
  Matrix z(n, members);
  for (Index m = 0; m < members; ++m) {
    Rng r = make_rng(cfg.seed, {0x73616d70, static_cast<std::uint64_t>(m)});
    fill_normal(r, z.col(m).data(), n);
  }
  const auto ts = reverse_time_grid(sch, cfg.num_steps);
  for (std::size_t i = 0; i + 1 < ts.size(); ++i)
    z = ei_predictor_step(sch, z, ts[i], ts[i + 1], sch.sigma(ts[i]) * den.epsilon(z, ts[i]));
  EXPECT_EQ(res.samples, z);
  EXPECT_EQ(res.denoiser_calls, static_cast<std::size_t>(cfg.num_steps));
}

TEST(Assimilate, NoiseFreeFullObservationPinsObservedBlock) {
  const NoiseSchedule sch;
  const auto w = make_linear_gaussian_window(21);
  const auto den = w.denoiser(sch);
  const Vector z = augment(w.truth, w.state, {ObservationOperator::identity()});
  const auto obs = full_observation(w.layout, w.L, z, 0.0);
  SamplerConfig cfg;
  cfg.num_steps = 64;
  cfg.clipping = ClippingMode::Capped;
  const auto res = assimilate(den, sch, linear_model(obs), EstimatorConfig{}, cfg, 16);
  const auto gi = obs.global_indices();
  const Vector y = obs.stacked_values();
  // The last correction happens at t_min, so the pin holds up to r_{t_min} ~ 1.6e-4 noise.
  for (std::size_t r = 0; r < gi.size(); ++r)
    for (Index j = 0; j < 16; ++j) EXPECT_NEAR(res.samples(gi[r], j), y[static_cast<Index>(r)], 1e-3);
}

TEST(Assimilate, IdenticalSeedsReproduceBitwise) {
  const NoiseSchedule sch;
  const auto w = make_linear_gaussian_window(22);
  const auto den = w.denoiser(sch);
  SamplerConfig cfg;
  cfg.num_steps = 32;
  cfg.seed = 5;
  const auto a = assimilate(den, sch, linear_model(w.obs), EstimatorConfig{}, cfg, 8);
  const auto b = assimilate(den, sch, linear_model(w.obs), EstimatorConfig{}, cfg, 8);
  EXPECT_EQ(a.samples, b.samples);
  cfg.seed = 6;
  const auto c = assimilate(den, sch, linear_model(w.obs), EstimatorConfig{}, cfg, 8);
  EXPECT_NE(a.samples, c.samples);
}

TEST(Assimilate, ObservationsPullTowardSmootherMean) {
  const NoiseSchedule sch;
  const auto w = make_linear_gaussian_window(23);
  const auto den = w.denoiser(sch);
  SamplerConfig cfg;
  cfg.clipping = ClippingMode::Capped;
  double err[3];
  int i = 0;
  for (Index steps : {64, 128, 256}) {
    cfg.num_steps = steps;
    const auto res = assimilate(den, sch, linear_model(w.obs), EstimatorConfig{}, cfg, 512);
    const auto mom = state_moments(w, res.samples);
    err[i++] = (mom.mean - w.smoother_mean).norm() / w.smoother_mean.norm();
  }
  // Monte Carlo error of the mean with 512 members is about 0.1 / sqrt(512) per coordinate.
  const double noise = 0.02;
  EXPECT_LE(err[1], err[0] + noise);
  EXPECT_LE(err[2], err[1] + noise);
  EXPECT_LT(err[2], 0.05);
}

TEST(Assimilate, ErrorsAreReported) {
  const NoiseSchedule sch;
  const ChannelLayout lay(GridShape{{3}}, 1);
  const NanDenoiser nan_den(3);
  SamplerConfig cfg;
  cfg.num_steps = 8;
  try {
    assimilate(nan_den, sch, linear_model(no_observations(lay, 1)), EstimatorConfig{}, cfg, 2);
    FAIL() << "expected divergence";
  } catch (const DivergenceError& e) {
    EXPECT_EQ(e.step(), 0u);
    EXPECT_LT(e.time(), 1.0);
  }
  const AnalyticGaussianScore den(Vector::Zero(4), Matrix::Identity(4, 4), sch);
  EXPECT_THROW(assimilate(den, sch, linear_model(no_observations(lay, 1)), EstimatorConfig{}, cfg, 2), InputError);
  const AnalyticGaussianScore den3(Vector::Zero(3), Matrix::Identity(3, 3), sch);
  EXPECT_THROW(assimilate(den3, sch, linear_model(no_observations(lay, 1)), EstimatorConfig{}, cfg, 0), InputError);
  cfg.num_steps = 0;
  EXPECT_THROW(assimilate(den3, sch, linear_model(no_observations(lay, 1)), EstimatorConfig{}, cfg, 1), ConfigError);
}
