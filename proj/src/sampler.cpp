#include "soad/sampler.hpp"

#include <chrono>
#include <algorithm>
#include <cmath>
#include <limits>

#include "soad/errors.hpp"

namespace soad {

ClippingMode parse_clipping_mode(std::string_view name) {
  if (name == "literal") return ClippingMode::Literal;
  if (name == "capped") return ClippingMode::Capped;
  if (name == "none") return ClippingMode::None;
  throw ConfigError("unknown clipping mode: " + std::string(name));
}

std::string to_string(ClippingMode mode) {
  switch (mode) {
    case ClippingMode::Literal: return "literal";
    case ClippingMode::Capped: return "capped";
    case ClippingMode::None: return "none";
  }
  return "?";
}

LmcMode parse_lmc_mode(std::string_view name) {
  if (name == "literal") return LmcMode::Literal;
  if (name == "scaled") return LmcMode::Scaled;
  throw ConfigError("unknown lmc mode: " + std::string(name));
}

std::string to_string(LmcMode mode) { return mode == LmcMode::Literal ? "literal" : "scaled"; }

void SamplerConfig::validate() const {
  if (num_steps < 1) throw ConfigError("sampler.num_steps must be >= 1");
  if (!(delta > 0.0)) throw ConfigError("sampler.delta must be > 0");
  if (corrector_steps < 0) throw ConfigError("sampler.corrector_steps must be >= 0");
}

Matrix ei_predictor_step(const NoiseSchedule& schedule, const Matrix& z, double t, double t_minus, const Matrix& pi) {
  const auto a = schedule.mu_sigma(t);
  const auto b = schedule.mu_sigma(t_minus);
  const double r_mu = b.mu / a.mu, r_sigma = b.sigma / a.sigma;
  if (!std::isfinite(r_mu) || !std::isfinite(r_sigma)) throw NumericalError("EI step: non-finite coefficient ratio");
  return r_mu * z + (r_sigma - r_mu) * pi;
}

Matrix lmc_corrector_step(const Matrix& z, const Matrix& s, double step, const Matrix& xi) {
  return z + (0.5 * step) * s + std::sqrt(step) * xi;
}

Matrix lmc_corrector_step(const Matrix& z, const Matrix& s, double step, Rng& rng) {
  return lmc_corrector_step(z, s, step, standard_normal(rng, z.rows(), z.cols()));
}

void forward_diffusion_corrector(Matrix& z, double t, const ObservationSet& obs, const NoiseSchedule& schedule,
                                 const Matrix& noise) {
  const auto [mu, sigma] = schedule.mu_sigma(t);
  const double r = sigma / mu;
  const auto idx = obs.global_indices();
  const Vector y = obs.stacked_values();
  const Vector sd = obs.stacked_noise_std();
  if (noise.rows() != static_cast<Index>(idx.size()) || noise.cols() != z.cols())
    throw ShapeError("forward corrector: noise must have one row per observation");
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const auto row = static_cast<Index>(i);
    if (sd[row] > r) continue;
    const double spread = std::sqrt(r * r - sd[row] * sd[row]);
    for (Index j = 0; j < z.cols(); ++j) z(idx[i], j) = mu * (y[row] + spread * noise(row, j));
  }
}

double clipping_coefficient(ClippingMode mode, double c_t, double q_inf_norm) {
  const double inv = q_inf_norm > 0.0 ? 1.0 / q_inf_norm : std::numeric_limits<double>::infinity();
  switch (mode) {
    case ClippingMode::Literal: return q_inf_norm > 0.0 ? std::max(1.0, inv) : 1.0;
    case ClippingMode::Capped: return std::min(c_t, inv);
    case ClippingMode::None: return c_t;
  }
  return c_t;
}

std::vector<double> reverse_time_grid(const NoiseSchedule& schedule, Index num_steps) {
  std::vector<double> ts(static_cast<std::size_t>(num_steps + 1));
  const double a = schedule.t_max(), b = schedule.t_min();
  for (Index i = 0; i <= num_steps; ++i)
    ts[static_cast<std::size_t>(i)] = a + (b - a) * static_cast<double>(i) / static_cast<double>(num_steps);
  return ts;
}

namespace {

/// One independent noise stream per ensemble member, drawn column by column.
class MemberNoise {
 public:
  MemberNoise(std::uint64_t seed, Index members) {
    for (Index m = 0; m < members; ++m) rngs_.push_back(make_rng(seed, {0x73616d70, static_cast<std::uint64_t>(m)}));
  }
  Matrix draw(Index rows) {
    Matrix out(rows, static_cast<Index>(rngs_.size()));
    for (std::size_t m = 0; m < rngs_.size(); ++m) fill_normal(rngs_[m], out.col(static_cast<Index>(m)).data(), rows);
    return out;
  }

 private:
  std::vector<Rng> rngs_;
};

}  // namespace

AssimilationResult assimilate(const Denoiser& denoiser, const NoiseSchedule& schedule, const ObservationModel& model,
                              const EstimatorConfig& estimator, const SamplerConfig& cfg, Index ensemble) {
  cfg.validate();
  estimator.validate();
  model.obs.validate();
  if (ensemble < 1) throw InputError("ensemble size must be >= 1");
  if (denoiser.dimension() != model.dimension())
    throw InputError("observation layout does not match the denoiser window");
  // The corrector writes observed coordinates directly; that needs them to live in the sampled space.
  const bool correct = cfg.forward_corrector && !model.lift && model.obs.rows() > 0;

  const auto start = std::chrono::steady_clock::now();
  AssimilationResult result;
  result.seed = cfg.seed;
  result.times = reverse_time_grid(schedule, cfg.num_steps);
  MemberNoise noise(cfg.seed, ensemble);
  const Index dim = model.dimension();
  const Index rows = model.obs.rows();

  Matrix z = noise.draw(dim);

  // pi = sigma eps + c_hat Q, column by column clipping.
  auto drift = [&](const Matrix& state, double t) {
    const double sigma = schedule.sigma(t);
    ++result.denoiser_calls;
    if (rows == 0) return Matrix(sigma * denoiser.epsilon(state, t));
    GuidanceTerms g = guidance(denoiser, schedule, state, t, model, estimator);
    Matrix pi = sigma * g.epsilon;
    for (Index j = 0; j < state.cols(); ++j) {
      const double c_hat = clipping_coefficient(cfg.clipping, g.c, g.q.col(j).lpNorm<Eigen::Infinity>());
      pi.col(j) += c_hat * g.q.col(j);
    }
    return pi;
  };
  auto check = [&](const Matrix& state, double t, std::size_t step) {
    if (!state.allFinite())
      throw DivergenceError(t, step, "assimilation diverged at t=" + std::to_string(t) + ", step " + std::to_string(step));
  };

  for (std::size_t step = 0; step + 1 < result.times.size(); ++step) {
    const double t = result.times[step], t_minus = result.times[step + 1];
    z = ei_predictor_step(schedule, z, t, t_minus, drift(z, t));
    if (correct) forward_diffusion_corrector(z, t_minus, model.obs, schedule, noise.draw(rows));
    check(z, t_minus, step);
    if (cfg.corrector_steps == 0) continue;

    const double sigma_minus = schedule.sigma(t_minus);
    auto lmc_score = [&](const Matrix& pi) {
      return cfg.lmc == LmcMode::Literal ? Matrix(pi / sigma_minus) : Matrix(-pi / (sigma_minus * sigma_minus));
    };
    const double lmc_step = cfg.lmc == LmcMode::Literal ? cfg.delta : cfg.delta * sigma_minus * sigma_minus;
    Matrix s = lmc_score(drift(z, t));
    for (Index i = 0; i < cfg.corrector_steps; ++i) {
      if (cfg.fresh_score_per_lmc_step && i > 0) s = lmc_score(drift(z, t));
      z = lmc_corrector_step(z, s, lmc_step, noise.draw(dim));
      if (correct) forward_diffusion_corrector(z, t_minus, model.obs, schedule, noise.draw(rows));
      check(z, t_minus, step);
    }
  }
  result.samples = std::move(z);
  result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

}  // namespace soad
