#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "soad/estimators.hpp"

namespace soad {

enum class ClippingMode {
  Literal,  ///< c_hat = max(1, 1 / ||Q||_inf)
  Capped,   ///< c_hat = min(c_t, 1 / ||Q||_inf)
  None,     ///< c_hat = c_t
};
ClippingMode parse_clipping_mode(std::string_view name);
std::string to_string(ClippingMode mode);

enum class LmcMode {
  Literal,  ///< s = pi / sigma, z += (delta / 2) s + sqrt(delta) xi
  Scaled,   ///< s = -pi / sigma^2 with step delta * sigma^2
};
LmcMode parse_lmc_mode(std::string_view name);
std::string to_string(LmcMode mode);

struct SamplerConfig {
  Index num_steps = 256;
  double delta = 0.25;
  Index corrector_steps = 5;
  ClippingMode clipping = ClippingMode::Literal;
  LmcMode lmc = LmcMode::Scaled;
  bool fresh_score_per_lmc_step = false;
  bool forward_corrector = true;
  std::uint64_t seed = 0;

  void validate() const;
};

/// z_{t-} = (mu_{t-}/mu_t) z_t + (sigma_{t-}/sigma_t - mu_{t-}/mu_t) pi.
Matrix ei_predictor_step(const NoiseSchedule& schedule, const Matrix& z, double t, double t_minus, const Matrix& pi);
/// z + (step / 2) s + sqrt(step) xi.
Matrix lmc_corrector_step(const Matrix& z, const Matrix& s, double step, const Matrix& xi);
Matrix lmc_corrector_step(const Matrix& z, const Matrix& s, double step, Rng& rng);

/// Replace every observed coordinate whose noise level is <= r_t by mu_t (y + sqrt(r_t^2 - sigma_i^2) eps').
/// `noise` holds eps' per observation row, one column per sample.
void forward_diffusion_corrector(Matrix& z, double t, const ObservationSet& obs, const NoiseSchedule& schedule,
                                 const Matrix& noise);

/// Clipping coefficient for one column.
double clipping_coefficient(ClippingMode mode, double c_t, double q_inf_norm);

struct AssimilationResult {
  Matrix samples;  ///< final z_0, one column per ensemble member
  std::vector<double> times;
  double wall_seconds = 0.0;
  std::uint64_t seed = 0;
  std::size_t denoiser_calls = 0;

  Vector mean() const { return samples.rowwise().mean(); }
};

/// Reverse-time posterior sampling (EI predictor, forward-diffusion corrector, Langevin corrector).
AssimilationResult assimilate(const Denoiser& denoiser, const NoiseSchedule& schedule, const ObservationModel& model,
                              const EstimatorConfig& estimator, const SamplerConfig& cfg, Index ensemble);

/// Uniform reverse grid t_max = t_0 > t_1 > ... > t_n = t_min.
std::vector<double> reverse_time_grid(const NoiseSchedule& schedule, Index num_steps);

}  // namespace soad
