#pragma once

#include <cstdint>
#include <vector>

#include "soad/layout.hpp"
#include "soad/network.hpp"
#include "soad/random.hpp"
#include "soad/schedule.hpp"

namespace soad {

struct TrainConfig {
  double learning_rate = 2e-4;
  double weight_decay = 1e-5;
  Index batch_size = 64;
  std::size_t num_steps = 2000;
  Index chunk_length = 9;
  std::uint64_t seed = 0;
};

/// Adam with L2 weight decay folded into the gradient (g + wd * theta).
class Adam {
 public:
  Adam(const std::vector<Parameter>& params, double learning_rate, double weight_decay,
       double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8);
  void step(std::vector<Parameter>& params);
  std::size_t iterations() const noexcept { return t_; }

 private:
  double lr_, wd_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<Matrix> m_, v_;
};

/// Valid chunk start offsets {0, ..., window_length - chunk_length}.
std::vector<Index> chunk_offsets(Index window_length, Index chunk_length);

/// One DSM minibatch: clean chunks z0, per-sample times, and injected noise.
struct DsmBatch {
  Matrix z0;
  RowVector times;
  Matrix noise;
};

DsmBatch sample_dsm_batch(const AugmentedTrajectory& data, Index chunk_length, Index batch_size, Rng& rng);

/// (1 / 2B) sum_b ||eps(mu_t z0 + sigma_t eps_b, t_b) - eps_b||^2 for any denoiser.
double dsm_loss(const Denoiser& denoiser, const NoiseSchedule& schedule, const DsmBatch& batch);

struct TrainResult {
  WindowDenoiser denoiser;
  std::vector<double> loss_trace;
};

/// Denoising score matching with Adam on random chunks of the (normalised) windows.
/// The returned network evaluates windows of `config.chunk_length` steps.
TrainResult train_dsm(const AugmentedTrajectory& data, const NoiseSchedule& schedule, const TrainConfig& config,
                      NetworkConfig network);

/// Continue training an existing network; appends to `loss_trace`.
void train_dsm(WindowDenoiser& denoiser, const AugmentedTrajectory& data, const NoiseSchedule& schedule,
               const TrainConfig& config, std::vector<double>& loss_trace);

}  // namespace soad
