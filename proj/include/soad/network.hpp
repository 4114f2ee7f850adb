#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "soad/denoiser.hpp"
#include "soad/schedule.hpp"

namespace soad {

struct NetworkConfig {
  Index channels = 0;       ///< features per window step
  Index window_length = 1;  ///< steps per window the instance evaluates on
  Index hidden = 128;
  Index depth = 4;          ///< hidden layers: one input layer plus (depth - 1) residual blocks
  Index embedding = 64;     ///< sinusoidal time-embedding width (even)
  Index kernel = 3;         ///< temporal convolution width across window steps (odd, 1 = per-step)
  /// Sites sharing weights along a periodic ring: each step holds `sites` cells with
  /// channels / sites features each. 1 treats the whole step as one feature vector;
  /// 0 lets train_dsm pick the grid size for 1-D layouts.
  Index sites = 1;
  Index spatial_kernel = 3;  ///< ring stencil width (odd), used when sites > 1
  /// Velocity: the trunk predicts v and eps = sigma_t z + mu_t v (needs mu^2 + sigma^2 = 1).
  /// Epsilon: the trunk output is eps directly.
  enum class Output { Velocity, Epsilon } output = Output::Velocity;
  ScheduleKind schedule = ScheduleKind::VpCosine;
};

NetworkConfig::Output parse_network_output(std::string_view name);
std::string to_string(NetworkConfig::Output output);

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
};

/// Small trainable noise estimator for windows of states.
///
/// A window is stored step-major. Internally every (sample, step, site) triple is a
/// column of features; with one site the features are the whole step. Every layer
/// is a convolution over steps (zero padded) and sites (periodic), so parameters
/// depend on neither the window length nor the ring size.
///
///   h0 = silu(conv_0(z) + W_emb phi(t))
///   h_i = h_{i-1} + silu(conv_i(h_{i-1}))    i = 1 .. depth-1
///   v = W_out h + b_out                      per step
///   eps = sigma_t z + mu_t v                 (Velocity output; Epsilon output returns v)
class WindowDenoiser final : public Denoiser {
 public:
  WindowDenoiser(NetworkConfig config, std::uint64_t seed);

  Index dimension() const override { return config_.channels * config_.window_length; }
  Matrix epsilon(const Matrix& z, double t) const override;
  std::unique_ptr<Linearization> linearize(const Matrix& z, double t) const override;

  const NetworkConfig& config() const noexcept { return config_; }
  /// Evaluate on windows of a different length; parameters are shared.
  void set_window_length(Index window_length);

  std::vector<Parameter>& parameters() noexcept { return params_; }
  const std::vector<Parameter>& parameters() const noexcept { return params_; }
  std::size_t parameter_count() const;

  /// Mean DSM loss (1 / 2B) sum_b ||eps_theta(z_t[:, b], t_b) - target[:, b]||^2 for a
  /// batch with per-sample diffusion times. Accumulates parameter gradients into
  /// Parameter::grad (after zeroing) when `with_gradients` is set.
  double dsm_loss(const Matrix& z_t, const RowVector& times, const Matrix& target) const;
  double dsm_loss_with_gradients(const Matrix& z_t, const RowVector& times, const Matrix& target);

  struct Tape;

 private:
  Matrix forward(const Matrix& z, const RowVector& times, Tape* tape) const;
  Matrix backward(const Tape& tape, const Matrix& d_out, std::vector<Parameter>* grads) const;

  NetworkConfig config_;
  std::vector<Parameter> params_;
  Vector frequencies_;
  NoiseSchedule schedule_;
  Index features_ = 0;
  Index taps_ = 1;
};

Matrix time_embedding(const Vector& frequencies, const RowVector& times);

}  // namespace soad
