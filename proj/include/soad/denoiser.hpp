#pragma once

#include <memory>

#include "soad/schedule.hpp"
#include "soad/types.hpp"

namespace soad {

/// Value of eps_theta at a fixed batch, together with its vector-Jacobian product.
class Linearization {
 public:
  virtual ~Linearization() = default;
  /// eps_theta(z_t, t), one column per sample.
  virtual const Matrix& value() const = 0;
  /// Column-wise J^T * cotangent, where J = d eps_theta / d z_t of that column.
  virtual Matrix vjp(const Matrix& cotangent) const = 0;
};

/// Noise estimator eps_theta(z_t, t) ~ -sigma_t * grad log p_t(z_t).
///
/// Batched: inputs are (dimension x batch) matrices. Implementations must be
/// deterministic and must not mutate state, so a single instance may be shared
/// between threads.
class Denoiser {
 public:
  virtual ~Denoiser() = default;

  virtual Index dimension() const = 0;
  virtual Matrix epsilon(const Matrix& z, double t) const;
  virtual std::unique_ptr<Linearization> linearize(const Matrix& z, double t) const = 0;

  Vector epsilon(const Vector& z, double t) const;

 protected:
  void check_input(const Matrix& z) const;
};

/// s = -eps / sigma_t.
Matrix score(const Denoiser& denoiser, const NoiseSchedule& schedule, const Matrix& z, double t);
Vector score(const Denoiser& denoiser, const NoiseSchedule& schedule, const Vector& z, double t);

/// Tweedie posterior mean: z0_hat = (z_t - sigma_t eps) / mu_t.
Matrix tweedie_mean(const Denoiser& denoiser, const NoiseSchedule& schedule, const Matrix& z, double t);
Vector tweedie_mean(const Denoiser& denoiser, const NoiseSchedule& schedule, const Vector& z, double t);

}  // namespace soad
