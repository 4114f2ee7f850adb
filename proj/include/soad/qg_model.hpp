#pragma once

#include <array>
#include <cstdint>

#include "soad/spectral.hpp"

namespace soad {

/// Pseudo-spectral two-layer quasi-geostrophic model on a periodic square.
///
///   dq_i/dt + J(psi_i, q_i) + U_i dq_i/dx + beta_i dpsi_i/dx = ssd        (i = 1, 2)
///   with an extra -r_ek lap psi_2 drag on the lower layer.
///
/// Time stepping is third-order Adams-Bashforth (Euler, then AB2 for start-up),
/// followed by the exponential spectral filter as small-scale dissipation.
/// Advection is evaluated in flux form d(u q)/dx + d(v q)/dy.
class QGModel {
 public:
  explicit QGModel(QGConfig config);

  /// Layer-major flattened vorticity (2 * grid^2 values).
  void set_state(const Vector& q);
  Vector state() const;
  void step();
  std::size_t steps_taken() const noexcept { return steps_; }

  const QGConfig& config() const noexcept { return config_; }
  const SpectralGrid& grid() const noexcept { return grid_; }
  /// Spectral zero mode of layer `layer` (times grid^2 gives the spatial sum).
  std::complex<double> mean_mode(int layer) const { return qh_[layer](0, 0); }

 private:
  std::array<SpectralField, 2> tendency() const;

  QGConfig config_;
  SpectralGrid grid_;
  std::array<SpectralField, 2> qh_;
  std::array<SpectralField, 2> prev1_, prev2_;
  std::size_t steps_ = 0;
};

/// Small random initial vorticity (i.i.d. normal, amplitude `amplitude`), zero spatial mean.
Vector qg_random_initial_state(const QGConfig& config, std::uint64_t seed, double amplitude = 1e-7);

}  // namespace soad
