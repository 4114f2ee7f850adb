#pragma once

#include "soad/types.hpp"

namespace soad {

struct Lorenz96Config {
  Index dimension = 40;
  double forcing = 8.0;
  double dt_integrate = 0.01;
  double dt_snapshot = 0.05;
  Index warmup_steps = 1000;  ///< integration steps discarded before the first snapshot

  Index steps_per_snapshot() const;
  void validate() const;
};

/// dx_i/dt = (x_{i+1} - x_{i-2}) x_{i-1} - x_i + F, indices cyclic.
Vector l96_rhs(const Vector& x, double forcing);
/// Classical fourth-order Runge-Kutta step.
Vector l96_rk4_step(const Vector& x, double forcing, double dt);
/// Snapshots (one column each) after warm-up, spaced by dt_snapshot.
/// Throws DivergenceError with the integration step index on a non-finite state.
Matrix l96_integrate(const Lorenz96Config& config, const Vector& x0, Index num_snapshots);

}  // namespace soad
