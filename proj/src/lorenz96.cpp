#include "soad/lorenz96.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "soad/errors.hpp"

namespace soad {

Index Lorenz96Config::steps_per_snapshot() const {
  return std::max<Index>(1, static_cast<Index>(std::llround(dt_snapshot / dt_integrate)));
}

void Lorenz96Config::validate() const {
  if (dimension < 4) throw ConfigError("lorenz96.dimension must be >= 4");
  if (!(dt_integrate > 0.0)) throw ConfigError("lorenz96.dt_integrate must be > 0");
  if (!(dt_snapshot >= dt_integrate)) throw ConfigError("lorenz96.dt_snapshot must be >= dt_integrate");
  if (warmup_steps < 0) throw ConfigError("lorenz96.warmup_steps must be >= 0");
}

Vector l96_rhs(const Vector& x, double forcing) {
  const Index d = x.size();
  if (d < 4) throw ShapeError("lorenz96 needs dimension >= 4");
  Vector dx(d);
  for (Index i = 0; i < d; ++i) {
    const double xp1 = x[(i + 1) % d], xm1 = x[(i + d - 1) % d], xm2 = x[(i + d - 2) % d];
    dx[i] = (xp1 - xm2) * xm1 - x[i] + forcing;
  }
  return dx;
}

Vector l96_rk4_step(const Vector& x, double forcing, double dt) {
  const Vector k1 = l96_rhs(x, forcing);
  const Vector k2 = l96_rhs(x + 0.5 * dt * k1, forcing);
  const Vector k3 = l96_rhs(x + 0.5 * dt * k2, forcing);
  const Vector k4 = l96_rhs(x + dt * k3, forcing);
  return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

Matrix l96_integrate(const Lorenz96Config& config, const Vector& x0, Index num_snapshots) {
  config.validate();
  if (x0.size() != config.dimension) throw ShapeError("lorenz96: initial state has the wrong dimension");
  if (!x0.allFinite()) throw InputError("lorenz96: initial state is not finite");
  Matrix out(config.dimension, num_snapshots);
  Vector x = x0;
  std::size_t step = 0;
  auto advance = [&] {
    x = l96_rk4_step(x, config.forcing, config.dt_integrate);
    ++step;
    if (!x.allFinite())
      throw DivergenceError(static_cast<double>(step) * config.dt_integrate, step,
                            "lorenz96 blew up at integration step " + std::to_string(step));
  };
  for (Index i = 0; i < config.warmup_steps; ++i) advance();
  const Index every = config.steps_per_snapshot();
  for (Index s = 0; s < num_snapshots; ++s) {
    if (s > 0)
      for (Index i = 0; i < every; ++i) advance();
    out.col(s) = x;
  }
  return out;
}

}  // namespace soad
