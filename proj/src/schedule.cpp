#include "soad/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "soad/errors.hpp"

namespace soad {

ScheduleKind parse_schedule_kind(std::string_view name) {
  if (name == "vp-cosine") return ScheduleKind::VpCosine;
  if (name == "vp-linear") return ScheduleKind::VpLinear;
  throw ConfigError("unknown schedule kind: " + std::string(name));
}

std::string to_string(ScheduleKind kind) {
  switch (kind) {
    case ScheduleKind::VpCosine: return "vp-cosine";
    case ScheduleKind::VpLinear: return "vp-linear";
  }
  return "unknown";
}

NoiseSchedule::NoiseSchedule(ScheduleKind kind, double t_min, double t_max)
    : kind_(kind), t_min_(t_min), t_max_(t_max) {
  if (!(t_min > 0.0 && t_min < 1.0) || !(t_max > 0.0 && t_max <= 1.0) || !(t_min < t_max))
    throw ConfigError("schedule clamping bounds must satisfy 0 < t_min < t_max <= 1");
}

double NoiseSchedule::clamp(double t) const {
  if (!(t >= 0.0 && t <= 1.0)) throw DomainError("diffusion time outside [0, 1]: " + std::to_string(t));
  return std::clamp(t, t_min_, t_max_);
}

MuSigma NoiseSchedule::evaluate(ScheduleKind kind, double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw DomainError("diffusion time outside [0, 1]: " + std::to_string(t));
  switch (kind) {
    case ScheduleKind::VpCosine: {
      const double a = 0.5 * std::numbers::pi * t;
      return {std::cos(a), std::sin(a)};
    }
    case ScheduleKind::VpLinear: {
      const double mu = 1.0 - t;
      return {mu, std::sqrt(t * (2.0 - t))};
    }
  }
  throw ConfigError("unknown schedule kind");
}

MuSigma NoiseSchedule::mu_sigma(double t) const { return evaluate(kind_, clamp(t)); }

double NoiseSchedule::ratio(double t) const {
  const auto [mu, sigma] = mu_sigma(t);
  if (!(mu > 0.0)) throw DomainError("mu_t vanishes; noise-to-signal ratio undefined");
  return sigma / mu;
}

Vector NoiseSchedule::perturb(const Vector& z0, double t, const Vector& eps) const {
  if (z0.size() != eps.size()) throw ShapeError("perturb: state and noise dimensions differ");
  const auto [mu, sigma] = mu_sigma(t);
  return mu * z0 + sigma * eps;
}

Matrix NoiseSchedule::perturb(const Matrix& z0, double t, const Matrix& eps) const {
  if (z0.rows() != eps.rows() || z0.cols() != eps.cols())
    throw ShapeError("perturb: state and noise shapes differ");
  const auto [mu, sigma] = mu_sigma(t);
  return mu * z0 + sigma * eps;
}

}  // namespace soad
