#pragma once

#include <string>
#include <string_view>

#include "soad/types.hpp"

namespace soad {

enum class ScheduleKind {
  VpCosine,  ///< mu = cos(pi t / 2), sigma = sin(pi t / 2)
  VpLinear,  ///< mu = 1 - t, sigma = sqrt(1 - mu^2)
};

ScheduleKind parse_schedule_kind(std::string_view name);
std::string to_string(ScheduleKind kind);

struct MuSigma {
  double mu;
  double sigma;
};

/// Forward diffusion p(z_t | z_0) = N(mu_t z_0, sigma_t^2 I).
///
/// Every coefficient query clamps t into [t_min, t_max] first, so that mu_t and
/// sigma_t are both strictly positive and the ratio r_t = sigma_t / mu_t stays
/// finite. Queries outside [0, 1] are rejected with DomainError.
class NoiseSchedule {
 public:
  NoiseSchedule() = default;
  NoiseSchedule(ScheduleKind kind, double t_min, double t_max);

  ScheduleKind kind() const noexcept { return kind_; }
  double t_min() const noexcept { return t_min_; }
  double t_max() const noexcept { return t_max_; }

  double clamp(double t) const;

  MuSigma mu_sigma(double t) const;
  double mu(double t) const { return mu_sigma(t).mu; }
  double sigma(double t) const { return mu_sigma(t).sigma; }
  double ratio(double t) const;

  /// z_t = mu_t z0 + sigma_t eps; columns of a matrix argument are independent samples.
  Vector perturb(const Vector& z0, double t, const Vector& eps) const;
  Matrix perturb(const Matrix& z0, double t, const Matrix& eps) const;

  /// Coefficients without clamping. Only defined on [0, 1].
  static MuSigma evaluate(ScheduleKind kind, double t);

 private:
  ScheduleKind kind_ = ScheduleKind::VpCosine;
  double t_min_ = 1e-4;
  double t_max_ = 1.0 - 1e-4;
};

}  // namespace soad
