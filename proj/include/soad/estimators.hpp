#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "soad/augment.hpp"
#include "soad/denoiser.hpp"

namespace soad {

enum class EstimatorKind { Dps, Dmps, Sda, Soad };

EstimatorKind parse_estimator_kind(std::string_view name);
std::string to_string(EstimatorKind kind);

struct EstimatorConfig {
  EstimatorKind kind = EstimatorKind::Soad;
  double sigma_z = 1.0;
  double gamma = 1.0;

  void validate() const;
};

/// v_t = sigma_z^2 r_t^2 / (sigma_z^2 + r_t^2), the scalar covariance of z0 given z_t under N(0, sigma_z^2 I).
double sigma_0_given_t(double sigma_z, double r_t);

/// Per-row variance added to the observation noise by each estimator at ratio r_t.
double estimator_variance(const EstimatorConfig& cfg, double r_t);

/// Nonlinear map applied to the denoised window before selection. When present, the denoiser
/// works on raw-state windows and predictions are T * augment(x0_hat).
struct ObservationLift {
  ChannelLayout state_layout;
  OperatorList operators;
};

/// Observations plus how the denoiser's space maps onto the observed coordinates.
struct ObservationModel {
  ObservationSet obs;
  std::optional<ObservationLift> lift;

  /// Dimension of the windows the denoiser sees.
  Index dimension() const;
  /// Observation-window values of denoised windows, one column per sample.
  Matrix predict(const Matrix& z0) const;
  /// Transpose of d predict / d z0 applied to a per-row cotangent.
  Matrix predict_vjp(const Matrix& z0, const Matrix& cotangent) const;
};

ObservationModel linear_model(ObservationSet obs);

/// Terms shared by the likelihood gradients and the sampler drift at one (Z, t).
///
/// With s_i^2 = sigma_i^2 + extra and reference variance s^2 = sigma_obs^2 + extra:
///   Q = grad_z sum_i (s^2 / s_i^2) (mu y - mu pred(z0_hat))_i^2
///   c = (r^2 / 2) / s^2
/// so that c * Q = -sigma^2 grad log p(y | z_t). For SOAD with uniform noise Q reduces to
/// grad || mu y - T z + T sigma eps ||^2.
struct GuidanceTerms {
  Matrix epsilon;            ///< eps_theta(Z, t)
  Matrix q;                  ///< Q per column (zero when there are no observations)
  double c = 0.0;            ///< full coefficient c_t
  Vector log_likelihood;     ///< per column
};

GuidanceTerms guidance(const Denoiser& denoiser, const NoiseSchedule& schedule, const Matrix& z, double t,
                       const ObservationModel& model, const EstimatorConfig& cfg);

/// log N(y; pred, diag(s_i^2)) of each column.
Vector log_likelihood(const Denoiser& denoiser, const NoiseSchedule& schedule, const Matrix& z, double t,
                      const ObservationModel& model, const EstimatorConfig& cfg);
/// grad_z log p(y | z_t) of each column.
Matrix log_likelihood_grad(const Denoiser& denoiser, const NoiseSchedule& schedule, const Matrix& z, double t,
                           const ObservationModel& model, const EstimatorConfig& cfg);

/// Q_t for the SOAD estimator.
Vector soad_likelihood_grad(const Denoiser& denoiser, const NoiseSchedule& schedule, const Vector& z_t, double t,
                            const ObservationModel& model, const EstimatorConfig& cfg);
Vector dps_likelihood_grad(const Denoiser& denoiser, const NoiseSchedule& schedule, const Vector& z_t, double t,
                           const ObservationModel& model, const EstimatorConfig& cfg);
Vector dmps_likelihood_grad(const Denoiser& denoiser, const NoiseSchedule& schedule, const Vector& z_t, double t,
                            const ObservationModel& model, const EstimatorConfig& cfg);
Vector sda_likelihood_grad(const Denoiser& denoiser, const NoiseSchedule& schedule, const Vector& z_t, double t,
                           const ObservationModel& model, const EstimatorConfig& cfg);

/// Conditional score grad log p_t(z_t) + grad log p(y | z_t).
Matrix conditional_score(const Denoiser& denoiser, const NoiseSchedule& schedule, const Matrix& z, double t,
                         const ObservationModel& model, const EstimatorConfig& cfg);

}  // namespace soad
