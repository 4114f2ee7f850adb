#pragma once

#include <memory>

#include "soad/denoiser.hpp"

namespace soad {

/// Exact noise estimator for Gaussian data N(mean, covariance).
///
/// The diffused marginal is p_t = N(mu_t m, mu_t^2 C + sigma_t^2 I), so
/// eps(z_t, t) = sigma_t (mu_t^2 C + sigma_t^2 I)^{-1} (z_t - mu_t m).
/// The covariance may be singular (positive semi-definite); the marginal stays
/// non-degenerate for every clamped t because sigma_t > 0.
class AnalyticGaussianScore final : public Denoiser {
 public:
  AnalyticGaussianScore(Vector mean, Matrix covariance, NoiseSchedule schedule);

  Index dimension() const override { return mean_.size(); }
  Matrix epsilon(const Matrix& z, double t) const override;
  std::unique_ptr<Linearization> linearize(const Matrix& z, double t) const override;

  /// (mu_t^2 C + sigma_t^2 I)^{-1}
  Matrix marginal_precision(double t) const;
  double log_density(const Vector& z, double t) const;

  const Vector& mean() const noexcept { return mean_; }
  const Matrix& covariance() const noexcept { return covariance_; }
  const NoiseSchedule& schedule() const noexcept { return schedule_; }

 private:
  Vector mean_;
  Matrix covariance_;
  Matrix eigenvectors_;
  Vector eigenvalues_;
  NoiseSchedule schedule_;
};

}  // namespace soad
