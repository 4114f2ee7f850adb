#include "soad/denoiser.hpp"

#include "soad/errors.hpp"

namespace soad {

void Denoiser::check_input(const Matrix& z) const {
  if (z.rows() != dimension())
    throw ShapeError("denoiser input has " + std::to_string(z.rows()) + " rows, expected " +
                     std::to_string(dimension()));
}

Matrix Denoiser::epsilon(const Matrix& z, double t) const { return linearize(z, t)->value(); }

Vector Denoiser::epsilon(const Vector& z, double t) const {
  return epsilon(Matrix(z), t).col(0);
}

Matrix score(const Denoiser& denoiser, const NoiseSchedule& schedule, const Matrix& z, double t) {
  const double sigma = schedule.sigma(t);
  if (!(sigma > 0.0)) throw DomainError("score undefined where sigma_t = 0");
  return -denoiser.epsilon(z, t) / sigma;
}

Vector score(const Denoiser& denoiser, const NoiseSchedule& schedule, const Vector& z, double t) {
  return score(denoiser, schedule, Matrix(z), t).col(0);
}

Matrix tweedie_mean(const Denoiser& denoiser, const NoiseSchedule& schedule, const Matrix& z, double t) {
  const auto [mu, sigma] = schedule.mu_sigma(t);
  if (!(mu > 0.0)) throw DomainError("Tweedie mean undefined where mu_t = 0");
  return (z - sigma * denoiser.epsilon(z, t)) / mu;
}

Vector tweedie_mean(const Denoiser& denoiser, const NoiseSchedule& schedule, const Vector& z, double t) {
  return tweedie_mean(denoiser, schedule, Matrix(z), t).col(0);
}

}  // namespace soad
