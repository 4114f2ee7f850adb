#include "soad/analytic_gaussian.hpp"

#include <cmath>
#include <numbers>

#include "soad/errors.hpp"

namespace soad {

namespace {

class SymmetricLinearization final : public Linearization {
 public:
  SymmetricLinearization(Matrix value, Matrix jacobian)
      : value_(std::move(value)), jacobian_(std::move(jacobian)) {}
  const Matrix& value() const override { return value_; }
  Matrix vjp(const Matrix& cotangent) const override {
    if (cotangent.rows() != jacobian_.rows()) throw ShapeError("vjp: cotangent dimension mismatch");
    return jacobian_ * cotangent;
  }

 private:
  Matrix value_;
  Matrix jacobian_;  // symmetric, so J^T = J
};

}  // namespace

AnalyticGaussianScore::AnalyticGaussianScore(Vector mean, Matrix covariance, NoiseSchedule schedule)
    : mean_(std::move(mean)), covariance_(std::move(covariance)), schedule_(schedule) {
  const Index n = mean_.size();
  if (covariance_.rows() != n || covariance_.cols() != n)
    throw ShapeError("analytic Gaussian: covariance must be square and match the mean");
  if ((covariance_ - covariance_.transpose()).norm() > 1e-10 * (1.0 + covariance_.norm()))
    throw InputError("analytic Gaussian: covariance is not symmetric");
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (covariance_ + covariance_.transpose()));
  if (eig.info() != Eigen::Success) throw NumericalError("analytic Gaussian: eigendecomposition failed");
  eigenvalues_ = eig.eigenvalues();
  const double floor = -1e-10 * std::max(1.0, eigenvalues_.cwiseAbs().maxCoeff());
  if (eigenvalues_.minCoeff() < floor) throw InputError("analytic Gaussian: covariance is not positive semi-definite");
  eigenvalues_ = eigenvalues_.cwiseMax(0.0);
  eigenvectors_ = eig.eigenvectors();
}

Matrix AnalyticGaussianScore::marginal_precision(double t) const {
  const auto [mu, sigma] = schedule_.mu_sigma(t);
  const Vector inv = (mu * mu * eigenvalues_.array() + sigma * sigma).inverse().matrix();
  return eigenvectors_ * inv.asDiagonal() * eigenvectors_.transpose();
}

Matrix AnalyticGaussianScore::epsilon(const Matrix& z, double t) const {
  check_input(z);
  const auto [mu, sigma] = schedule_.mu_sigma(t);
  return sigma * marginal_precision(t) * (z.colwise() - mu * mean_);
}

std::unique_ptr<Linearization> AnalyticGaussianScore::linearize(const Matrix& z, double t) const {
  check_input(z);
  const auto [mu, sigma] = schedule_.mu_sigma(t);
  Matrix jac = sigma * marginal_precision(t);
  Matrix value = jac * (z.colwise() - mu * mean_);
  return std::make_unique<SymmetricLinearization>(std::move(value), std::move(jac));
}

double AnalyticGaussianScore::log_density(const Vector& z, double t) const {
  if (z.size() != dimension()) throw ShapeError("log_density: dimension mismatch");
  const auto [mu, sigma] = schedule_.mu_sigma(t);
  const Vector var = mu * mu * eigenvalues_.array() + sigma * sigma;
  const Vector proj = eigenvectors_.transpose() * (z - mu * mean_);
  const double quad = (proj.array().square() / var.array()).sum();
  const double logdet = var.array().log().sum();
  return -0.5 * (quad + logdet + static_cast<double>(dimension()) * std::log(2.0 * std::numbers::pi));
}

}  // namespace soad
