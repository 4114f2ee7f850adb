#pragma once

#include <functional>
#include <vector>

#include "soad/types.hpp"

namespace soad {

struct GaussianPosterior {
  Vector mean;
  Matrix cov;
};

/// Conditioning of N(m, C) on y = T x + e, e ~ N(0, R). T may have zero rows.
GaussianPosterior exact_gaussian_posterior(const Vector& m, const Matrix& C, const Matrix& T, const Matrix& R,
                                           const Vector& y);

/// x_{k+1} = A x_k + w_k, w_k ~ N(0, Q);  y_k = H_k x_k + e_k, e_k ~ N(0, R_k);  x_0 ~ N(m0, P0).
struct LinearGaussianModel {
  Matrix A;
  Matrix Q;
  std::vector<Matrix> H;  ///< per step; zero rows for unobserved steps
  std::vector<Matrix> R;
  Vector m0;
  Matrix P0;

  Index state_dim() const { return m0.size(); }
  Index steps() const { return static_cast<Index>(H.size()); }
  void validate() const;
};

struct SmootherResult {
  std::vector<Vector> mean;
  std::vector<Matrix> cov;
  std::vector<Vector> filtered_mean;
  std::vector<Matrix> filtered_cov;
};

/// Kalman filter followed by the Rauch-Tung-Striebel backward pass.
SmootherResult kalman_smoother(const LinearGaussianModel& model, const std::vector<Vector>& observations);

/// Joint prior of the step-major window (x_0, ..., x_{L-1}).
GaussianPosterior stacked_prior(const LinearGaussianModel& model);
/// Block-diagonal observation matrix and noise covariance of the whole window, with stacked y.
struct StackedObservation {
  Matrix T;
  Matrix R;
  Vector y;
};
StackedObservation stacked_observation(const LinearGaussianModel& model, const std::vector<Vector>& observations);

/// Normalised posterior density on a tensor-product grid of dimension 1 or 2.
struct GridSpec {
  std::vector<double> lower;
  std::vector<double> upper;
  std::vector<Index> points;
};

struct DensityTable {
  std::vector<std::vector<double>> axes;
  std::vector<double> density;   ///< row-major over axes (last axis fastest)
  std::vector<double> weights;   ///< probability mass of each node (density times trapezoid weight)
  bool coverage_warning = false; ///< mass on the boundary band exceeds 1e-6

  Index dimension() const { return static_cast<Index>(axes.size()); }
  Vector mean() const;
  Matrix cov() const;
  Vector node(std::size_t flat) const;
};

using LogDensity = std::function<double(const Vector&)>;

DensityTable brute_force_posterior(const LogDensity& log_prior, const LogDensity& log_likelihood, const GridSpec& grid);

}  // namespace soad
