#include "soad/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Cholesky>

#include "soad/errors.hpp"

namespace soad {

namespace {

Eigen::LLT<Matrix> factor(const Matrix& S, const char* what) {
  Eigen::LLT<Matrix> llt(S);
  if (llt.info() != Eigen::Success) throw NumericalError(std::string(what) + ": singular innovation covariance");
  return llt;
}

Matrix symmetrize(const Matrix& M) { return 0.5 * (M + M.transpose()); }

}  // namespace

GaussianPosterior exact_gaussian_posterior(const Vector& m, const Matrix& C, const Matrix& T, const Matrix& R,
                                           const Vector& y) {
  const Index n = m.size();
  if (C.rows() != n || C.cols() != n) throw ShapeError("posterior: covariance does not match the mean");
  if (T.rows() == 0) return {m, C};
  if (T.cols() != n || R.rows() != T.rows() || R.cols() != T.rows() || y.size() != T.rows())
    throw ShapeError("posterior: observation shapes disagree");
  const Matrix CT = C * T.transpose();
  const auto llt = factor(R + T * CT, "exact_gaussian_posterior");
  const Matrix K = llt.solve(CT.transpose()).transpose();
  GaussianPosterior post;
  post.mean = m + K * (y - T * m);
  post.cov = symmetrize(C - K * CT.transpose());
  return post;
}

void LinearGaussianModel::validate() const {
  const Index n = state_dim();
  if (A.rows() != n || A.cols() != n || Q.rows() != n || Q.cols() != n || P0.rows() != n || P0.cols() != n)
    throw ShapeError("linear-Gaussian model: state matrices disagree with m0");
  if (H.size() != R.size() || H.empty()) throw ShapeError("linear-Gaussian model: need one H and R per step");
  for (std::size_t k = 0; k < H.size(); ++k)
    if ((H[k].rows() > 0 && H[k].cols() != n) || R[k].rows() != H[k].rows() || R[k].cols() != H[k].rows())
      throw ShapeError("linear-Gaussian model: observation matrices disagree");
}

SmootherResult kalman_smoother(const LinearGaussianModel& model, const std::vector<Vector>& observations) {
  model.validate();
  const auto L = static_cast<std::size_t>(model.steps());
  if (observations.size() != L) throw ShapeError("kalman_smoother: one observation vector per step required");
  SmootherResult out;
  std::vector<Vector> pred_mean(L);
  std::vector<Matrix> pred_cov(L);
  for (std::size_t k = 0; k < L; ++k) {
    pred_mean[k] = k == 0 ? model.m0 : Vector(model.A * out.filtered_mean[k - 1]);
    pred_cov[k] = k == 0 ? model.P0 : Matrix(symmetrize(model.A * out.filtered_cov[k - 1] * model.A.transpose() + model.Q));
    auto post = exact_gaussian_posterior(pred_mean[k], pred_cov[k], model.H[k], model.R[k], observations[k]);
    out.filtered_mean.push_back(std::move(post.mean));
    out.filtered_cov.push_back(std::move(post.cov));
  }
  out.mean.resize(L);
  out.cov.resize(L);
  out.mean[L - 1] = out.filtered_mean[L - 1];
  out.cov[L - 1] = out.filtered_cov[L - 1];
  for (std::size_t k = L - 1; k-- > 0;) {
    const auto llt = factor(pred_cov[k + 1], "kalman_smoother");
    const Matrix G = llt.solve(model.A * out.filtered_cov[k]).transpose();
    out.mean[k] = out.filtered_mean[k] + G * (out.mean[k + 1] - pred_mean[k + 1]);
    out.cov[k] = symmetrize(out.filtered_cov[k] + G * (out.cov[k + 1] - pred_cov[k + 1]) * G.transpose());
  }
  return out;
}

GaussianPosterior stacked_prior(const LinearGaussianModel& model) {
  model.validate();
  const Index n = model.state_dim(), L = model.steps();
  Vector mean(n * L);
  Matrix cov(n * L, n * L);
  std::vector<Matrix> marginal(static_cast<std::size_t>(L));
  Vector m = model.m0;
  Matrix P = model.P0;
  for (Index k = 0; k < L; ++k) {
    if (k > 0) {
      m = model.A * m;
      P = model.A * P * model.A.transpose() + model.Q;
    }
    mean.segment(k * n, n) = m;
    marginal[static_cast<std::size_t>(k)] = P;
  }
  // Cov(x_j, x_k) = A^{j-k} P_k for j >= k.
  for (Index k = 0; k < L; ++k) {
    Matrix block = marginal[static_cast<std::size_t>(k)];
    for (Index j = k; j < L; ++j) {
      cov.block(j * n, k * n, n, n) = block;
      cov.block(k * n, j * n, n, n) = block.transpose();
      block = model.A * block;
    }
  }
  return {mean, symmetrize(cov)};
}

StackedObservation stacked_observation(const LinearGaussianModel& model, const std::vector<Vector>& observations) {
  model.validate();
  const Index n = model.state_dim(), L = model.steps();
  Index rows = 0;
  for (const auto& h : model.H) rows += h.rows();
  StackedObservation s{Matrix::Zero(rows, n * L), Matrix::Zero(rows, rows), Vector(rows)};
  Index r = 0;
  for (Index k = 0; k < L; ++k) {
    const auto& h = model.H[static_cast<std::size_t>(k)];
    if (observations[static_cast<std::size_t>(k)].size() != h.rows()) throw ShapeError("observation size mismatch");
    s.T.block(r, k * n, h.rows(), n) = h;
    s.R.block(r, r, h.rows(), h.rows()) = model.R[static_cast<std::size_t>(k)];
    s.y.segment(r, h.rows()) = observations[static_cast<std::size_t>(k)];
    r += h.rows();
  }
  return s;
}

// ---------------------------------------------------------------------------

Vector DensityTable::node(std::size_t flat) const {
  Vector x(dimension());
  for (Index d = dimension() - 1; d >= 0; --d) {
    const auto& ax = axes[static_cast<std::size_t>(d)];
    x[d] = ax[flat % ax.size()];
    flat /= ax.size();
  }
  return x;
}

Vector DensityTable::mean() const {
  Vector m = Vector::Zero(dimension());
  for (std::size_t i = 0; i < weights.size(); ++i) m += weights[i] * node(i);
  return m;
}

Matrix DensityTable::cov() const {
  const Vector m = mean();
  Matrix c = Matrix::Zero(dimension(), dimension());
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const Vector d = node(i) - m;
    c += weights[i] * d * d.transpose();
  }
  return c;
}

DensityTable brute_force_posterior(const LogDensity& log_prior, const LogDensity& log_likelihood, const GridSpec& grid) {
  const std::size_t dim = grid.points.size();
  if (dim < 1 || dim > 2 || grid.lower.size() != dim || grid.upper.size() != dim)
    throw InputError("brute_force_posterior supports 1-D and 2-D grids");
  DensityTable table;
  std::vector<std::vector<double>> trap(dim);
  std::size_t total = 1;
  for (std::size_t d = 0; d < dim; ++d) {
    const Index n = grid.points[d];
    if (n < 2 || !(grid.upper[d] > grid.lower[d])) throw InputError("grid axis needs >= 2 points and upper > lower");
    const double h = (grid.upper[d] - grid.lower[d]) / static_cast<double>(n - 1);
    std::vector<double> ax(static_cast<std::size_t>(n)), w(static_cast<std::size_t>(n), h);
    for (Index i = 0; i < n; ++i) ax[static_cast<std::size_t>(i)] = grid.lower[d] + h * static_cast<double>(i);
    w.front() = w.back() = 0.5 * h;
    table.axes.push_back(std::move(ax));
    trap[d] = std::move(w);
    total *= static_cast<std::size_t>(n);
  }
  std::vector<double> logd(total);
  double peak = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < total; ++i) {
    const Vector x = table.node(i);
    logd[i] = log_prior(x) + log_likelihood(x);
    peak = std::max(peak, logd[i]);
  }
  if (!std::isfinite(peak)) throw NumericalError("brute_force_posterior: density vanishes on the grid");
  table.density.resize(total);
  table.weights.resize(total);
  double mass = 0.0;
  for (std::size_t i = 0; i < total; ++i) {
    double w = 1.0;
    std::size_t rest = i;
    for (std::size_t d = dim; d-- > 0;) {
      w *= trap[d][rest % trap[d].size()];
      rest /= trap[d].size();
    }
    table.density[i] = std::exp(logd[i] - peak);
    table.weights[i] = w * table.density[i];
    mass += table.weights[i];
  }
  double boundary = 0.0;
  for (std::size_t i = 0; i < total; ++i) {
    table.density[i] /= mass;
    table.weights[i] /= mass;
    std::size_t rest = i;
    bool edge = false;
    for (std::size_t d = dim; d-- > 0;) {
      const std::size_t n = table.axes[d].size(), j = rest % n;
      edge = edge || j == 0 || j + 1 == n;
      rest /= n;
    }
    if (edge) boundary += table.weights[i];
  }
  table.coverage_warning = boundary > 1e-6;
  return table;
}

}  // namespace soad
