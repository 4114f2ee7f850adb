#pragma once

#include <array>
#include <complex>

#include <Eigen/Dense>

#include "soad/types.hpp"

namespace soad {

/// Two-layer quasi-geostrophic parameters (SI units).
struct QGConfig {
  Index grid = 32;            ///< points per side of the periodic square
  double domain = 1e6;        ///< side length L
  double r_ek = 5.767e-7;     ///< linear drag in the lower layer
  double filter_factor = 23.6;
  double g = 9.81;
  double beta = 1.5e-11;
  double rd = 1.5e4;          ///< deformation radius
  double H1 = 500.0;
  double H2 = 2000.0;
  double U1 = 0.025;
  double U2 = 0.0;
  double dt = 3600.0;         ///< integration step in seconds

  double delta() const { return H1 / H2; }
  double F1() const { return 1.0 / (rd * rd * (1.0 + delta())); }
  double F2() const { return delta() * F1(); }
  double beta1() const { return beta + F1() * (U1 - U2); }
  double beta2() const { return beta - F2() * (U1 - U2); }
  double dx() const { return domain / static_cast<double>(grid); }
  void validate() const;
};

/// Real field on the grid; row index is y, column index is x. Flattened row-major.
using Field = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using SpectralField = Eigen::Matrix<std::complex<double>, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// FFT machinery and wavenumbers for a periodic square grid.
class SpectralGrid {
 public:
  explicit SpectralGrid(const QGConfig& config);

  SpectralField forward(const Field& f) const;
  /// Real part of the inverse transform.
  Field inverse(const SpectralField& f) const;

  Index size() const noexcept { return n_; }
  /// Angular wavenumbers along x (columns) and y (rows).
  double k(Index col) const { return kx_[col]; }
  double l(Index row) const { return ky_[row]; }
  double wv2(Index row, Index col) const { return kx_[col] * kx_[col] + ky_[row] * ky_[row]; }
  /// Derivative multiplier i*k for d/dx (zero on the Nyquist column).
  std::complex<double> ddx(Index col) const { return {0.0, nyquist(col) ? 0.0 : kx_[col]}; }
  std::complex<double> ddy(Index row) const { return {0.0, nyquist(row) ? 0.0 : ky_[row]}; }
  /// Exponential small-scale dissipation filter.
  const Field& filter() const noexcept { return filter_; }

 private:
  bool nyquist(Index i) const { return n_ % 2 == 0 && i == n_ / 2; }
  Index n_;
  Vector kx_, ky_;
  Field filter_;
};

/// Solve q1 = lap psi1 + F1 (psi2 - psi1), q2 = lap psi2 + F2 (psi1 - psi2) per wavenumber.
/// The zero mode of psi is set to 0.
std::array<SpectralField, 2> invert_pv(const SpectralGrid& grid, const QGConfig& config,
                                       const std::array<SpectralField, 2>& qh);
std::array<SpectralField, 2> pv_from_streamfunction(const SpectralGrid& grid, const QGConfig& config,
                                                    const std::array<SpectralField, 2>& psih);

/// Layer vorticities (flattened, layer-major) to scaled velocities (u1, v1, u2, v2).
/// u = -d psi / dy, v = d psi / dx; output channel c is multiplied by scale[c].
Vector vort2vel(const Vector& q, const QGConfig& config, const std::array<double, 4>& scale);
/// Transpose of the linear map vort2vel.
Vector vort2vel_adjoint(const Vector& velocity, const QGConfig& config, const std::array<double, 4>& scale);

}  // namespace soad
