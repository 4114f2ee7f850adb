#include "soad/spectral.hpp"

#include <cmath>
#include <numbers>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "soad/errors.hpp"

namespace soad {

namespace {

using Complex = std::complex<double>;

void fft_rows_then_cols(SpectralField& f, bool inverse) {
  Eigen::FFT<double> fft;
  const Index n = f.rows();
  std::vector<Complex> in(static_cast<std::size_t>(n)), out(static_cast<std::size_t>(n));
  for (Index r = 0; r < n; ++r) {
    for (Index c = 0; c < n; ++c) in[c] = f(r, c);
    inverse ? fft.inv(out, in) : fft.fwd(out, in);
    for (Index c = 0; c < n; ++c) f(r, c) = out[c];
  }
  for (Index c = 0; c < n; ++c) {
    for (Index r = 0; r < n; ++r) in[r] = f(r, c);
    inverse ? fft.inv(out, in) : fft.fwd(out, in);
    for (Index r = 0; r < n; ++r) f(r, c) = out[r];
  }
}

std::array<Field, 2> split_layers(const Vector& q, Index n) {
  if (q.size() != 2 * n * n) throw ShapeError("expected two layers of " + std::to_string(n) + "x" + std::to_string(n));
  std::array<Field, 2> out;
  for (int layer = 0; layer < 2; ++layer)
    out[layer] = Eigen::Map<const Field>(q.data() + layer * n * n, n, n);
  return out;
}

}  // namespace

void QGConfig::validate() const {
  if (grid < 4) throw ConfigError("QG grid must have at least 4 points per side");
  if (!(domain > 0 && rd > 0 && H1 > 0 && H2 > 0 && dt > 0 && g > 0))
    throw ConfigError("QG: domain, rd, H1, H2, dt and g must be positive");
  if (!(r_ek >= 0 && filter_factor >= 0)) throw ConfigError("QG: drag and filter factor must be non-negative");
}

SpectralGrid::SpectralGrid(const QGConfig& config) : n_(config.grid) {
  config.validate();
  kx_.resize(n_);
  ky_.resize(n_);
  const double base = 2.0 * std::numbers::pi / config.domain;
  for (Index i = 0; i < n_; ++i) {
    const Index m = i <= n_ / 2 ? i : i - n_;
    kx_[i] = base * static_cast<double>(m);
    ky_[i] = kx_[i];
  }
  const double dx = config.dx();
  const double cphi = 0.65 * std::numbers::pi;
  filter_.resize(n_, n_);
  for (Index r = 0; r < n_; ++r) {
    for (Index c = 0; c < n_; ++c) {
      const double wvx = std::sqrt(kx_[c] * kx_[c] + ky_[r] * ky_[r]) * dx;
      filter_(r, c) = wvx > cphi ? std::exp(-config.filter_factor * std::pow(wvx - cphi, 4)) : 1.0;
    }
  }
}

SpectralField SpectralGrid::forward(const Field& f) const {
  if (f.rows() != n_ || f.cols() != n_) throw ShapeError("spectral: field shape mismatch");
  SpectralField out = f.cast<Complex>();
  fft_rows_then_cols(out, false);
  return out;
}

Field SpectralGrid::inverse(const SpectralField& f) const {
  if (f.rows() != n_ || f.cols() != n_) throw ShapeError("spectral: field shape mismatch");
  SpectralField tmp = f;
  fft_rows_then_cols(tmp, true);
  return tmp.real();
}

std::array<SpectralField, 2> invert_pv(const SpectralGrid& grid, const QGConfig& config,
                                       const std::array<SpectralField, 2>& qh) {
  const Index n = grid.size();
  const double F1 = config.F1(), F2 = config.F2();
  std::array<SpectralField, 2> psi{SpectralField::Zero(n, n), SpectralField::Zero(n, n)};
  for (Index r = 0; r < n; ++r) {
    for (Index c = 0; c < n; ++c) {
      const double wv2 = grid.wv2(r, c);
      if (wv2 == 0.0) continue;
      const double det = wv2 * (wv2 + F1 + F2);
      if (!(det > 0.0) || !std::isfinite(det)) throw NumericalError("vorticity inversion: singular 2x2 block");
      const Complex q1 = qh[0](r, c), q2 = qh[1](r, c);
      psi[0](r, c) = (-(wv2 + F2) * q1 - F1 * q2) / det;
      psi[1](r, c) = (-F2 * q1 - (wv2 + F1) * q2) / det;
    }
  }
  return psi;
}

std::array<SpectralField, 2> pv_from_streamfunction(const SpectralGrid& grid, const QGConfig& config,
                                                    const std::array<SpectralField, 2>& psih) {
  const Index n = grid.size();
  const double F1 = config.F1(), F2 = config.F2();
  std::array<SpectralField, 2> q{SpectralField::Zero(n, n), SpectralField::Zero(n, n)};
  for (Index r = 0; r < n; ++r) {
    for (Index c = 0; c < n; ++c) {
      const double wv2 = grid.wv2(r, c);
      const Complex p1 = psih[0](r, c), p2 = psih[1](r, c);
      q[0](r, c) = -wv2 * p1 + F1 * (p2 - p1);
      q[1](r, c) = -wv2 * p2 + F2 * (p1 - p2);
    }
  }
  return q;
}

Vector vort2vel(const Vector& q, const QGConfig& config, const std::array<double, 4>& scale) {
  const SpectralGrid grid(config);
  const Index n = grid.size();
  const auto layers = split_layers(q, n);
  const auto psi = invert_pv(grid, config, {grid.forward(layers[0]), grid.forward(layers[1])});

  Vector out(4 * n * n);
  for (int layer = 0; layer < 2; ++layer) {
    SpectralField uh(n, n), vh(n, n);
    for (Index r = 0; r < n; ++r)
      for (Index c = 0; c < n; ++c) {
        uh(r, c) = -grid.ddy(r) * psi[layer](r, c);
        vh(r, c) = grid.ddx(c) * psi[layer](r, c);
      }
    const Field u = grid.inverse(uh) * scale[2 * layer];
    const Field v = grid.inverse(vh) * scale[2 * layer + 1];
    Eigen::Map<Field>(out.data() + (2 * layer) * n * n, n, n) = u;
    Eigen::Map<Field>(out.data() + (2 * layer + 1) * n * n, n, n) = v;
  }
  return out;
}

Vector vort2vel_adjoint(const Vector& velocity, const QGConfig& config, const std::array<double, 4>& scale) {
  const SpectralGrid grid(config);
  const Index n = grid.size();
  if (velocity.size() != 4 * n * n) throw ShapeError("vort2vel adjoint: expected four velocity channels");
  const double F1 = config.F1(), F2 = config.F2();

  // Spectral cotangents of the two stream functions: conj(D)^T applied to (u, v) per layer.
  std::array<SpectralField, 2> w;
  for (int layer = 0; layer < 2; ++layer) {
    const Field gu = Eigen::Map<const Field>(velocity.data() + (2 * layer) * n * n, n, n) * scale[2 * layer];
    const Field gv = Eigen::Map<const Field>(velocity.data() + (2 * layer + 1) * n * n, n, n) * scale[2 * layer + 1];
    const SpectralField guh = grid.forward(gu), gvh = grid.forward(gv);
    w[layer] = SpectralField(n, n);
    for (Index r = 0; r < n; ++r)
      for (Index c = 0; c < n; ++c)
        w[layer](r, c) = std::conj(-grid.ddy(r)) * guh(r, c) + std::conj(grid.ddx(c)) * gvh(r, c);
  }
  // Transpose of the per-wavenumber inverse 2x2 block.
  Vector out(2 * n * n);
  std::array<SpectralField, 2> qh{SpectralField::Zero(n, n), SpectralField::Zero(n, n)};
  for (Index r = 0; r < n; ++r)
    for (Index c = 0; c < n; ++c) {
      const double wv2 = grid.wv2(r, c);
      if (wv2 == 0.0) continue;
      const double det = wv2 * (wv2 + F1 + F2);
      qh[0](r, c) = (-(wv2 + F2) * w[0](r, c) - F2 * w[1](r, c)) / det;
      qh[1](r, c) = (-F1 * w[0](r, c) - (wv2 + F1) * w[1](r, c)) / det;
    }
  for (int layer = 0; layer < 2; ++layer)
    Eigen::Map<Field>(out.data() + layer * n * n, n, n) = grid.inverse(qh[layer]);
  return out;
}

}  // namespace soad
