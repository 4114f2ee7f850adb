#include "soad/qg_model.hpp"

#include "soad/errors.hpp"
#include "soad/random.hpp"

namespace soad {

QGModel::QGModel(QGConfig config) : config_(config), grid_(config_) {
  const Index n = config_.grid;
  for (int i = 0; i < 2; ++i) {
    qh_[i] = SpectralField::Zero(n, n);
    prev1_[i] = SpectralField::Zero(n, n);
    prev2_[i] = SpectralField::Zero(n, n);
  }
}

void QGModel::set_state(const Vector& q) {
  const Index n = config_.grid;
  if (q.size() != 2 * n * n) throw ShapeError("QG state must hold two layers of grid^2 values");
  if (!q.allFinite()) throw InputError("QG state contains non-finite values");
  for (int layer = 0; layer < 2; ++layer)
    qh_[layer] = grid_.forward(Eigen::Map<const Field>(q.data() + layer * n * n, n, n));
  steps_ = 0;
}

Vector QGModel::state() const {
  const Index n = config_.grid;
  Vector q(2 * n * n);
  for (int layer = 0; layer < 2; ++layer)
    Eigen::Map<Field>(q.data() + layer * n * n, n, n) = grid_.inverse(qh_[layer]);
  return q;
}

std::array<SpectralField, 2> QGModel::tendency() const {
  const Index n = config_.grid;
  const auto psi = invert_pv(grid_, config_, qh_);
  const std::array<double, 2> U{config_.U1, config_.U2};
  const std::array<double, 2> beta{config_.beta1(), config_.beta2()};

  std::array<SpectralField, 2> out;
  for (int layer = 0; layer < 2; ++layer) {
    SpectralField uh(n, n), vh(n, n);
    for (Index r = 0; r < n; ++r)
      for (Index c = 0; c < n; ++c) {
        uh(r, c) = -grid_.ddy(r) * psi[layer](r, c);
        vh(r, c) = grid_.ddx(c) * psi[layer](r, c);
      }
    const Field q = grid_.inverse(qh_[layer]);
    const Field u = grid_.inverse(uh).array() + U[layer];
    const Field v = grid_.inverse(vh);
    const SpectralField uqh = grid_.forward(u.cwiseProduct(q));
    const SpectralField vqh = grid_.forward(v.cwiseProduct(q));
    SpectralField d(n, n);
    for (Index r = 0; r < n; ++r)
      for (Index c = 0; c < n; ++c) {
        d(r, c) = -grid_.ddx(c) * uqh(r, c) - grid_.ddy(r) * vqh(r, c) -
                  grid_.ddx(c) * beta[layer] * psi[layer](r, c);
        if (layer == 1) d(r, c) += config_.r_ek * grid_.wv2(r, c) * psi[layer](r, c);
      }
    out[layer] = std::move(d);
  }
  return out;
}

void QGModel::step() {
  const auto f = tendency();
  const double dt = config_.dt;
  for (int layer = 0; layer < 2; ++layer) {
    SpectralField incr;
    if (steps_ == 0) {
      incr = dt * f[layer];
    } else if (steps_ == 1) {
      incr = dt * (1.5 * f[layer] - 0.5 * prev1_[layer]);
    } else {
      incr = dt * ((23.0 / 12.0) * f[layer] - (16.0 / 12.0) * prev1_[layer] + (5.0 / 12.0) * prev2_[layer]);
    }
    qh_[layer] = (qh_[layer] + incr).cwiseProduct(grid_.filter().cast<std::complex<double>>());
    prev2_[layer] = std::move(prev1_[layer]);
    prev1_[layer] = f[layer];
  }
  ++steps_;
  for (int layer = 0; layer < 2; ++layer)
    if (!qh_[layer].allFinite())
      throw DivergenceError(static_cast<double>(steps_) * dt, steps_, "QG integration blew up at step " + std::to_string(steps_));
}

Vector qg_random_initial_state(const QGConfig& config, std::uint64_t seed, double amplitude) {
  const Index n = config.grid;
  Rng rng = make_rng(seed, {0x7167});
  Vector q = amplitude * standard_normal(rng, 2 * n * n);
  for (int layer = 0; layer < 2; ++layer) q.segment(layer * n * n, n * n).array() -= q.segment(layer * n * n, n * n).mean();
  return q;
}

}  // namespace soad
