#include "soad/estimators.hpp"

#include <cmath>
#include <numbers>

#include "soad/errors.hpp"

namespace soad {

EstimatorKind parse_estimator_kind(std::string_view name) {
  if (name == "dps") return EstimatorKind::Dps;
  if (name == "dmps") return EstimatorKind::Dmps;
  if (name == "sda") return EstimatorKind::Sda;
  if (name == "soad") return EstimatorKind::Soad;
  throw ConfigError("unknown estimator kind: " + std::string(name));
}

std::string to_string(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::Dps: return "dps";
    case EstimatorKind::Dmps: return "dmps";
    case EstimatorKind::Sda: return "sda";
    case EstimatorKind::Soad: return "soad";
  }
  return "?";
}

void EstimatorConfig::validate() const {
  if (!(sigma_z > 0.0)) throw ConfigError("estimator.sigma_z must be > 0");
  if (!(gamma > 0.0)) throw ConfigError("estimator.gamma must be > 0");
}

double sigma_0_given_t(double sigma_z, double r_t) {
  if (r_t == 0.0) return 0.0;
  if (std::isinf(r_t)) return sigma_z * sigma_z;
  const double s2 = sigma_z * sigma_z, r2 = r_t * r_t;
  return s2 * r2 / (s2 + r2);
}

double estimator_variance(const EstimatorConfig& cfg, double r_t) {
  switch (cfg.kind) {
    case EstimatorKind::Dps: return 0.0;
    case EstimatorKind::Dmps: return r_t * r_t;
    case EstimatorKind::Sda: return cfg.gamma * r_t * r_t;
    case EstimatorKind::Soad: return sigma_0_given_t(cfg.sigma_z, r_t);
  }
  return 0.0;
}

// ---------------------------------------------------------------------------

Index ObservationModel::dimension() const {
  if (lift) return obs.window_length * lift->state_layout.state_size();
  return obs.window_length * obs.layout.step_size();
}

Matrix ObservationModel::predict(const Matrix& z0) const {
  const auto idx = obs.global_indices();
  Matrix out(static_cast<Index>(idx.size()), z0.cols());
  for (Index j = 0; j < z0.cols(); ++j) {
    const Vector full = lift ? augment(Vector(z0.col(j)), lift->state_layout, lift->operators) : Vector(z0.col(j));
    for (std::size_t r = 0; r < idx.size(); ++r) out(static_cast<Index>(r), j) = full[idx[r]];
  }
  return out;
}

Matrix ObservationModel::predict_vjp(const Matrix& z0, const Matrix& cotangent) const {
  const auto idx = obs.global_indices();
  const Index full_size = obs.window_length * obs.layout.step_size();
  Matrix out(z0.rows(), z0.cols());
  for (Index j = 0; j < z0.cols(); ++j) {
    Vector full = Vector::Zero(full_size);
    for (std::size_t r = 0; r < idx.size(); ++r) full[idx[r]] += cotangent(static_cast<Index>(r), j);
    out.col(j) = lift ? augment_vjp(Vector(z0.col(j)), lift->state_layout, lift->operators, full) : full;
  }
  return out;
}

ObservationModel linear_model(ObservationSet obs) {
  ObservationModel m;
  m.obs = std::move(obs);
  return m;
}

namespace {

struct Prepared {
  Vector y;
  Vector var;       // s_i^2 per row
  double ref_var;   // s^2
};

Prepared prepare(const ObservationModel& model, const EstimatorConfig& cfg, double r) {
  Prepared p;
  p.y = model.obs.stacked_values();
  const Vector sd = model.obs.stacked_noise_std();
  const double extra = estimator_variance(cfg, r);
  p.var = sd.array().square() + extra;
  p.ref_var = model.obs.sigma_obs * model.obs.sigma_obs + extra;
  if (p.var.size() && !(p.var.minCoeff() > 0.0))
    throw NumericalError(to_string(cfg.kind) + ": degenerate likelihood (zero observation variance)");
  if (!(p.ref_var > 0.0)) throw NumericalError(to_string(cfg.kind) + ": degenerate likelihood (sigma_obs = 0)");
  return p;
}

void check(const Denoiser& denoiser, const Matrix& z, const ObservationModel& model) {
  model.obs.validate();
  if (denoiser.dimension() != model.dimension())
    throw InputError("denoiser dimension does not match the observation window layout");
  if (z.rows() != model.dimension()) throw ShapeError("state batch does not match the observation window");
}

struct Evaluated {
  Matrix epsilon;
  Matrix grad_logp;  // d log p / d z
  Vector logp;
};

Evaluated evaluate(const Denoiser& denoiser, const NoiseSchedule& schedule, const Matrix& z, double t,
                   const ObservationModel& model, const EstimatorConfig& cfg, bool need_grad) {
  check(denoiser, z, model);
  const auto [mu, sigma] = schedule.mu_sigma(t);
  const double r = sigma / mu;
  Evaluated e;
  const Index rows = model.obs.rows();
  if (rows == 0) {
    e.epsilon = denoiser.epsilon(z, t);
    e.grad_logp = Matrix::Zero(z.rows(), z.cols());
    e.logp = Vector::Zero(z.cols());
    return e;
  }
  const Prepared p = prepare(model, cfg, r);
  const bool tweedie = cfg.kind != EstimatorKind::Dmps;
  std::unique_ptr<Linearization> lin;
  if (tweedie && need_grad) {
    lin = denoiser.linearize(z, t);
    e.epsilon = lin->value();
  } else {
    e.epsilon = denoiser.epsilon(z, t);
  }
  if (!e.epsilon.allFinite()) throw NumericalError("denoiser returned non-finite values");
  const Matrix z0 = tweedie ? Matrix((z - sigma * e.epsilon) / mu) : Matrix(z / mu);
  const Matrix pred = model.predict(z0);
  const Matrix resid = (-pred).colwise() + p.y;
  const Vector inv = p.var.cwiseInverse();
  const double log_norm = -0.5 * (p.var.array() * (2.0 * std::numbers::pi)).log().sum();
  e.logp = (-0.5 * (resid.array().square().colwise() * inv.array()).colwise().sum()).transpose();
  e.logp.array() += log_norm;
  if (!need_grad) return e;
  const Matrix weighted = resid.array().colwise() * inv.array();
  const Matrix g0 = model.predict_vjp(z0, weighted);  // d log p / d z0
  if (tweedie)
    e.grad_logp = (g0 - sigma * lin->vjp(g0)) / mu;
  else
    e.grad_logp = g0 / mu;
  return e;
}

}  // namespace

GuidanceTerms guidance(const Denoiser& denoiser, const NoiseSchedule& schedule, const Matrix& z, double t,
                       const ObservationModel& model, const EstimatorConfig& cfg) {
  cfg.validate();
  Evaluated e = evaluate(denoiser, schedule, z, t, model, cfg, true);
  const auto [mu, sigma] = schedule.mu_sigma(t);
  const double r = sigma / mu;
  GuidanceTerms g;
  g.epsilon = std::move(e.epsilon);
  g.log_likelihood = std::move(e.logp);
  if (model.obs.rows() == 0) {
    g.q = Matrix::Zero(z.rows(), z.cols());
    g.c = 0.0;
    return g;
  }
  const double ref_var = model.obs.sigma_obs * model.obs.sigma_obs + estimator_variance(cfg, r);
  g.c = 0.5 * r * r / ref_var;
  g.q = (-2.0 * mu * mu * ref_var) * e.grad_logp;
  return g;
}

Vector log_likelihood(const Denoiser& denoiser, const NoiseSchedule& schedule, const Matrix& z, double t,
                      const ObservationModel& model, const EstimatorConfig& cfg) {
  cfg.validate();
  return evaluate(denoiser, schedule, z, t, model, cfg, false).logp;
}

Matrix log_likelihood_grad(const Denoiser& denoiser, const NoiseSchedule& schedule, const Matrix& z, double t,
                           const ObservationModel& model, const EstimatorConfig& cfg) {
  cfg.validate();
  return evaluate(denoiser, schedule, z, t, model, cfg, true).grad_logp;
}

namespace {

Vector grad_as(EstimatorKind kind, const Denoiser& denoiser, const NoiseSchedule& schedule, const Vector& z_t,
               double t, const ObservationModel& model, EstimatorConfig cfg) {
  cfg.kind = kind;
  return log_likelihood_grad(denoiser, schedule, Matrix(z_t), t, model, cfg).col(0);
}

}  // namespace

Vector soad_likelihood_grad(const Denoiser& denoiser, const NoiseSchedule& schedule, const Vector& z_t, double t,
                            const ObservationModel& model, const EstimatorConfig& cfg) {
  EstimatorConfig c = cfg;
  c.kind = EstimatorKind::Soad;
  return guidance(denoiser, schedule, Matrix(z_t), t, model, c).q.col(0);
}

Vector dps_likelihood_grad(const Denoiser& denoiser, const NoiseSchedule& schedule, const Vector& z_t, double t,
                           const ObservationModel& model, const EstimatorConfig& cfg) {
  return grad_as(EstimatorKind::Dps, denoiser, schedule, z_t, t, model, cfg);
}

Vector dmps_likelihood_grad(const Denoiser& denoiser, const NoiseSchedule& schedule, const Vector& z_t, double t,
                            const ObservationModel& model, const EstimatorConfig& cfg) {
  if (model.lift) throw InputError("dmps requires a linear observation model");
  return grad_as(EstimatorKind::Dmps, denoiser, schedule, z_t, t, model, cfg);
}

Vector sda_likelihood_grad(const Denoiser& denoiser, const NoiseSchedule& schedule, const Vector& z_t, double t,
                           const ObservationModel& model, const EstimatorConfig& cfg) {
  return grad_as(EstimatorKind::Sda, denoiser, schedule, z_t, t, model, cfg);
}

Matrix conditional_score(const Denoiser& denoiser, const NoiseSchedule& schedule, const Matrix& z, double t,
                         const ObservationModel& model, const EstimatorConfig& cfg) {
  cfg.validate();
  Evaluated e = evaluate(denoiser, schedule, z, t, model, cfg, true);
  return e.grad_logp - e.epsilon / schedule.sigma(t);
}

}  // namespace soad
