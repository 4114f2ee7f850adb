#include "soad/observation_ops.hpp"

#include <cmath>

#include "soad/errors.hpp"

namespace soad {

ObservationKind parse_observation_kind(std::string_view name) {
  if (name == "identity") return ObservationKind::Identity;
  if (name == "arctan_easy" || name == "arctan") return ObservationKind::ArctanEasy;
  if (name == "sin_hard" || name == "sin") return ObservationKind::SinHard;
  if (name == "vort2vel" || name == "v2v") return ObservationKind::Vort2Vel;
  throw ConfigError("unknown observation operator: " + std::string(name));
}

std::string to_string(ObservationKind kind) {
  switch (kind) {
    case ObservationKind::Identity: return "identity";
    case ObservationKind::ArctanEasy: return "arctan_easy";
    case ObservationKind::SinHard: return "sin_hard";
    case ObservationKind::Vort2Vel: return "vort2vel";
  }
  return "unknown";
}

ObservationOperator ObservationOperator::vort2vel(const QGConfig& qg, std::array<double, 4> scale,
                                                  NormalizationStats stats) {
  ObservationOperator op;
  op.kind = ObservationKind::Vort2Vel;
  op.qg = qg;
  op.scale = scale;
  op.input_stats = std::move(stats);
  return op;
}

Index ObservationOperator::output_channels(Index state_channels) const {
  if (kind == ObservationKind::Vort2Vel) {
    if (state_channels != 2) throw ConfigError("vort2vel requires a two-layer vorticity state");
    return 4;
  }
  return state_channels;
}

namespace {

Vector denormalise(const Vector& x, const NormalizationStats& stats, Index cells) {
  if (stats.mean.empty()) return x;
  Vector q = x;
  for (std::size_t c = 0; c < stats.mean.size(); ++c)
    q.segment(static_cast<Index>(c) * cells, cells) =
        (x.segment(static_cast<Index>(c) * cells, cells).array() * stats.stddev[c] + stats.mean[c]).matrix();
  return q;
}

}  // namespace

Vector ObservationOperator::apply(const Vector& x) const {
  switch (kind) {
    case ObservationKind::Identity: return x;
    case ObservationKind::ArctanEasy: return (3.0 * x.array()).atan().matrix();
    case ObservationKind::SinHard: return (1.5 * (3.0 * x.array()).sin()).matrix();
    case ObservationKind::Vort2Vel: {
      const Index cells = qg.grid * qg.grid;
      return soad::vort2vel(denormalise(x, input_stats, cells), qg, scale);
    }
  }
  throw ConfigError("unknown observation operator");
}

Vector ObservationOperator::vjp(const Vector& x, const Vector& cotangent) const {
  switch (kind) {
    case ObservationKind::Identity: return cotangent;
    case ObservationKind::ArctanEasy:
      return (cotangent.array() * 3.0 / (1.0 + 9.0 * x.array().square())).matrix();
    case ObservationKind::SinHard: return (cotangent.array() * 4.5 * (3.0 * x.array()).cos()).matrix();
    case ObservationKind::Vort2Vel: {
      const Index cells = qg.grid * qg.grid;
      Vector g = vort2vel_adjoint(cotangent, qg, scale);
      if (!input_stats.stddev.empty())
        for (std::size_t c = 0; c < input_stats.stddev.size(); ++c)
          g.segment(static_cast<Index>(c) * cells, cells) *= input_stats.stddev[c];
      return g;
    }
  }
  throw ConfigError("unknown observation operator");
}

std::array<double, 4> vort2vel_scaling(const std::vector<Vector>& velocity_samples, Index cells) {
  std::array<double, 4> scale{1, 1, 1, 1};
  if (velocity_samples.empty()) return scale;
  for (int c = 0; c < 4; ++c) {
    double sum = 0.0, sum2 = 0.0, count = 0.0;
    for (const auto& v : velocity_samples) {
      const auto seg = v.segment(c * cells, cells);
      sum += seg.sum();
      sum2 += seg.squaredNorm();
      count += static_cast<double>(cells);
    }
    const double mean = sum / count;
    const double var = sum2 / count - mean * mean;
    scale[c] = var > 0.0 ? 1.0 / std::sqrt(var) : 1.0;
  }
  return scale;
}

}  // namespace soad
