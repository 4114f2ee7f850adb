#pragma once

#include <array>
#include <string>
#include <string_view>
#include <vector>

#include "soad/layout.hpp"
#include "soad/spectral.hpp"

namespace soad {

enum class ObservationKind {
  Identity,    ///< H(x) = x
  ArctanEasy,  ///< H(x) = arctan(3x), element-wise
  SinHard,     ///< H(x) = 1.5 sin(3x), element-wise
  Vort2Vel,    ///< two-layer vorticity to scaled (u1, v1, u2, v2)
};

ObservationKind parse_observation_kind(std::string_view name);
std::string to_string(ObservationKind kind);

/// Full-domain observation operator acting on one (normalised) state snapshot.
struct ObservationOperator {
  ObservationKind kind = ObservationKind::Identity;
  /// vort2vel only: grid/physics parameters and per-output-channel scaling C.
  QGConfig qg;
  std::array<double, 4> scale{1.0, 1.0, 1.0, 1.0};
  /// vort2vel only: per-layer normalisation used to recover physical vorticity
  /// (q = mean + stddev * x) before the spectral solve. Empty means identity.
  NormalizationStats input_stats;

  static ObservationOperator identity() { return {ObservationKind::Identity, {}, {1, 1, 1, 1}, {}}; }
  static ObservationOperator arctan_easy() { return {ObservationKind::ArctanEasy, {}, {1, 1, 1, 1}, {}}; }
  static ObservationOperator sin_hard() { return {ObservationKind::SinHard, {}, {1, 1, 1, 1}, {}}; }
  static ObservationOperator vort2vel(const QGConfig& qg, std::array<double, 4> scale = {1, 1, 1, 1},
                                      NormalizationStats stats = {});

  std::string name() const { return to_string(kind); }
  bool is_linear() const { return kind == ObservationKind::Identity || kind == ObservationKind::Vort2Vel; }
  Index output_channels(Index state_channels) const;

  Vector apply(const Vector& x) const;
  /// (dH/dx)^T cotangent at x.
  Vector vjp(const Vector& x, const Vector& cotangent) const;
};

/// Raw velocity statistics -> scaling constants C making each output channel unit-variance.
std::array<double, 4> vort2vel_scaling(const std::vector<Vector>& velocity_samples, Index cells);

}  // namespace soad
