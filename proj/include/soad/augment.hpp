#pragma once

#include <cstdint>
#include <vector>

#include "soad/layout.hpp"
#include "soad/observation_ops.hpp"
#include "soad/random.hpp"

namespace soad {

using OperatorList = std::vector<ObservationOperator>;

/// State layout extended with one observation block per operator, in order.
ChannelLayout augmented_layout(const ChannelLayout& state_layout, const OperatorList& operators);

/// z_k = (x_k, H1(x_k), ..., HK(x_k)) for every step of a step-major state window.
Vector augment(const Vector& x_window, const ChannelLayout& state_layout, const OperatorList& operators);
/// Transpose Jacobian of `augment` at x_window applied to a cotangent on the augmented window.
Vector augment_vjp(const Vector& x_window, const ChannelLayout& state_layout, const OperatorList& operators,
                   const Vector& cotangent);
/// Augment every window of a state-only trajectory collection; stats and provenance are kept.
AugmentedTrajectory augment(const AugmentedTrajectory& states, const OperatorList& operators);

enum class MaskMode { Random, Stride };

struct MaskSpec {
  MaskMode mode = MaskMode::Random;
  double ratio = 1.0;   ///< random mode: fraction p of grid cells observed
  Index stride = 1;     ///< stride mode: lattice spacing s
  Index interval = 1;   ///< frames k with k mod N == 0 are observed
  std::uint64_t seed = 0;
  bool fixed_across_window = false;  ///< random mode: reuse one mask for every observed frame
};

/// Selection operator T_k over one augmented step: row r picks coordinate indices()[r].
class SubsamplingOperator {
 public:
  SubsamplingOperator() = default;
  SubsamplingOperator(std::vector<Index> indices, Index step_size);

  Index rows() const { return static_cast<Index>(indices_.size()); }
  Index step_size() const noexcept { return step_size_; }
  const std::vector<Index>& indices() const noexcept { return indices_; }
  bool empty() const { return indices_.empty(); }

  Vector apply(const Vector& z_step) const;
  /// Indices of the complementary coordinates, ascending (the compensated operator T2).
  std::vector<Index> compensated_indices() const;
  Vector apply_compensated(const Vector& z_step) const;
  /// Inverse of z -> (T z, T2 z).
  Vector reinterleave(const Vector& selected, const Vector& compensated) const;
  /// True when indices are distinct and in range, i.e. T T^T = I.
  bool has_orthonormal_rows() const;
  Matrix dense() const;

 private:
  std::vector<Index> indices_;
  Index step_size_ = 0;
};

/// Per-step selection operators; unobserved frames get an empty operator. Rows only ever
/// address observation blocks.
std::vector<SubsamplingOperator> build_subsampling(const MaskSpec& mask, const ChannelLayout& layout,
                                                   Index window_length);

/// Subsampled noisy observations of an augmented window: y_k = T_k z_k + eps_k.
struct ObservationSet {
  ChannelLayout layout;
  Index window_length = 0;
  std::vector<SubsamplingOperator> operators;
  std::vector<Vector> values;
  std::vector<Vector> noise_std;  ///< per row; sigma_obs except for background rows
  double sigma_obs = 0.1;

  Index rows() const;
  bool empty() const { return rows() == 0; }
  /// Row r of the stacked observation selects window coordinate global_indices()[r].
  std::vector<Index> global_indices() const;
  Vector stacked_values() const;
  Vector stacked_noise_std() const;
  void validate() const;
};

/// Empty observation set (no rows at any step).
ObservationSet no_observations(const ChannelLayout& layout, Index window_length, double sigma_obs = 0.1);

ObservationSet observe(const Vector& z_window, const ChannelLayout& layout, Index window_length,
                       const std::vector<SubsamplingOperator>& operators, double sigma_obs, std::uint64_t seed);

/// Append identity rows on the raw-state block of step 0 holding `background` with noise sigma_b.
ObservationSet add_background_prior(ObservationSet obs, const Vector& background, double sigma_b);
/// background = x0 + eps, eps ~ N(0, sigma_b^2 I).
Vector make_background(const Vector& x0, double sigma_b, std::uint64_t seed);

}  // namespace soad
