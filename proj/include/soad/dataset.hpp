#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <json.hpp>

#include "soad/layout.hpp"
#include "soad/lorenz96.hpp"
#include "soad/spectral.hpp"

namespace soad {

struct DatasetConfig {
  Index window_length = 32;
  Index keep_every = 100;  ///< a window starts every `keep_every` snapshots
  double train_fraction = 0.8;
  double validation_fraction = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

struct DatasetSplits {
  AugmentedTrajectory train;
  AugmentedTrajectory validation;
  AugmentedTrajectory test;
};

/// Per-channel mean and standard deviation over every window, step and cell.
NormalizationStats compute_stats(const AugmentedTrajectory& data);
/// (x - mean_c) / std_c on the raw-state block of every step, in place.
void normalize(AugmentedTrajectory& data, const NormalizationStats& stats);
Vector normalize_state(const Vector& x, const ChannelLayout& layout, const NormalizationStats& stats);
Vector denormalize_state(const Vector& x, const ChannelLayout& layout, const NormalizationStats& stats);

/// Window start offsets 0, keep_every, 2 keep_every, ... that fit inside `snapshots`.
std::vector<Index> window_starts(Index snapshots, Index window_length, Index keep_every);

/// Cut each trajectory (state_size x snapshots) into windows, split whole trajectories into
/// train/validation/test (shuffled by seed) and normalise everything with training stats.
DatasetSplits build_dataset(const std::vector<Matrix>& trajectories, const ChannelLayout& layout,
                            const DatasetConfig& config);

std::vector<Matrix> generate_l96_trajectories(const Lorenz96Config& config, Index count, Index snapshots,
                                              std::uint64_t seed);
std::vector<Matrix> generate_qg_trajectories(const QGConfig& config, Index count, Index snapshots,
                                             Index steps_per_snapshot, Index warmup_steps, std::uint64_t seed);

ChannelLayout l96_layout(Index dimension);
ChannelLayout qg_layout(const QGConfig& config);

nlohmann::json to_json(const ChannelLayout& layout);
ChannelLayout layout_from_json(const nlohmann::json& j);
nlohmann::json to_json(const NormalizationStats& stats);
NormalizationStats stats_from_json(const nlohmann::json& j);

/// SOADDATA file with a single tensor "values" of shape (windows, window_length, step_size).
void write_dataset(const std::filesystem::path& path, const AugmentedTrajectory& data,
                   const nlohmann::json& extra = nlohmann::json::object());
AugmentedTrajectory read_dataset(const std::filesystem::path& path, nlohmann::json* header = nullptr);

}  // namespace soad
