#pragma once

#include <string>
#include <vector>

#include "soad/types.hpp"

namespace soad {

/// Spatial grid shared by every channel: {n} for a 1-D ring, {ny, nx} for a 2-D field.
struct GridShape {
  std::vector<Index> dims;

  Index cells() const;
  bool operator==(const GridShape&) const = default;
};

/// Contiguous run of `channels * grid cells` values inside one window step.
/// Element (channel c, cell i) lives at offset + c * cells + i.
struct Block {
  std::string name;  ///< "state" or the observation operator kind
  Index channels = 0;
  Index offset = 0;
  Index size = 0;
  bool operator==(const Block&) const = default;
};

/// Per-step layout of an augmented state z_k = (x_k, H1(x_k), ..., HK(x_k)).
class ChannelLayout {
 public:
  ChannelLayout() = default;
  ChannelLayout(GridShape grid, Index state_channels);

  /// Append an observation block with `channels` channels on the same grid.
  void add_block(std::string name, Index channels);

  const GridShape& grid() const noexcept { return grid_; }
  Index cells() const { return grid_.cells(); }
  const std::vector<Block>& blocks() const noexcept { return blocks_; }
  const Block& state() const { return blocks_.front(); }
  Index state_size() const { return blocks_.front().size; }
  Index step_size() const noexcept { return step_size_; }
  Index observation_blocks() const { return static_cast<Index>(blocks_.size()) - 1; }

  /// Layout holding only the raw-state block.
  ChannelLayout state_only() const;

  bool operator==(const ChannelLayout&) const = default;

 private:
  GridShape grid_;
  std::vector<Block> blocks_;
  Index step_size_ = 0;
};

/// Per-channel affine normalisation of the raw-state block.
struct NormalizationStats {
  std::vector<double> mean;
  std::vector<double> stddev;

  bool operator==(const NormalizationStats&) const = default;
};

/// Collection of windows of augmented states with a shared layout.
///
/// Values are float32 and stored window-major, then step-major:
/// values[(w * window_length + k) * step_size + j].
struct AugmentedTrajectory {
  ChannelLayout layout;
  Index window_length = 0;
  Index windows = 0;
  std::vector<float> values;
  NormalizationStats stats;
  std::vector<Index> source_trajectory;  ///< trajectory id of each window

  Index window_size() const { return window_length * layout.step_size(); }
  Vector window(Index w) const;
  /// Steps [start, start + length) of window w, flattened step-major.
  Vector chunk(Index w, Index start, Index length) const;
  void set_window(Index w, const Vector& z);
};

}  // namespace soad
