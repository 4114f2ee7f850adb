#include "soad/layout.hpp"

#include "soad/errors.hpp"

namespace soad {

Index GridShape::cells() const {
  Index n = 1;
  for (auto d : dims) n *= d;
  return dims.empty() ? 0 : n;
}

ChannelLayout::ChannelLayout(GridShape grid, Index state_channels) : grid_(std::move(grid)) {
  if (grid_.cells() <= 0 || state_channels <= 0) throw ConfigError("layout: empty grid or no state channels");
  blocks_.push_back({"state", state_channels, 0, state_channels * grid_.cells()});
  step_size_ = blocks_.back().size;
}

void ChannelLayout::add_block(std::string name, Index channels) {
  if (blocks_.empty()) throw ConfigError("layout: state block missing");
  if (channels <= 0) throw ConfigError("layout: observation block needs at least one channel");
  blocks_.push_back({std::move(name), channels, step_size_, channels * grid_.cells()});
  step_size_ += blocks_.back().size;
}

ChannelLayout ChannelLayout::state_only() const { return ChannelLayout(grid_, state().channels); }

Vector AugmentedTrajectory::window(Index w) const { return chunk(w, 0, window_length); }

Vector AugmentedTrajectory::chunk(Index w, Index start, Index length) const {
  if (w < 0 || w >= windows) throw InputError("window index out of range");
  if (start < 0 || length <= 0 || start + length > window_length) throw InputError("chunk out of range");
  const Index step = layout.step_size();
  const auto* base = values.data() + (w * window_length + start) * step;
  Vector out(length * step);
  for (Index i = 0; i < out.size(); ++i) out[i] = static_cast<double>(base[i]);
  return out;
}

void AugmentedTrajectory::set_window(Index w, const Vector& z) {
  if (w < 0 || w >= windows) throw InputError("window index out of range");
  if (z.size() != window_size()) throw ShapeError("set_window: size mismatch");
  auto* base = values.data() + w * window_size();
  for (Index i = 0; i < z.size(); ++i) base[i] = static_cast<float>(z[i]);
}

}  // namespace soad
