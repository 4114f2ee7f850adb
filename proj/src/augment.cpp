#include "soad/augment.hpp"

#include <algorithm>
#include <cmath>

#include "soad/errors.hpp"

namespace soad {

ChannelLayout augmented_layout(const ChannelLayout& state_layout, const OperatorList& operators) {
  ChannelLayout layout = state_layout.state_only();
  for (const auto& op : operators) layout.add_block(op.name(), op.output_channels(layout.state().channels));
  return layout;
}

namespace {

Index steps_in(const Vector& x_window, const ChannelLayout& state_layout) {
  const Index n = state_layout.state_size();
  if (n <= 0 || x_window.size() % n != 0) throw ShapeError("augment: window is not a whole number of states");
  return x_window.size() / n;
}

}  // namespace

Vector augment(const Vector& x_window, const ChannelLayout& state_layout, const OperatorList& operators) {
  if (operators.empty()) throw InputError("augment: at least one observation operator is required");
  if (!x_window.allFinite()) throw InputError("augment: state window contains non-finite values");
  const ChannelLayout layout = augmented_layout(state_layout, operators);
  const Index n = state_layout.state_size();
  const Index steps = steps_in(x_window, state_layout);
  Vector z(steps * layout.step_size());
  for (Index k = 0; k < steps; ++k) {
    const Vector x = x_window.segment(k * n, n);
    auto zk = z.segment(k * layout.step_size(), layout.step_size());
    zk.head(n) = x;
    for (std::size_t b = 0; b < operators.size(); ++b) {
      const auto& block = layout.blocks()[b + 1];
      const Vector h = operators[b].apply(x);
      if (h.size() != block.size) throw ShapeError("augment: operator output size does not match its block");
      zk.segment(block.offset, block.size) = h;
    }
  }
  return z;
}

Vector augment_vjp(const Vector& x_window, const ChannelLayout& state_layout, const OperatorList& operators,
                   const Vector& cotangent) {
  const ChannelLayout layout = augmented_layout(state_layout, operators);
  const Index n = state_layout.state_size();
  const Index steps = steps_in(x_window, state_layout);
  if (cotangent.size() != steps * layout.step_size()) throw ShapeError("augment_vjp: cotangent size mismatch");
  Vector g(x_window.size());
  for (Index k = 0; k < steps; ++k) {
    const Vector x = x_window.segment(k * n, n);
    const auto ck = cotangent.segment(k * layout.step_size(), layout.step_size());
    Vector gk = ck.head(n);
    for (std::size_t b = 0; b < operators.size(); ++b) {
      const auto& block = layout.blocks()[b + 1];
      gk += operators[b].vjp(x, ck.segment(block.offset, block.size));
    }
    g.segment(k * n, n) = gk;
  }
  return g;
}

AugmentedTrajectory augment(const AugmentedTrajectory& states, const OperatorList& operators) {
  if (states.layout.observation_blocks() != 0) throw InputError("augment: input already has observation blocks");
  AugmentedTrajectory out;
  out.layout = augmented_layout(states.layout, operators);
  out.window_length = states.window_length;
  out.windows = states.windows;
  out.stats = states.stats;
  out.source_trajectory = states.source_trajectory;
  out.values.resize(static_cast<std::size_t>(out.windows * out.window_size()));
  for (Index w = 0; w < states.windows; ++w) out.set_window(w, augment(states.window(w), states.layout, operators));
  return out;
}

// ---------------------------------------------------------------------------

SubsamplingOperator::SubsamplingOperator(std::vector<Index> indices, Index step_size)
    : indices_(std::move(indices)), step_size_(step_size) {
  if (!has_orthonormal_rows()) throw InputError("subsampling indices must be distinct and within the step");
}

Vector SubsamplingOperator::apply(const Vector& z_step) const {
  if (z_step.size() != step_size_) throw ShapeError("subsampling: step size mismatch");
  Vector out(rows());
  for (Index r = 0; r < rows(); ++r) out[r] = z_step[indices_[static_cast<std::size_t>(r)]];
  return out;
}

std::vector<Index> SubsamplingOperator::compensated_indices() const {
  std::vector<char> taken(static_cast<std::size_t>(step_size_), 0);
  for (auto i : indices_) taken[static_cast<std::size_t>(i)] = 1;
  std::vector<Index> out;
  for (Index i = 0; i < step_size_; ++i)
    if (!taken[static_cast<std::size_t>(i)]) out.push_back(i);
  return out;
}

Vector SubsamplingOperator::apply_compensated(const Vector& z_step) const {
  if (z_step.size() != step_size_) throw ShapeError("subsampling: step size mismatch");
  const auto comp = compensated_indices();
  Vector out(static_cast<Index>(comp.size()));
  for (std::size_t r = 0; r < comp.size(); ++r) out[static_cast<Index>(r)] = z_step[comp[r]];
  return out;
}

Vector SubsamplingOperator::reinterleave(const Vector& selected, const Vector& compensated) const {
  const auto comp = compensated_indices();
  if (selected.size() != rows() || compensated.size() != static_cast<Index>(comp.size()))
    throw ShapeError("reinterleave: block sizes do not match the operator");
  Vector z(step_size_);
  for (Index r = 0; r < rows(); ++r) z[indices_[static_cast<std::size_t>(r)]] = selected[r];
  for (std::size_t r = 0; r < comp.size(); ++r) z[comp[r]] = compensated[static_cast<Index>(r)];
  return z;
}

bool SubsamplingOperator::has_orthonormal_rows() const {
  std::vector<char> seen(static_cast<std::size_t>(std::max<Index>(step_size_, 0)), 0);
  for (auto i : indices_) {
    if (i < 0 || i >= step_size_ || seen[static_cast<std::size_t>(i)]) return false;
    seen[static_cast<std::size_t>(i)] = 1;
  }
  return true;
}

Matrix SubsamplingOperator::dense() const {
  Matrix t = Matrix::Zero(rows(), step_size_);
  for (Index r = 0; r < rows(); ++r) t(r, indices_[static_cast<std::size_t>(r)]) = 1.0;
  return t;
}

namespace {

std::vector<Index> stride_cells(const GridShape& grid, Index stride) {
  for (auto d : grid.dims)
    if (stride > d) throw ConfigError("mask stride " + std::to_string(stride) + " exceeds grid side " + std::to_string(d));
  std::vector<Index> cells;
  if (grid.dims.size() == 1) {
    for (Index i = 0; i < grid.dims[0]; i += stride) cells.push_back(i);
  } else if (grid.dims.size() == 2) {
    for (Index r = 0; r < grid.dims[0]; r += stride)
      for (Index c = 0; c < grid.dims[1]; c += stride) cells.push_back(r * grid.dims[1] + c);
  } else {
    throw ConfigError("stride masks support 1-D and 2-D grids");
  }
  return cells;
}

std::vector<Index> random_cells(Index cells, double ratio, Rng& rng) {
  const auto count = std::clamp<Index>(static_cast<Index>(std::ceil(ratio * static_cast<double>(cells) - 1e-9)), 1, cells);
  std::vector<Index> pool(static_cast<std::size_t>(cells));
  for (Index i = 0; i < cells; ++i) pool[static_cast<std::size_t>(i)] = i;
  for (Index i = 0; i < count; ++i) {
    std::uniform_int_distribution<Index> pick(i, cells - 1);
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(pick(rng))]);
  }
  pool.resize(static_cast<std::size_t>(count));
  std::sort(pool.begin(), pool.end());
  return pool;
}

}  // namespace

std::vector<SubsamplingOperator> build_subsampling(const MaskSpec& mask, const ChannelLayout& layout,
                                                   Index window_length) {
  if (window_length <= 0) throw ConfigError("window length must be positive");
  if (mask.interval <= 0) throw ConfigError("observation interval N must be positive");
  if (mask.mode == MaskMode::Random && !(mask.ratio > 0.0 && mask.ratio <= 1.0))
    throw ConfigError("mask ratio p must be in (0, 1]");
  if (mask.mode == MaskMode::Stride && mask.stride <= 0) throw ConfigError("mask stride must be positive");

  const Index cells = layout.cells();
  const std::vector<Index> lattice =
      mask.mode == MaskMode::Stride ? stride_cells(layout.grid(), mask.stride) : std::vector<Index>{};

  std::vector<SubsamplingOperator> out;
  for (Index k = 0; k < window_length; ++k) {
    std::vector<Index> idx;
    if (k % mask.interval == 0) {
      for (std::size_t b = 1; b < layout.blocks().size(); ++b) {
        const auto& block = layout.blocks()[b];
        std::vector<Index> selected = lattice;
        if (mask.mode == MaskMode::Random) {
          const auto frame = static_cast<std::uint64_t>(mask.fixed_across_window ? 0 : k);
          Rng rng = make_rng(mask.seed, {0x6d61736b, frame, static_cast<std::uint64_t>(b)});
          selected = random_cells(cells, mask.ratio, rng);
        }
        for (Index ch = 0; ch < block.channels; ++ch)
          for (auto cell : selected) idx.push_back(block.offset + ch * cells + cell);
      }
    }
    out.emplace_back(std::move(idx), layout.step_size());
  }
  return out;
}

// ---------------------------------------------------------------------------

Index ObservationSet::rows() const {
  Index n = 0;
  for (const auto& op : operators) n += op.rows();
  return n;
}

std::vector<Index> ObservationSet::global_indices() const {
  std::vector<Index> out;
  const Index step = layout.step_size();
  for (std::size_t k = 0; k < operators.size(); ++k)
    for (auto i : operators[k].indices()) out.push_back(static_cast<Index>(k) * step + i);
  return out;
}

Vector ObservationSet::stacked_values() const {
  Vector y(rows());
  Index r = 0;
  for (const auto& v : values) {
    y.segment(r, v.size()) = v;
    r += v.size();
  }
  return y;
}

Vector ObservationSet::stacked_noise_std() const {
  Vector s(rows());
  Index r = 0;
  for (const auto& v : noise_std) {
    s.segment(r, v.size()) = v;
    r += v.size();
  }
  return s;
}

void ObservationSet::validate() const {
  const auto steps = static_cast<std::size_t>(window_length);
  if (operators.size() != steps || values.size() != steps || noise_std.size() != steps)
    throw InputError("observation set: one operator, value vector and noise vector per step required");
  for (std::size_t k = 0; k < steps; ++k) {
    if (operators[k].step_size() != layout.step_size()) throw InputError("observation set: operator/layout mismatch");
    if (values[k].size() != operators[k].rows() || noise_std[k].size() != operators[k].rows())
      throw InputError("observation set: y_k dimension differs from the rows of T_k");
    if (noise_std[k].size() && noise_std[k].minCoeff() < 0.0) throw InputError("observation noise must be >= 0");
  }
  if (!(sigma_obs >= 0.0)) throw InputError("observation noise must be >= 0");
}

ObservationSet no_observations(const ChannelLayout& layout, Index window_length, double sigma_obs) {
  ObservationSet obs;
  obs.layout = layout;
  obs.window_length = window_length;
  obs.sigma_obs = sigma_obs;
  for (Index k = 0; k < window_length; ++k) {
    obs.operators.emplace_back(std::vector<Index>{}, layout.step_size());
    obs.values.emplace_back(0);
    obs.noise_std.emplace_back(0);
  }
  return obs;
}

ObservationSet observe(const Vector& z_window, const ChannelLayout& layout, Index window_length,
                       const std::vector<SubsamplingOperator>& operators, double sigma_obs, std::uint64_t seed) {
  if (z_window.size() != window_length * layout.step_size()) throw ShapeError("observe: window size mismatch");
  if (static_cast<Index>(operators.size()) != window_length) throw ShapeError("observe: one operator per step required");
  if (!(sigma_obs >= 0.0)) throw InputError("observation noise must be >= 0");
  ObservationSet obs;
  obs.layout = layout;
  obs.window_length = window_length;
  obs.operators = operators;
  obs.sigma_obs = sigma_obs;
  Rng rng = make_rng(seed, {0x6f6273});
  for (Index k = 0; k < window_length; ++k) {
    const auto& op = operators[static_cast<std::size_t>(k)];
    if (op.step_size() != layout.step_size()) throw ShapeError("observe: operator/layout mismatch");
    Vector y = op.apply(z_window.segment(k * layout.step_size(), layout.step_size()));
    if (sigma_obs > 0.0) y += sigma_obs * standard_normal(rng, y.size());
    obs.values.push_back(std::move(y));
    obs.noise_std.push_back(Vector::Constant(op.rows(), sigma_obs));
  }
  return obs;
}

ObservationSet add_background_prior(ObservationSet obs, const Vector& background, double sigma_b) {
  const Index n = obs.layout.state_size();
  if (background.size() != n) throw InputError("background prior must match the raw-state block of step 0");
  if (!(sigma_b >= 0.0)) throw InputError("background noise must be >= 0");
  if (obs.operators.empty()) throw InputError("observation set has no steps");
  const auto& old = obs.operators[0];
  std::vector<Index> idx;
  for (auto i : old.indices()) idx.push_back(i);
  for (Index i = 0; i < n; ++i) idx.push_back(i);
  obs.operators[0] = SubsamplingOperator(std::move(idx), old.step_size());
  Vector y(obs.values[0].size() + n), s(obs.values[0].size() + n);
  y << obs.values[0], background;
  s << obs.noise_std[0], Vector::Constant(n, sigma_b);
  obs.values[0] = std::move(y);
  obs.noise_std[0] = std::move(s);
  return obs;
}

Vector make_background(const Vector& x0, double sigma_b, std::uint64_t seed) {
  Rng rng = make_rng(seed, {0x626b67});
  return x0 + sigma_b * standard_normal(rng, x0.size());
}

}  // namespace soad
