#include "soad/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "soad/container.hpp"
#include "soad/errors.hpp"
#include "soad/qg_model.hpp"
#include "soad/random.hpp"

namespace soad {

void DatasetConfig::validate() const {
  if (window_length < 1) throw ConfigError("dataset.window_length must be >= 1");
  if (keep_every < window_length) throw ConfigError("dataset.keep_every must be >= window_length");
  if (!(train_fraction > 0.0) || validation_fraction < 0.0 || train_fraction + validation_fraction > 1.0)
    throw ConfigError("dataset split fractions must be in [0, 1] and sum to at most 1");
}

NormalizationStats compute_stats(const AugmentedTrajectory& data) {
  const auto& st = data.layout.state();
  const Index cells = data.layout.cells(), step = data.layout.step_size();
  NormalizationStats stats;
  for (Index c = 0; c < st.channels; ++c) {
    double sum = 0.0, sq = 0.0;
    Index n = 0;
    for (Index s = 0; s < data.windows * data.window_length; ++s) {
      const float* v = data.values.data() + s * step + st.offset + c * cells;
      for (Index i = 0; i < cells; ++i) sum += v[i];
      n += cells;
    }
    const double mean = sum / static_cast<double>(n);
    for (Index s = 0; s < data.windows * data.window_length; ++s) {
      const float* v = data.values.data() + s * step + st.offset + c * cells;
      for (Index i = 0; i < cells; ++i) sq += (v[i] - mean) * (v[i] - mean);
    }
    const double sd = std::sqrt(sq / static_cast<double>(n));
    stats.mean.push_back(mean);
    stats.stddev.push_back(sd > 0.0 ? sd : 1.0);
  }
  return stats;
}

Vector normalize_state(const Vector& x, const ChannelLayout& layout, const NormalizationStats& stats) {
  Vector out = x;
  const Index cells = layout.cells();
  for (std::size_t c = 0; c < stats.mean.size(); ++c)
    out.segment(static_cast<Index>(c) * cells, cells) =
        (x.segment(static_cast<Index>(c) * cells, cells).array() - stats.mean[c]) / stats.stddev[c];
  return out;
}

Vector denormalize_state(const Vector& x, const ChannelLayout& layout, const NormalizationStats& stats) {
  Vector out = x;
  const Index cells = layout.cells();
  for (std::size_t c = 0; c < stats.mean.size(); ++c)
    out.segment(static_cast<Index>(c) * cells, cells) =
        x.segment(static_cast<Index>(c) * cells, cells).array() * stats.stddev[c] + stats.mean[c];
  return out;
}

void normalize(AugmentedTrajectory& data, const NormalizationStats& stats) {
  const auto& st = data.layout.state();
  if (static_cast<Index>(stats.mean.size()) != st.channels || stats.stddev.size() != stats.mean.size())
    throw InputError("normalisation stats do not match the state channels");
  const Index cells = data.layout.cells(), step = data.layout.step_size();
  for (Index s = 0; s < data.windows * data.window_length; ++s)
    for (Index c = 0; c < st.channels; ++c) {
      float* v = data.values.data() + s * step + st.offset + c * cells;
      const auto uc = static_cast<std::size_t>(c);
      for (Index i = 0; i < cells; ++i) v[i] = static_cast<float>((v[i] - stats.mean[uc]) / stats.stddev[uc]);
    }
  data.stats = stats;
}

std::vector<Index> window_starts(Index snapshots, Index window_length, Index keep_every) {
  std::vector<Index> starts;
  for (Index s = 0; s + window_length <= snapshots; s += keep_every) starts.push_back(s);
  return starts;
}

namespace {

AugmentedTrajectory cut(const std::vector<Matrix>& trajectories, const std::vector<Index>& ids,
                        const ChannelLayout& layout, const DatasetConfig& config) {
  AugmentedTrajectory out;
  out.layout = layout;
  out.window_length = config.window_length;
  const Index step = layout.step_size();
  for (auto id : ids) {
    const Matrix& traj = trajectories[static_cast<std::size_t>(id)];
    for (auto start : window_starts(traj.cols(), config.window_length, config.keep_every)) {
      for (Index k = 0; k < config.window_length; ++k)
        for (Index j = 0; j < step; ++j) out.values.push_back(static_cast<float>(traj(j, start + k)));
      out.source_trajectory.push_back(id);
      ++out.windows;
    }
  }
  return out;
}

}  // namespace

DatasetSplits build_dataset(const std::vector<Matrix>& trajectories, const ChannelLayout& layout,
                            const DatasetConfig& config) {
  config.validate();
  if (layout.observation_blocks() != 0) throw InputError("build_dataset expects a state-only layout");
  const auto n = static_cast<Index>(trajectories.size());
  if (n == 0) throw ConfigError("no trajectories to build a dataset from");
  for (const auto& t : trajectories) {
    if (t.rows() != layout.state_size()) throw ShapeError("trajectory rows do not match the state layout");
    if (t.cols() < config.window_length)
      throw ConfigError("trajectory shorter than one window (" + std::to_string(t.cols()) + " snapshots)");
  }
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  Rng rng = make_rng(config.seed, {0x73706c6974});
  std::shuffle(order.begin(), order.end(), rng);
  Index n_train = std::max<Index>(1, static_cast<Index>(std::llround(config.train_fraction * static_cast<double>(n))));
  Index n_val = static_cast<Index>(std::llround(config.validation_fraction * static_cast<double>(n)));
  n_train = std::min(n_train, n);
  n_val = std::min(n_val, n - n_train);
  auto slice = [&](Index a, Index b) {
    std::vector<Index> ids(order.begin() + a, order.begin() + b);
    std::sort(ids.begin(), ids.end());
    return ids;
  };
  DatasetSplits splits;
  splits.train = cut(trajectories, slice(0, n_train), layout, config);
  splits.validation = cut(trajectories, slice(n_train, n_train + n_val), layout, config);
  splits.test = cut(trajectories, slice(n_train + n_val, n), layout, config);
  const NormalizationStats stats = compute_stats(splits.train);
  normalize(splits.train, stats);
  normalize(splits.validation, stats);
  normalize(splits.test, stats);
  return splits;
}

std::vector<Matrix> generate_l96_trajectories(const Lorenz96Config& config, Index count, Index snapshots,
                                              std::uint64_t seed) {
  std::vector<Matrix> out;
  for (Index i = 0; i < count; ++i) {
    Rng rng = make_rng(seed, {0x6c3936, static_cast<std::uint64_t>(i)});
    const Vector x0 = Vector::Constant(config.dimension, config.forcing) + standard_normal(rng, config.dimension);
    out.push_back(l96_integrate(config, x0, snapshots));
  }
  return out;
}

std::vector<Matrix> generate_qg_trajectories(const QGConfig& config, Index count, Index snapshots,
                                             Index steps_per_snapshot, Index warmup_steps, std::uint64_t seed) {
  config.validate();
  std::vector<Matrix> out;
  for (Index i = 0; i < count; ++i) {
    QGModel model(config);
    model.set_state(qg_random_initial_state(config, derive_seed(seed, {0x7167, static_cast<std::uint64_t>(i)})));
    for (Index s = 0; s < warmup_steps; ++s) model.step();
    Matrix traj(2 * config.grid * config.grid, snapshots);
    for (Index s = 0; s < snapshots; ++s) {
      if (s > 0)
        for (Index k = 0; k < steps_per_snapshot; ++k) model.step();
      traj.col(s) = model.state();
    }
    out.push_back(std::move(traj));
  }
  return out;
}

ChannelLayout l96_layout(Index dimension) { return ChannelLayout(GridShape{{dimension}}, 1); }
ChannelLayout qg_layout(const QGConfig& config) { return ChannelLayout(GridShape{{config.grid, config.grid}}, 2); }

nlohmann::json to_json(const ChannelLayout& layout) {
  nlohmann::json j;
  j["grid"] = layout.grid().dims;
  j["blocks"] = nlohmann::json::array();
  for (const auto& b : layout.blocks()) j["blocks"].push_back({{"name", b.name}, {"channels", b.channels}});
  return j;
}

ChannelLayout layout_from_json(const nlohmann::json& j) {
  try {
    const auto& blocks = j.at("blocks");
    if (blocks.empty()) throw FormatError("layout has no blocks");
    ChannelLayout layout(GridShape{j.at("grid").get<std::vector<Index>>()}, blocks[0].at("channels").get<Index>());
    for (std::size_t b = 1; b < blocks.size(); ++b)
      layout.add_block(blocks[b].at("name").get<std::string>(), blocks[b].at("channels").get<Index>());
    return layout;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed layout descriptor: ") + e.what());
  }
}

nlohmann::json to_json(const NormalizationStats& stats) { return {{"mean", stats.mean}, {"std", stats.stddev}}; }

NormalizationStats stats_from_json(const nlohmann::json& j) {
  try {
    return {j.at("mean").get<std::vector<double>>(), j.at("std").get<std::vector<double>>()};
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed normalisation stats: ") + e.what());
  }
}

void write_dataset(const std::filesystem::path& path, const AugmentedTrajectory& data, const nlohmann::json& extra) {
  Container c;
  c.magic = kDatasetMagic;
  c.header = extra;
  c.header["layout"] = to_json(data.layout);
  c.header["window_length"] = data.window_length;
  c.header["windows"] = data.windows;
  c.header["stats"] = to_json(data.stats);
  c.header["source_trajectory"] = data.source_trajectory;
  c.tensors.push_back({"values",
                       {static_cast<std::uint64_t>(data.windows), static_cast<std::uint64_t>(data.window_length),
                        static_cast<std::uint64_t>(data.layout.step_size())},
                       data.values});
  write_container(path, c);
}

AugmentedTrajectory read_dataset(const std::filesystem::path& path, nlohmann::json* header) {
  Container c = read_container(path, kDatasetMagic);
  AugmentedTrajectory data;
  try {
    data.layout = layout_from_json(c.header.at("layout"));
    data.window_length = c.header.at("window_length").get<Index>();
    data.windows = c.header.at("windows").get<Index>();
    data.stats = stats_from_json(c.header.at("stats"));
    data.source_trajectory = c.header.at("source_trajectory").get<std::vector<Index>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed dataset header: ") + e.what());
  }
  const Tensor& t = c.tensor("values");
  if (t.shape.size() != 3 || t.shape[0] != static_cast<std::uint64_t>(data.windows) ||
      t.shape[1] != static_cast<std::uint64_t>(data.window_length) ||
      t.shape[2] != static_cast<std::uint64_t>(data.layout.step_size()))
    throw FormatError("dataset tensor shape disagrees with its header");
  data.values = t.data;
  if (header) *header = std::move(c.header);
  return data;
}

}  // namespace soad
