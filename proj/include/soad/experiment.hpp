#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "soad/checkpoint.hpp"
#include "soad/dataset.hpp"
#include "soad/sampler.hpp"
#include "soad/training.hpp"

namespace soad {

/// Root of mean squared difference over every entry.
double rmse(const Vector& reference, const Vector& estimate);
/// RMSE of each of `steps` equal step-major slices.
std::vector<double> per_step_rmse(const Vector& reference, const Vector& estimate, Index steps);
/// Raw-state block of every step of an augmented window.
Vector state_block(const Vector& z_window, const ChannelLayout& layout, Index steps);

/// Everything a benchmark run needs; mirrors the JSON config document.
struct ExperimentConfig {
  std::string system = "l96";  ///< l96 | qg
  Lorenz96Config l96;
  QGConfig qg;
  Index qg_steps_per_snapshot = 24;
  Index qg_warmup_steps = 24000;  // about 1000 days, past the growth transient
  Index trajectories = 10;
  Index snapshots = 3000;
  DatasetConfig dataset;
  std::uint64_t data_seed = 1;

  NoiseSchedule schedule;
  NetworkConfig network{.sites = 0};  // ring weight sharing on 1-D grids
  TrainConfig train;

  std::vector<std::string> obs_kinds{"sin"};
  double sigma_obs = 0.1;
  bool background = false;
  double sigma_background = 0.1;
  MaskSpec mask;

  EstimatorConfig estimator;
  bool raw_space = false;  ///< estimator works on the un-augmented problem with a nonlinear lift
  SamplerConfig sampler;
  Index ensemble = 8;

  // Sweep axes
  std::vector<std::string> sweep_estimators;           ///< e.g. "soad", "sda-raw", "prior"
  std::vector<std::vector<std::string>> sweep_obs_sets;
  std::vector<double> sweep_p;
  std::vector<Index> sweep_s;
  std::vector<Index> sweep_N;
  Index repetitions = 5;
  std::uint64_t seed = 0;

  std::map<std::string, std::string> checkpoints;  ///< model key -> path
  std::string output_dir = "out";

  void validate() const;
};

ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ExperimentConfig& cfg);

/// One point of a sweep grid.
struct CellSpec {
  std::string estimator = "soad";  ///< dps | dmps | sda | soad, optional "-raw" suffix, or "prior"
  std::vector<std::string> obs_kinds;
  MaskMode mode = MaskMode::Random;
  double p_or_s = 1.0;
  Index interval = 1;
  std::uint64_t seed = 0;
  Index test_window = 0;
};

nlohmann::json to_json(const CellSpec& cell);
CellSpec cell_from_json(const nlohmann::json& j);

struct CellResult {
  CellSpec spec;
  double mean_rmse = 0.0;
  std::vector<double> per_step_rmse;
  bool diverged = false;
  std::string error;
  double wall_seconds = 0.0;
  nlohmann::json config;  ///< snapshot sufficient to re-run the cell
};

nlohmann::json to_json(const CellResult& result);
CellResult cell_result_from_json(const nlohmann::json& j);

/// Key of the model a cell needs: "raw" or "aug:<kind>+<kind>".
std::string model_key(const std::vector<std::string>& obs_kinds, bool raw);

/// Loads, trains on demand and caches checkpoints for a benchmark.
class ModelBank {
 public:
  ModelBank(const ExperimentConfig& cfg, const DatasetSplits& data);
  /// Model for `key`; trained (and saved under `save_dir` when set) if not yet available.
  const Checkpoint& get(const std::string& key, const std::optional<std::filesystem::path>& save_dir = std::nullopt);
  void insert(const std::string& key, Checkpoint checkpoint);
  bool contains(const std::string& key) const { return models_.count(key) != 0; }

 private:
  const ExperimentConfig& cfg_;
  const DatasetSplits& data_;
  std::map<std::string, std::unique_ptr<Checkpoint>> models_;
};

/// Operators for the named kinds (vort2vel gets scaling from the training split).
OperatorList make_operators(const std::vector<std::string>& kinds, const ExperimentConfig& cfg,
                            const AugmentedTrajectory& train);

/// Train a checkpoint on the training split, augmented by `kinds` (or state only when raw).
Checkpoint train_model(const ExperimentConfig& cfg, const AugmentedTrajectory& train,
                       const std::vector<std::string>& kinds, bool raw);

DatasetSplits generate_dataset(const ExperimentConfig& cfg);

/// Assimilate one test window; divergences are reported in the result, not thrown.
/// `samples`, when given, receives the raw sampler output.
CellResult run_cell(const CellSpec& cell, const ExperimentConfig& cfg, ModelBank& bank,
                    const AugmentedTrajectory& test, AssimilationResult* samples = nullptr);

std::vector<CellSpec> expand_sweep(const ExperimentConfig& cfg);
/// Run cells on `jobs` workers; models must already be in the bank. Results keep cell order.
std::vector<CellResult> run_sweep(const std::vector<CellSpec>& cells, const ExperimentConfig& cfg, ModelBank& bank,
                                  const AugmentedTrajectory& test, Index jobs);

/// runs/<index>.json, results.csv and heatmap tables.
void write_sweep_outputs(const std::filesystem::path& dir, const std::vector<CellResult>& results);
std::string results_csv(const std::vector<CellResult>& results);
/// Re-read every runs/*.json under `dir`, in index order.
std::vector<CellResult> read_run_summaries(const std::filesystem::path& dir);

}  // namespace soad
