#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include <gtest/gtest.h>

#include "soad/errors.hpp"
#include "soad/experiment.hpp"

using namespace soad;

namespace {

double two_loop_rmse(const Vector& a, const Vector& b, Index steps) {
  const Index per = a.size() / steps;
  double total = 0.0;
  for (Index k = 0; k < steps; ++k) {
    double s = 0.0;
    for (Index i = 0; i < per; ++i) {
      const double d = a[k * per + i] - b[k * per + i];
      s += d * d;
    }
    total += s;
  }
  return std::sqrt(total / static_cast<double>(a.size()));
}

ExperimentConfig tiny_config() {
  ExperimentConfig cfg;
  cfg.l96.dimension = 8;
  cfg.l96.warmup_steps = 200;
  cfg.trajectories = 10;
  cfg.snapshots = 200;
  cfg.train.num_steps = 20;
  cfg.train.batch_size = 8;
  cfg.network.hidden = 8;
  cfg.network.depth = 1;
  cfg.sampler.num_steps = 12;
  cfg.ensemble = 3;
  cfg.repetitions = 2;
  return cfg;
}

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("soad_exp_" + std::to_string(::getpid()) + "_" + name);
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST(Rmse, Examples) {
  Rng rng = make_rng(1);
  const Vector a = standard_normal(rng, 30);
  EXPECT_EQ(rmse(a, a), 0.0);
  EXPECT_NEAR(rmse(a, (a.array() + 0.1).matrix()), 0.1, 1e-15);
  const Vector b = standard_normal(rng, 30);
  EXPECT_NEAR(rmse(a, b), two_loop_rmse(a, b, 3), 1e-12);
  const auto per = per_step_rmse(a, b, 3);
  ASSERT_EQ(per.size(), 3u);
  for (Index k = 0; k < 3; ++k) EXPECT_NEAR(per[static_cast<std::size_t>(k)], two_loop_rmse(a.segment(k * 10, 10), b.segment(k * 10, 10), 1), 1e-12);
  EXPECT_THROW(rmse(a, b.head(29)), InputError);
  EXPECT_THROW(per_step_rmse(a, b, 7), InputError);
}

TEST(Rmse, StateBlockDropsObservationRows) {
  ChannelLayout lay(GridShape{{2}}, 1);
  lay.add_block("sin", 1);
  const Vector z = (Vector(8) << 1, 2, 9, 9, 3, 4, 9, 9).finished();
  EXPECT_EQ(state_block(z, lay, 2), (Vector(4) << 1, 2, 3, 4).finished());
}

TEST(Config, JsonRoundTripIsStable) {
  ExperimentConfig cfg = tiny_config();
  cfg.obs_kinds = {"arctan", "sin"};
  cfg.sweep_p = {1.0, 0.25};
  cfg.sweep_N = {1, 8};
  cfg.sweep_estimators = {"soad", "sda-raw", "prior"};
  cfg.sampler.clipping = ClippingMode::Capped;
  cfg.estimator.sigma_z = 1.7;
  cfg.mask.fixed_across_window = true;
  const auto j = to_json(cfg);
  const auto back = experiment_config_from_json(j);
  EXPECT_EQ(to_json(back), j);
  EXPECT_EQ(back.obs_kinds, cfg.obs_kinds);
  EXPECT_EQ(back.sampler.clipping, ClippingMode::Capped);
  EXPECT_DOUBLE_EQ(back.estimator.sigma_z, 1.7);
}

TEST(Config, RejectsInvalidDocuments) {
  auto j = to_json(tiny_config());
  j["system"] = "ocean";
  EXPECT_THROW(experiment_config_from_json(j).validate(), ConfigError);
  j = to_json(tiny_config());
  j["sampler"]["ensemble"] = 0;
  EXPECT_THROW(experiment_config_from_json(j).validate(), ConfigError);
  j = to_json(tiny_config());
  j["obs"]["kind"] = nlohmann::json::array({"cubic"});
  EXPECT_ANY_THROW(experiment_config_from_json(j).validate());
}

TEST(Sweep, ExpandsEveryAxisAndSeed) {
  ExperimentConfig cfg = tiny_config();
  cfg.sweep_estimators = {"soad", "sda"};
  cfg.sweep_p = {1.0, 0.25};
  cfg.sweep_s = {2};
  cfg.sweep_N = {1, 4};
  cfg.seed = 10;
  const auto cells = expand_sweep(cfg);
  ASSERT_EQ(cells.size(), 2u * 3u * 2u * 2u);
  EXPECT_EQ(cells[0].seed, 10u);
  EXPECT_EQ(cells[1].seed, 11u);
  EXPECT_EQ(cells[4].mode, MaskMode::Random);
  EXPECT_EQ(cells[8].mode, MaskMode::Stride);
  EXPECT_DOUBLE_EQ(cells[8].p_or_s, 2.0);
  EXPECT_EQ(cells.back().estimator, "sda");
  EXPECT_EQ(model_key({"sin"}, false), "aug:sin_hard");
  EXPECT_EQ(model_key({"arctan", "sin"}, false), "aug:arctan_easy+sin_hard");
  EXPECT_EQ(model_key({"sin"}, true), "raw");
}

class SweepRun : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    cfg_ = new ExperimentConfig(tiny_config());
    cfg_->sweep_estimators = {"soad", "sda-raw", "prior"};
    cfg_->sweep_p = {1.0, 0.25};
    data_ = new DatasetSplits(generate_dataset(*cfg_));
    bank_ = new ModelBank(*cfg_, *data_);
  }
  static void TearDownTestSuite() {
    delete bank_;
    delete data_;
    delete cfg_;
  }
  static ExperimentConfig* cfg_;
  static DatasetSplits* data_;
  static ModelBank* bank_;
};
ExperimentConfig* SweepRun::cfg_ = nullptr;
DatasetSplits* SweepRun::data_ = nullptr;
ModelBank* SweepRun::bank_ = nullptr;

TEST_F(SweepRun, CellRerunFromRecordedConfigIsBitwise) {
  const auto cells = expand_sweep(*cfg_);
  const auto results = run_sweep(cells, *cfg_, *bank_, data_->test, 2);
  ASSERT_EQ(results.size(), cells.size());
  for (std::size_t i : {std::size_t{0}, std::size_t{3}, results.size() - 1}) {
    const auto& r = results[i];
    ASSERT_FALSE(r.diverged) << r.error;
    const auto round = cell_result_from_json(nlohmann::json::parse(to_json(r).dump()));
    const ExperimentConfig cfg2 = experiment_config_from_json(round.config);
    const CellSpec cell2 = cell_from_json(round.config.at("cell"));
    const auto again = run_cell(cell2, cfg2, *bank_, data_->test);
    EXPECT_EQ(again.mean_rmse, r.mean_rmse) << i;
    EXPECT_EQ(round.mean_rmse, r.mean_rmse);
    EXPECT_EQ(again.per_step_rmse, r.per_step_rmse);
  }
}

TEST_F(SweepRun, OutputsAreConsistentAcrossFiles) {
  const auto cells = expand_sweep(*cfg_);
  const auto results = run_sweep(cells, *cfg_, *bank_, data_->test, 1);
  const auto dir = temp_dir("outputs");
  write_sweep_outputs(dir, results);
  const auto summaries = read_run_summaries(dir);
  ASSERT_EQ(summaries.size(), results.size());
  std::ifstream in(dir / "results.csv");
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line.rfind("estimator,obs_kinds,mask_mode,p_or_s,N,seed,mean_rmse,diverged,rmse_step_0", 0), 0u);
  std::size_t row = 0;
  while (std::getline(in, line)) {
    std::vector<std::string> fields;
    std::stringstream ss(line);
    for (std::string f; std::getline(ss, f, ',');) fields.push_back(f);
    ASSERT_EQ(fields.size(), 8u + static_cast<std::size_t>(cfg_->train.chunk_length));
    EXPECT_EQ(fields[0], summaries[row].spec.estimator);
    EXPECT_EQ(std::stod(fields[6]), summaries[row].mean_rmse);
    ++row;
  }
  EXPECT_EQ(row, results.size());
  EXPECT_TRUE(std::filesystem::exists(dir / "heatmap_soad_sin_random.dat"));
  std::filesystem::remove_all(dir);
}

TEST_F(SweepRun, ThreadCountDoesNotChangeResults) {
  auto cells = expand_sweep(*cfg_);
  cells.resize(4);
  const auto a = run_sweep(cells, *cfg_, *bank_, data_->test, 1);
  const auto b = run_sweep(cells, *cfg_, *bank_, data_->test, 3);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].mean_rmse, b[i].mean_rmse);
}

TEST_F(SweepRun, DivergenceIsRecordedNotThrown) {
  ExperimentConfig bad = *cfg_;
  bad.sampler.delta = 1e300;
  bad.sampler.lmc = LmcMode::Literal;
  CellSpec cell{"soad", {"sin"}, MaskMode::Random, 1.0, 1, 0, 0};
  const auto r = run_cell(cell, bad, *bank_, data_->test);
  EXPECT_TRUE(r.diverged);
  EXPECT_FALSE(r.error.empty());
  EXPECT_TRUE(std::isnan(r.mean_rmse));
  EXPECT_NE(results_csv({r}).find(",nan,1"), std::string::npos);
}
