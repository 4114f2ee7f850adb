// Command-line driver: generate-data, train, assimilate, sweep, evaluate.
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "soad/checkpoint.hpp"
#include "soad/container.hpp"
#include "soad/dataset.hpp"
#include "soad/errors.hpp"
#include "soad/experiment.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace soad;

namespace {

struct Globals {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  int jobs = 1;
};

json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path + ": " + e.what());
  }
}

/// Config file merged with overrides, in JSON form so every module sees one document.
json base_document(const Globals& g) {
  json doc = g.config.empty() ? json::object() : load_json(g.config);
  if (!g.out.empty()) doc["out"] = g.out;
  if (g.seed) doc["seed"] = *g.seed;
  return doc;
}

fs::path out_dir(const json& doc) { return fs::path(doc.value("out", std::string("out"))); }

fs::path data_dir(const json& doc) {
  if (doc.contains("data") && doc["data"].contains("dir")) return fs::path(doc["data"]["dir"].get<std::string>());
  return out_dir(doc) / "data";
}

DatasetSplits load_splits(const fs::path& dir) {
  DatasetSplits s;
  s.train = read_dataset(dir / "train.soaddata");
  s.validation = read_dataset(dir / "validation.soaddata");
  s.test = read_dataset(dir / "test.soaddata");
  return s;
}

DatasetSplits load_or_generate(const ExperimentConfig& cfg, const fs::path& dir) {
  if (fs::exists(dir / "train.soaddata")) return load_splits(dir);
  std::cerr << "dataset not found under " << dir << ", generating\n";
  DatasetSplits s = generate_dataset(cfg);
  fs::create_directories(dir);
  const json info{{"system", cfg.system}, {"config", to_json(cfg)}};
  write_dataset(dir / "train.soaddata", s.train, info);
  write_dataset(dir / "validation.soaddata", s.validation, info);
  write_dataset(dir / "test.soaddata", s.test, info);
  return s;
}

fs::path model_file(const fs::path& models_dir, const std::string& key) {
  std::string file = key;
  for (auto& ch : file)
    if (ch == ':' || ch == '+') ch = '_';
  return models_dir / (file + ".soadckpt");
}

/// Load a checkpoint saved by `train` or an earlier sweep, if there is one.
void use_saved(ModelBank& bank, const fs::path& models_dir, const std::string& key) {
  const fs::path path = model_file(models_dir, key);
  if (!bank.contains(key) && fs::exists(path)) bank.insert(key, load_checkpoint(path));
}

template <class T>
void set_if(json& doc, const char* section, const char* key, const std::optional<T>& v) {
  if (v) doc[section][key] = *v;
}

int cmd_generate(const Globals& g, const std::optional<std::string>& system, const std::optional<long>& trajectories,
                 const std::optional<long>& snapshots) {
  json doc = base_document(g);
  if (system) doc["system"] = *system;
  set_if(doc, "data", "trajectories", trajectories);
  set_if(doc, "data", "snapshots", snapshots);
  if (g.seed) doc["data"]["seed"] = *g.seed;
  const ExperimentConfig cfg = experiment_config_from_json(doc);
  const fs::path dir = data_dir(doc);
  DatasetSplits s = generate_dataset(cfg);
  fs::create_directories(dir);
  const json info{{"system", cfg.system}, {"config", to_json(cfg)}};
  write_dataset(dir / "train.soaddata", s.train, info);
  write_dataset(dir / "validation.soaddata", s.validation, info);
  write_dataset(dir / "test.soaddata", s.test, info);
  std::cout << "wrote " << s.train.windows << "/" << s.validation.windows << "/" << s.test.windows
            << " train/validation/test windows to " << dir << "\n";
  return 0;
}

struct TrainFlags {
  std::optional<double> lr, weight_decay;
  std::optional<long> steps, batch;
  std::vector<std::string> obs;
  bool raw = false;
  std::string checkpoint_out;
};

int cmd_train(const Globals& g, const TrainFlags& f) {
  json doc = base_document(g);
  set_if(doc, "train", "lr", f.lr);
  set_if(doc, "train", "weight_decay", f.weight_decay);
  set_if(doc, "train", "steps", f.steps);
  set_if(doc, "train", "batch", f.batch);
  if (g.seed) doc["train"]["seed"] = *g.seed;
  if (!f.obs.empty()) doc["obs"]["kind"] = f.obs;
  const ExperimentConfig cfg = experiment_config_from_json(doc);
  const DatasetSplits data = load_or_generate(cfg, data_dir(doc));
  Checkpoint ck = train_model(cfg, data.train, cfg.obs_kinds, f.raw);
  const std::string key = model_key(cfg.obs_kinds, f.raw);
  const fs::path path = f.checkpoint_out.empty() ? model_file(out_dir(doc) / "models", key) : fs::path(f.checkpoint_out);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  save_checkpoint(path, ck);
  std::cout << "trained " << key << " (" << ck.denoiser.parameter_count() << " parameters, final loss "
            << ck.training.value("final_loss", json(nullptr)).dump() << ") -> " << path << "\n";
  return 0;
}

struct AssimilateFlags {
  std::optional<long> steps, nc, ensemble, window, interval, stride;
  std::optional<double> delta, p;
  std::optional<std::string> clipping, estimator;
  std::vector<std::string> obs;
  std::string checkpoint, raw_checkpoint;
};

int cmd_assimilate(const Globals& g, const AssimilateFlags& f) {
  json doc = base_document(g);
  set_if(doc, "sampler", "steps", f.steps);
  set_if(doc, "sampler", "nc", f.nc);
  set_if(doc, "sampler", "ensemble", f.ensemble);
  set_if(doc, "sampler", "delta", f.delta);
  set_if(doc, "sampler", "clipping", f.clipping);
  if (!f.obs.empty()) doc["obs"]["kind"] = f.obs;
  if (f.p) {
    doc["mask"]["mode"] = "random";
    doc["mask"]["p"] = *f.p;
  }
  if (f.stride) {
    doc["mask"]["mode"] = "stride";
    doc["mask"]["s"] = *f.stride;
  }
  set_if(doc, "mask", "N", f.interval);
  const ExperimentConfig cfg = experiment_config_from_json(doc);
  const DatasetSplits data = load_or_generate(cfg, data_dir(doc));
  ModelBank bank(cfg, data);
  if (!f.checkpoint.empty()) bank.insert(model_key(cfg.obs_kinds, false), load_checkpoint(f.checkpoint));
  if (!f.raw_checkpoint.empty()) bank.insert("raw", load_checkpoint(f.raw_checkpoint));
  use_saved(bank, out_dir(doc) / "models", model_key(cfg.obs_kinds, false));
  use_saved(bank, out_dir(doc) / "models", "raw");

  CellSpec cell;
  cell.estimator = f.estimator ? *f.estimator : to_string(cfg.estimator.kind) + (cfg.raw_space ? "-raw" : "");
  cell.obs_kinds = cfg.obs_kinds;
  cell.mode = cfg.mask.mode;
  cell.p_or_s = cfg.mask.mode == MaskMode::Random ? cfg.mask.ratio : static_cast<double>(cfg.mask.stride);
  cell.interval = cfg.mask.interval;
  cell.seed = cfg.seed;
  cell.test_window = f.window ? *f.window : 0;
  AssimilationResult samples;
  const CellResult r = run_cell(cell, cfg, bank, data.test, &samples);

  const fs::path dir = out_dir(doc);
  fs::create_directories(dir);
  json summary = to_json(r);
  summary["wall_seconds_sampler"] = samples.wall_seconds;
  write_text_atomic(dir / "assimilation.json", summary.dump(2) + "\n");
  if (samples.samples.size()) {
    Container c;
    c.magic = kSamplesMagic;
    c.header = {{"cell", to_json(cell)}, {"ensemble", samples.samples.cols()}, {"seed", samples.seed}};
    Tensor t{"samples",
             {static_cast<std::uint64_t>(samples.samples.cols()), static_cast<std::uint64_t>(samples.samples.rows())},
             {}};
    for (Index m = 0; m < samples.samples.cols(); ++m)
      for (Index i = 0; i < samples.samples.rows(); ++i) t.data.push_back(static_cast<float>(samples.samples(i, m)));
    c.tensors.push_back(std::move(t));
    write_container(dir / "samples.soadsamp", c);
  }
  std::cout << cell.estimator << " mean RMSE " << r.mean_rmse << (r.diverged ? " (diverged: " + r.error + ")" : "")
            << "\n";
  return 0;
}

int cmd_sweep(const Globals& g) {
  json doc = base_document(g);
  const ExperimentConfig cfg = experiment_config_from_json(doc);
  const fs::path dir = out_dir(doc);
  const DatasetSplits data = load_or_generate(cfg, data_dir(doc));
  ModelBank bank(cfg, data);
  const auto cells = expand_sweep(cfg);
  for (const auto& c : cells) {
    std::vector<std::string> keys{model_key(c.obs_kinds, false)};
    if (c.estimator.size() > 4 && c.estimator.compare(c.estimator.size() - 4, 4, "-raw") == 0) keys.push_back("raw");
    for (const auto& key : keys) {
      use_saved(bank, dir / "models", key);
      bank.get(key, dir / "models");
    }
  }
  const int jobs = g.jobs > 0 ? g.jobs : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  const auto results = run_sweep(cells, cfg, bank, data.test, jobs);
  write_sweep_outputs(dir, results);
  write_text_atomic(dir / "config.json", to_json(cfg).dump(2) + "\n");
  std::size_t diverged = 0;
  for (const auto& r : results) diverged += r.diverged ? 1 : 0;
  std::cout << results.size() << " runs, " << diverged << " flagged divergent; results in " << dir << "\n";
  return 0;
}

/// Recompute per-group means from the per-run JSON files and check them against results.csv.
int cmd_evaluate(const Globals& g, const std::string& runs_dir) {
  const json doc = base_document(g);
  const fs::path dir = runs_dir.empty() ? out_dir(doc) : fs::path(runs_dir);
  const auto results = read_run_summaries(dir);
  if (fs::exists(dir / "results.csv")) {
    std::ifstream in(dir / "results.csv");
    std::string line;
    std::getline(in, line);
    std::size_t i = 0, mismatches = 0;
    for (; std::getline(in, line) && i < results.size(); ++i) {
      std::vector<std::string> cols;
      std::stringstream ss(line);
      for (std::string c; std::getline(ss, c, ',');) cols.push_back(c);
      const double csv = cols.size() > 6 ? std::strtod(cols[6].c_str(), nullptr) : NAN;
      const double js = results[i].mean_rmse;
      const bool both_nan = std::isnan(csv) && std::isnan(js);
      if (!both_nan && !(std::abs(csv - js) <= 1e-12)) ++mismatches;
    }
    if (mismatches || i != results.size()) {
      std::cerr << "results.csv disagrees with run summaries (" << mismatches << " rows)\n";
      return 1;
    }
  }
  std::map<std::string, std::pair<double, int>> groups;
  for (const auto& r : results) {
    std::string obs;
    for (const auto& k : r.spec.obs_kinds) obs += (obs.empty() ? "" : "+") + k;
    char key[256];
    std::snprintf(key, sizeof key, "%s,%s,%s,%.6g,%ld", r.spec.estimator.c_str(), obs.c_str(),
                  r.spec.mode == MaskMode::Random ? "random" : "stride", r.spec.p_or_s,
                  static_cast<long>(r.spec.interval));
    auto& acc = groups[key];
    if (std::isfinite(r.mean_rmse)) {
      acc.first += r.mean_rmse;
      acc.second += 1;
    }
  }
  std::ostringstream os;
  os << "estimator,obs_kinds,mask_mode,p_or_s,N,runs,mean_rmse\n";
  for (const auto& [k, acc] : groups) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", acc.second ? acc.first / acc.second : NAN);
    os << k << ',' << acc.second << ',' << buf << '\n';
  }
  write_text_atomic(dir / "summary.csv", os.str());
  std::cout << os.str();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"State-observation augmented diffusion for data assimilation"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "JSON experiment config");
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--seed", g.seed, "Base seed");
  app.add_option("--jobs", g.jobs, "Worker threads (0 = all cores)");

  auto* gen = app.add_subcommand("generate-data", "Integrate trajectories and write train/validation/test datasets");
  std::optional<std::string> system;
  std::optional<long> trajectories, snapshots;
  gen->add_option("--system", system)->check(CLI::IsMember({"l96", "qg"}));
  gen->add_option("--trajectories", trajectories);
  gen->add_option("--snapshots", snapshots);

  auto* train = app.add_subcommand("train", "Train a denoiser by denoising score matching");
  TrainFlags tf;
  train->add_option("--lr", tf.lr);
  train->add_option("--weight-decay", tf.weight_decay);
  train->add_option("--steps", tf.steps);
  train->add_option("--batch", tf.batch);
  train->add_option("--obs", tf.obs, "Observation operators of the augmented state (repeatable)");
  train->add_flag("--raw", tf.raw, "Train on the state only, without observation blocks");
  train->add_option("--checkpoint-out", tf.checkpoint_out);

  auto* assim = app.add_subcommand("assimilate", "Assimilate one test window");
  AssimilateFlags af;
  assim->add_option("--checkpoint", af.checkpoint);
  assim->add_option("--raw-checkpoint", af.raw_checkpoint);
  assim->add_option("--estimator", af.estimator, "dps|dmps|sda|soad, optional -raw suffix, or prior");
  assim->add_option("--obs", af.obs);
  assim->add_option("--steps", af.steps);
  assim->add_option("--delta", af.delta);
  assim->add_option("--nc", af.nc);
  assim->add_option("--ensemble", af.ensemble);
  assim->add_option("--clipping", af.clipping)->check(CLI::IsMember({"literal", "capped", "none"}));
  assim->add_option("--window", af.window, "Test window index");
  assim->add_option("--p", af.p, "Random mask ratio");
  assim->add_option("--s", af.stride, "Stride mask spacing");
  assim->add_option("--N", af.interval, "Observation interval");

  auto* sweep = app.add_subcommand("sweep", "Run the configured sweep grid");
  auto* eval = app.add_subcommand("evaluate", "Aggregate and cross-check sweep outputs");
  std::string runs_dir;
  eval->add_option("--runs", runs_dir, "Sweep output directory (default --out)");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*gen) return cmd_generate(g, system, trajectories, snapshots);
    if (*train) return cmd_train(g, tf);
    if (*assim) return cmd_assimilate(g, af);
    if (*sweep) return cmd_sweep(g);
    if (*eval) return cmd_evaluate(g, runs_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
