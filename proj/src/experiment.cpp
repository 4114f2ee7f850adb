#include "soad/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "soad/container.hpp"
#include "soad/errors.hpp"

namespace soad {

double rmse(const Vector& reference, const Vector& estimate) {
  if (reference.size() != estimate.size() || reference.size() == 0)
    throw InputError("rmse: fields must be non-empty and of equal size");
  return std::sqrt((reference - estimate).squaredNorm() / static_cast<double>(reference.size()));
}

std::vector<double> per_step_rmse(const Vector& reference, const Vector& estimate, Index steps) {
  if (steps <= 0 || reference.size() != estimate.size() || reference.size() % steps != 0)
    throw InputError("per_step_rmse: fields must split into equal steps");
  const Index n = reference.size() / steps;
  std::vector<double> out;
  for (Index k = 0; k < steps; ++k) out.push_back(rmse(reference.segment(k * n, n), estimate.segment(k * n, n)));
  return out;
}

Vector state_block(const Vector& z_window, const ChannelLayout& layout, Index steps) {
  if (z_window.size() != steps * layout.step_size()) throw ShapeError("state_block: window size mismatch");
  const Index n = layout.state_size(), step = layout.step_size();
  Vector x(steps * n);
  for (Index k = 0; k < steps; ++k) x.segment(k * n, n) = z_window.segment(k * step + layout.state().offset, n);
  return x;
}

// ---------------------------------------------------------------------------
// Config documents

namespace {

using nlohmann::json;

MaskMode parse_mask_mode(const std::string& s) {
  if (s == "random") return MaskMode::Random;
  if (s == "stride") return MaskMode::Stride;
  throw ConfigError("unknown mask mode: " + s);
}

std::string to_string(MaskMode m) { return m == MaskMode::Random ? "random" : "stride"; }

const json& section(const json& j, const char* key) {
  static const json empty = json::object();
  return j.contains(key) ? j.at(key) : empty;
}

std::vector<std::string> string_list(const json& j) {
  if (j.is_string()) return {j.get<std::string>()};
  return j.get<std::vector<std::string>>();
}

std::string join(const std::vector<std::string>& v, const char* sep) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? sep : "") + v[i];
  return s;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (system != "l96" && system != "qg") throw ConfigError("system must be l96 or qg");
  if (trajectories < 1 || snapshots < 1) throw ConfigError("data.trajectories and data.snapshots must be >= 1");
  dataset.validate();
  if (train.chunk_length > dataset.window_length) throw ConfigError("train.chunk exceeds the dataset window length");
  if (!(sigma_obs >= 0.0) || !(sigma_background >= 0.0)) throw ConfigError("noise levels must be >= 0");
  if (ensemble < 1) throw ConfigError("sampler.ensemble must be >= 1");
  if (repetitions < 1) throw ConfigError("sweep.repetitions must be >= 1");
  estimator.validate();
  sampler.validate();
  for (const auto& k : obs_kinds) parse_observation_kind(k);
  if (obs_kinds.empty()) throw ConfigError("obs.kind needs at least one operator");
  for (const auto& set : sweep_obs_sets)
    if (set.empty()) throw ConfigError("sweep.obs_sets entries must be non-empty");
}

ExperimentConfig experiment_config_from_json(const json& j) {
  ExperimentConfig c;
  try {
    c.system = j.value("system", c.system);
    const auto& l = section(j, "l96");
    c.l96.dimension = l.value("dimension", c.l96.dimension);
    c.l96.forcing = l.value("forcing", c.l96.forcing);
    c.l96.dt_integrate = l.value("dt_integrate", c.l96.dt_integrate);
    c.l96.dt_snapshot = l.value("dt_snapshot", c.l96.dt_snapshot);
    c.l96.warmup_steps = l.value("warmup_steps", c.l96.warmup_steps);
    const auto& q = section(j, "qg");
    c.qg.grid = q.value("grid", c.qg.grid);
    c.qg.dt = q.value("dt", c.qg.dt);
    c.qg.U1 = q.value("U1", c.qg.U1);
    c.qg.U2 = q.value("U2", c.qg.U2);
    c.qg.r_ek = q.value("r_ek", c.qg.r_ek);
    c.qg_steps_per_snapshot = q.value("steps_per_snapshot", c.qg_steps_per_snapshot);
    c.qg_warmup_steps = q.value("warmup_steps", c.qg_warmup_steps);
    const auto& d = section(j, "data");
    c.trajectories = d.value("trajectories", c.trajectories);
    c.snapshots = d.value("snapshots", c.snapshots);
    c.dataset.window_length = d.value("window_length", c.dataset.window_length);
    c.dataset.keep_every = d.value("keep_every", c.dataset.keep_every);
    c.data_seed = d.value("seed", c.data_seed);
    c.dataset.seed = c.data_seed;
    const auto& s = section(j, "schedule");
    c.schedule = NoiseSchedule(parse_schedule_kind(s.value("kind", std::string("vp-cosine"))), s.value("t_min", 1e-4),
                               s.value("t_max", 1.0 - 1e-4));
    const auto& t = section(j, "train");
    c.train.learning_rate = t.value("lr", c.train.learning_rate);
    c.train.weight_decay = t.value("weight_decay", c.train.weight_decay);
    c.train.batch_size = t.value("batch", c.train.batch_size);
    c.train.num_steps = t.value("steps", c.train.num_steps);
    c.train.chunk_length = t.value("chunk", c.train.chunk_length);
    c.train.seed = t.value("seed", c.train.seed);
    c.network.hidden = t.value("hidden", c.network.hidden);
    c.network.depth = t.value("depth", c.network.depth);
    c.network.embedding = t.value("embedding", c.network.embedding);
    c.network.kernel = t.value("kernel", c.network.kernel);
    c.network.sites = t.value("sites", c.network.sites);
    c.network.spatial_kernel = t.value("spatial_kernel", c.network.spatial_kernel);
    c.network.output = parse_network_output(t.value("output", to_string(c.network.output)));
    const auto& o = section(j, "obs");
    if (o.contains("kind")) c.obs_kinds = string_list(o.at("kind"));
    c.sigma_obs = o.value("sigma", c.sigma_obs);
    const auto& bg = section(o, "background");
    c.background = bg.value("enabled", c.background);
    c.sigma_background = bg.value("sigma", c.sigma_background);
    const auto& m = section(j, "mask");
    c.mask.mode = parse_mask_mode(m.value("mode", std::string("random")));
    c.mask.ratio = m.value("p", c.mask.ratio);
    c.mask.stride = m.value("s", c.mask.stride);
    c.mask.interval = m.value("N", c.mask.interval);
    c.mask.fixed_across_window = m.value("fixed_across_window", c.mask.fixed_across_window);
    const auto& e = section(j, "estimator");
    c.estimator.kind = parse_estimator_kind(e.value("kind", std::string("soad")));
    c.estimator.sigma_z = e.value("sigma_z", c.estimator.sigma_z);
    c.estimator.gamma = e.value("gamma", c.estimator.gamma);
    c.raw_space = e.value("space", std::string("augmented")) == "raw";
    const auto& sm = section(j, "sampler");
    c.sampler.num_steps = sm.value("steps", c.sampler.num_steps);
    c.sampler.delta = sm.value("delta", c.sampler.delta);
    c.sampler.corrector_steps = sm.value("nc", c.sampler.corrector_steps);
    c.sampler.clipping = parse_clipping_mode(sm.value("clipping", to_string(c.sampler.clipping)));
    c.sampler.lmc = parse_lmc_mode(sm.value("lmc", to_string(c.sampler.lmc)));
    c.sampler.fresh_score_per_lmc_step = sm.value("fresh_score", c.sampler.fresh_score_per_lmc_step);
    c.sampler.forward_corrector = sm.value("forward_corrector", c.sampler.forward_corrector);
    c.ensemble = sm.value("ensemble", c.ensemble);
    const auto& sw = section(j, "sweep");
    if (sw.contains("estimators")) c.sweep_estimators = string_list(sw.at("estimators"));
    if (sw.contains("obs_sets"))
      for (const auto& set : sw.at("obs_sets")) c.sweep_obs_sets.push_back(string_list(set));
    if (sw.contains("p")) c.sweep_p = sw.at("p").get<std::vector<double>>();
    if (sw.contains("s")) c.sweep_s = sw.at("s").get<std::vector<Index>>();
    if (sw.contains("N")) c.sweep_N = sw.at("N").get<std::vector<Index>>();
    c.repetitions = sw.value("repetitions", c.repetitions);
    c.seed = j.value("seed", c.seed);
    if (j.contains("checkpoints")) c.checkpoints = j.at("checkpoints").get<std::map<std::string, std::string>>();
    c.output_dir = j.value("out", c.output_dir);
  } catch (const json::exception& ex) {
    throw ConfigError(std::string("malformed experiment config: ") + ex.what());
  }
  c.validate();
  return c;
}

json to_json(const ExperimentConfig& c) {
  json j;
  j["system"] = c.system;
  j["l96"] = {{"dimension", c.l96.dimension},
              {"forcing", c.l96.forcing},
              {"dt_integrate", c.l96.dt_integrate},
              {"dt_snapshot", c.l96.dt_snapshot},
              {"warmup_steps", c.l96.warmup_steps}};
  j["qg"] = {{"grid", c.qg.grid}, {"dt", c.qg.dt}, {"U1", c.qg.U1}, {"U2", c.qg.U2}, {"r_ek", c.qg.r_ek},
             {"steps_per_snapshot", c.qg_steps_per_snapshot}, {"warmup_steps", c.qg_warmup_steps}};
  j["data"] = {{"trajectories", c.trajectories}, {"snapshots", c.snapshots},
               {"window_length", c.dataset.window_length}, {"keep_every", c.dataset.keep_every},
               {"seed", c.data_seed}};
  j["schedule"] = {{"kind", to_string(c.schedule.kind())}, {"t_min", c.schedule.t_min()}, {"t_max", c.schedule.t_max()}};
  j["train"] = {{"lr", c.train.learning_rate}, {"weight_decay", c.train.weight_decay}, {"batch", c.train.batch_size},
                {"steps", c.train.num_steps}, {"chunk", c.train.chunk_length}, {"seed", c.train.seed},
                {"hidden", c.network.hidden}, {"depth", c.network.depth}, {"embedding", c.network.embedding},
                {"kernel", c.network.kernel}, {"sites", c.network.sites},
                {"spatial_kernel", c.network.spatial_kernel}, {"output", to_string(c.network.output)}};
  j["obs"] = {{"kind", c.obs_kinds},
              {"sigma", c.sigma_obs},
              {"background", {{"enabled", c.background}, {"sigma", c.sigma_background}}}};
  j["mask"] = {{"mode", to_string(c.mask.mode)}, {"p", c.mask.ratio}, {"s", c.mask.stride},
               {"N", c.mask.interval}, {"fixed_across_window", c.mask.fixed_across_window}};
  j["estimator"] = {{"kind", to_string(c.estimator.kind)}, {"sigma_z", c.estimator.sigma_z},
                    {"gamma", c.estimator.gamma}, {"space", c.raw_space ? "raw" : "augmented"}};
  j["sampler"] = {{"steps", c.sampler.num_steps}, {"delta", c.sampler.delta}, {"nc", c.sampler.corrector_steps},
                  {"clipping", to_string(c.sampler.clipping)}, {"lmc", to_string(c.sampler.lmc)},
                  {"fresh_score", c.sampler.fresh_score_per_lmc_step},
                  {"forward_corrector", c.sampler.forward_corrector}, {"ensemble", c.ensemble}};
  j["sweep"] = {{"estimators", c.sweep_estimators}, {"obs_sets", c.sweep_obs_sets}, {"p", c.sweep_p},
                {"s", c.sweep_s}, {"N", c.sweep_N}, {"repetitions", c.repetitions}};
  j["seed"] = c.seed;
  j["checkpoints"] = c.checkpoints;
  j["out"] = c.output_dir;
  return j;
}

json to_json(const CellSpec& c) {
  return {{"estimator", c.estimator}, {"obs", c.obs_kinds},     {"mask_mode", to_string(c.mode)},
          {"p_or_s", c.p_or_s},       {"N", c.interval},        {"seed", c.seed},
          {"test_window", c.test_window}};
}

CellSpec cell_from_json(const json& j) {
  CellSpec c;
  c.estimator = j.at("estimator").get<std::string>();
  c.obs_kinds = j.at("obs").get<std::vector<std::string>>();
  c.mode = parse_mask_mode(j.at("mask_mode").get<std::string>());
  c.p_or_s = j.at("p_or_s").get<double>();
  c.interval = j.at("N").get<Index>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.test_window = j.at("test_window").get<Index>();
  return c;
}

json to_json(const CellResult& r) {
  json j{{"cell", to_json(r.spec)},
         {"per_step_rmse", r.per_step_rmse},
         {"diverged", r.diverged},
         {"error", r.error},
         {"wall_seconds", r.wall_seconds},
         {"config", r.config}};
  j["mean_rmse"] = std::isfinite(r.mean_rmse) ? json(r.mean_rmse) : json(nullptr);
  return j;
}

CellResult cell_result_from_json(const json& j) {
  CellResult r;
  r.spec = cell_from_json(j.at("cell"));
  r.mean_rmse = j.at("mean_rmse").is_null() ? std::numeric_limits<double>::quiet_NaN() : j.at("mean_rmse").get<double>();
  r.per_step_rmse = j.at("per_step_rmse").get<std::vector<double>>();
  r.diverged = j.at("diverged").get<bool>();
  r.error = j.value("error", std::string());
  r.wall_seconds = j.value("wall_seconds", 0.0);
  r.config = j.value("config", json::object());
  return r;
}

// ---------------------------------------------------------------------------
// Models

std::string model_key(const std::vector<std::string>& obs_kinds, bool raw) {
  if (raw) return "raw";
  std::vector<std::string> canon;
  for (const auto& k : obs_kinds) canon.push_back(to_string(parse_observation_kind(k)));
  return "aug:" + join(canon, "+");
}

namespace {

std::vector<std::string> kinds_of_key(const std::string& key) {
  if (key == "raw") return {};
  if (key.rfind("aug:", 0) != 0) throw ConfigError("unknown model key: " + key);
  std::vector<std::string> out;
  std::stringstream ss(key.substr(4));
  for (std::string k; std::getline(ss, k, '+');) out.push_back(k);
  return out;
}

ChannelLayout state_layout_of(const ExperimentConfig& cfg) {
  return cfg.system == "qg" ? qg_layout(cfg.qg) : l96_layout(cfg.l96.dimension);
}

}  // namespace

OperatorList make_operators(const std::vector<std::string>& kinds, const ExperimentConfig& cfg,
                            const AugmentedTrajectory& train) {
  OperatorList ops;
  for (const auto& name : kinds) {
    switch (parse_observation_kind(name)) {
      case ObservationKind::Identity: ops.push_back(ObservationOperator::identity()); break;
      case ObservationKind::ArctanEasy: ops.push_back(ObservationOperator::arctan_easy()); break;
      case ObservationKind::SinHard: ops.push_back(ObservationOperator::sin_hard()); break;
      case ObservationKind::Vort2Vel: {
        if (cfg.system != "qg") throw ConfigError("vort2vel observations need the qg system");
        auto unit = ObservationOperator::vort2vel(cfg.qg, {1, 1, 1, 1}, train.stats);
        std::vector<Vector> samples;
        const Index n = train.layout.state_size(), step = train.layout.step_size();
        for (Index s = 0; s < train.windows * train.window_length; ++s) {
          Vector x(n);
          for (Index i = 0; i < n; ++i) x[i] = train.values[static_cast<std::size_t>(s * step + i)];
          samples.push_back(unit.apply(x));
        }
        ops.push_back(ObservationOperator::vort2vel(cfg.qg, vort2vel_scaling(samples, train.layout.cells()),
                                                    train.stats));
        break;
      }
    }
  }
  return ops;
}

Checkpoint train_model(const ExperimentConfig& cfg, const AugmentedTrajectory& train,
                       const std::vector<std::string>& kinds, bool raw) {
  OperatorList ops = raw ? OperatorList{} : make_operators(kinds, cfg, train);
  const AugmentedTrajectory data = raw ? train : augment(train, ops);
  TrainResult tr = train_dsm(data, cfg.schedule, cfg.train, cfg.network);
  quantize_parameters(tr.denoiser);
  json info = to_json(cfg)["train"];
  info["final_loss"] = tr.loss_trace.empty() ? json(nullptr) : json(tr.loss_trace.back());
  info["loss_trace_tail"] = std::vector<double>(
      tr.loss_trace.end() - std::min<std::ptrdiff_t>(100, static_cast<std::ptrdiff_t>(tr.loss_trace.size())),
      tr.loss_trace.end());
  return Checkpoint{std::move(tr.denoiser), cfg.schedule, data.layout, train.stats, std::move(ops), info};
}

DatasetSplits generate_dataset(const ExperimentConfig& cfg) {
  std::vector<Matrix> trajs;
  if (cfg.system == "qg")
    trajs = generate_qg_trajectories(cfg.qg, cfg.trajectories, cfg.snapshots, cfg.qg_steps_per_snapshot,
                                     cfg.qg_warmup_steps, cfg.data_seed);
  else
    trajs = generate_l96_trajectories(cfg.l96, cfg.trajectories, cfg.snapshots, cfg.data_seed);
  return build_dataset(trajs, state_layout_of(cfg), cfg.dataset);
}

ModelBank::ModelBank(const ExperimentConfig& cfg, const DatasetSplits& data) : cfg_(cfg), data_(data) {}

void ModelBank::insert(const std::string& key, Checkpoint checkpoint) {
  models_[key] = std::make_unique<Checkpoint>(std::move(checkpoint));
}

const Checkpoint& ModelBank::get(const std::string& key, const std::optional<std::filesystem::path>& save_dir) {
  if (auto it = models_.find(key); it != models_.end()) return *it->second;
  if (auto it = cfg_.checkpoints.find(key); it != cfg_.checkpoints.end()) {
    insert(key, load_checkpoint(it->second));
  } else {
    insert(key, train_model(cfg_, data_.train, kinds_of_key(key), key == "raw"));
    if (save_dir) {
      std::string file = key;
      for (auto& ch : file)
        if (ch == ':' || ch == '+') ch = '_';
      std::filesystem::create_directories(*save_dir);
      save_checkpoint(*save_dir / (file + ".soadckpt"), *models_.at(key));
    }
  }
  return *models_.at(key);
}

// ---------------------------------------------------------------------------
// Cells

namespace {

struct ParsedEstimator {
  bool prior = false;
  bool raw = false;
  EstimatorKind kind = EstimatorKind::Soad;
};

ParsedEstimator parse_cell_estimator(const std::string& name) {
  ParsedEstimator p;
  if (name == "prior") {
    p.prior = true;
    return p;
  }
  std::string base = name;
  if (base.size() > 4 && base.compare(base.size() - 4, 4, "-raw") == 0) {
    p.raw = true;
    base.resize(base.size() - 4);
  }
  p.kind = parse_estimator_kind(base);
  return p;
}

}  // namespace

CellResult run_cell(const CellSpec& cell, const ExperimentConfig& cfg, ModelBank& bank,
                    const AugmentedTrajectory& test, AssimilationResult* samples) {
  CellResult out;
  out.spec = cell;
  out.config = to_json(cfg);
  out.config["cell"] = to_json(cell);
  const auto start = std::chrono::steady_clock::now();
  try {
    if (test.windows <= 0) throw InputError("test split is empty");
    const ParsedEstimator est = parse_cell_estimator(cell.estimator);
    const Index L = cfg.train.chunk_length;
    const Checkpoint& aug = bank.get(model_key(cell.obs_kinds, false));
    const Checkpoint& model_ck = est.raw ? bank.get("raw") : aug;
    const ChannelLayout state_layout = aug.layout.state_only();
    const ChannelLayout& aug_layout = aug.layout;

    const Vector x = test.chunk(cell.test_window % test.windows, 0, L);
    const Vector z = augment(x, state_layout, aug.operators);

    ObservationSet obs;
    if (est.prior) {
      obs = no_observations(aug_layout, L, cfg.sigma_obs);
    } else {
      MaskSpec mask = cfg.mask;
      mask.mode = cell.mode;
      if (cell.mode == MaskMode::Random)
        mask.ratio = cell.p_or_s;
      else
        mask.stride = static_cast<Index>(std::llround(cell.p_or_s));
      mask.interval = cell.interval;
      mask.seed = derive_seed(cell.seed, {0x6d61736b});
      obs = observe(z, aug_layout, L, build_subsampling(mask, aug_layout, L), cfg.sigma_obs,
                    derive_seed(cell.seed, {0x6f6273}));
      if (cfg.background) {
        const Vector bg = make_background(x.head(state_layout.state_size()), cfg.sigma_background,
                                          derive_seed(cell.seed, {0x626b67}));
        obs = add_background_prior(std::move(obs), bg, cfg.sigma_background);
      }
    }
    ObservationModel model;
    model.obs = std::move(obs);
    if (est.raw) model.lift = ObservationLift{state_layout, aug.operators};

    EstimatorConfig ec = cfg.estimator;
    ec.kind = est.kind;
    SamplerConfig sc = cfg.sampler;
    sc.seed = derive_seed(cell.seed, {0x73616d70});
    const AssimilationResult res = assimilate(model_ck.denoiser, model_ck.schedule, model, ec, sc, cfg.ensemble);
    const Vector mean = res.mean();
    const Vector xs = est.raw ? mean : state_block(mean, aug_layout, L);
    out.per_step_rmse = per_step_rmse(x, xs, L);
    double sum = 0.0;
    for (double v : out.per_step_rmse) sum += v;
    out.mean_rmse = sum / static_cast<double>(out.per_step_rmse.size());
    if (!std::isfinite(out.mean_rmse)) {
      out.diverged = true;
      out.error = "non-finite RMSE";
    }
    if (samples) *samples = res;
  } catch (const NumericalError& e) {
    out.diverged = true;
    out.error = e.what();
    out.mean_rmse = std::numeric_limits<double>::quiet_NaN();
  } catch (const InputError& e) {
    out.diverged = true;
    out.error = e.what();
    out.mean_rmse = std::numeric_limits<double>::quiet_NaN();
  }
  out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

std::vector<CellSpec> expand_sweep(const ExperimentConfig& cfg) {
  std::vector<std::string> estimators = cfg.sweep_estimators;
  if (estimators.empty()) estimators.push_back(to_string(cfg.estimator.kind) + (cfg.raw_space ? "-raw" : ""));
  auto obs_sets = cfg.sweep_obs_sets;
  if (obs_sets.empty()) obs_sets.push_back(cfg.obs_kinds);
  std::vector<std::pair<MaskMode, double>> masks;
  for (double p : cfg.sweep_p) masks.emplace_back(MaskMode::Random, p);
  for (Index s : cfg.sweep_s) masks.emplace_back(MaskMode::Stride, static_cast<double>(s));
  if (masks.empty())
    masks.emplace_back(cfg.mask.mode,
                       cfg.mask.mode == MaskMode::Random ? cfg.mask.ratio : static_cast<double>(cfg.mask.stride));
  std::vector<Index> intervals = cfg.sweep_N;
  if (intervals.empty()) intervals.push_back(cfg.mask.interval);

  std::vector<CellSpec> cells;
  for (const auto& e : estimators)
    for (const auto& obs : obs_sets)
      for (const auto& [mode, value] : masks)
        for (Index n : intervals)
          for (Index r = 0; r < cfg.repetitions; ++r)
            cells.push_back({e, obs, mode, value, n, cfg.seed + static_cast<std::uint64_t>(r), r});
  return cells;
}

std::vector<CellResult> run_sweep(const std::vector<CellSpec>& cells, const ExperimentConfig& cfg, ModelBank& bank,
                                  const AugmentedTrajectory& test, Index jobs) {
  // Models are shared read-only by the workers, so resolve them up front.
  for (const auto& c : cells) {
    bank.get(model_key(c.obs_kinds, false));
    if (parse_cell_estimator(c.estimator).raw) bank.get("raw");
  }
  std::vector<CellResult> results(cells.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) results[i] = run_cell(cells[i], cfg, bank, test);
  };
  const auto n = static_cast<std::size_t>(std::max<Index>(1, jobs));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < std::min(n, cells.size()); ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return results;
}

// ---------------------------------------------------------------------------
// Output files

namespace {

std::string fmt(double v) {
  if (!std::isfinite(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string results_csv(const std::vector<CellResult>& results) {
  std::size_t steps = 0;
  for (const auto& r : results) steps = std::max(steps, r.per_step_rmse.size());
  std::ostringstream os;
  os << "estimator,obs_kinds,mask_mode,p_or_s,N,seed,mean_rmse,diverged";
  for (std::size_t k = 0; k < steps; ++k) os << ",rmse_step_" << k;
  os << '\n';
  for (const auto& r : results) {
    os << r.spec.estimator << ',' << join(r.spec.obs_kinds, "+") << ',' << to_string(r.spec.mode) << ','
       << fmt(r.spec.p_or_s) << ',' << r.spec.interval << ',' << r.spec.seed << ',' << fmt(r.mean_rmse) << ','
       << (r.diverged ? 1 : 0);
    for (std::size_t k = 0; k < steps; ++k)
      os << ',' << (k < r.per_step_rmse.size() ? fmt(r.per_step_rmse[k]) : std::string("nan"));
    os << '\n';
  }
  return os.str();
}

void write_sweep_outputs(const std::filesystem::path& dir, const std::vector<CellResult>& results) {
  std::filesystem::create_directories(dir / "runs");
  for (std::size_t i = 0; i < results.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "%06zu.json", i);
    write_text_atomic(dir / "runs" / name, to_json(results[i]).dump(2) + "\n");
  }
  write_text_atomic(dir / "results.csv", results_csv(results));

  // One gnuplot matrix per (estimator, obs set, mask mode): rows N, columns p or s, mean over seeds.
  std::map<std::string, std::map<Index, std::map<double, std::pair<double, int>>>> tables;
  for (const auto& r : results) {
    const std::string key = r.spec.estimator + "_" + join(r.spec.obs_kinds, "+") + "_" + to_string(r.spec.mode);
    auto& acc = tables[key][r.spec.interval][r.spec.p_or_s];
    if (std::isfinite(r.mean_rmse)) {
      acc.first += r.mean_rmse;
      acc.second += 1;
    }
  }
  for (const auto& [key, rows] : tables) {
    std::set<double> cols;
    for (const auto& [n, row] : rows)
      for (const auto& [v, acc] : row) cols.insert(v);
    std::ostringstream os;
    os << "# mean RMSE; rows: N, columns: p_or_s\n# N";
    for (double v : cols) os << ' ' << fmt(v);
    os << '\n';
    for (const auto& [n, row] : rows) {
      os << n;
      for (double v : cols) {
        auto it = row.find(v);
        os << ' ' << (it != row.end() && it->second.second ? fmt(it->second.first / it->second.second) : "nan");
      }
      os << '\n';
    }
    write_text_atomic(dir / ("heatmap_" + key + ".dat"), os.str());
  }
}

std::vector<CellResult> read_run_summaries(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir / "runs"))
    if (e.path().extension() == ".json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<CellResult> out;
  for (const auto& f : files) {
    std::ifstream in(f);
    out.push_back(cell_result_from_json(nlohmann::json::parse(in)));
  }
  return out;
}

}  // namespace soad
