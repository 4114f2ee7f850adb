#include "soad/training.hpp"

#include <cmath>

#include "soad/errors.hpp"
#include "soad/random.hpp"

namespace soad {

Adam::Adam(const std::vector<Parameter>& params, double learning_rate, double weight_decay, double beta1,
           double beta2, double epsilon)
    : lr_(learning_rate), wd_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(epsilon) {
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight decay must be non-negative");
  for (const auto& p : params) {
    m_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
    v_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
  }
}

void Adam::step(std::vector<Parameter>& params) {
  if (params.size() != m_.size()) throw ShapeError("Adam: parameter list changed");
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    const Matrix g = p.grad + wd_ * p.value;
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g.cwiseAbs2();
    p.value.array() -= lr_ * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + eps_);
  }
}

std::vector<Index> chunk_offsets(Index window_length, Index chunk_length) {
  if (chunk_length <= 0 || chunk_length > window_length)
    throw ConfigError("chunk length must be in [1, window length]");
  std::vector<Index> out;
  for (Index s = 0; s + chunk_length <= window_length; ++s) out.push_back(s);
  return out;
}

DsmBatch sample_dsm_batch(const AugmentedTrajectory& data, Index chunk_length, Index batch_size, Rng& rng) {
  if (data.windows <= 0 || data.values.empty()) throw InputError("training dataset is empty");
  const Index max_start = data.window_length - chunk_length;
  if (max_start < 0) throw ConfigError("chunk length exceeds the dataset window length");
  std::uniform_int_distribution<Index> pick_window(0, data.windows - 1);
  std::uniform_int_distribution<Index> pick_start(0, max_start);
  std::uniform_real_distribution<double> pick_time(0.0, 1.0);

  const Index dim = chunk_length * data.layout.step_size();
  DsmBatch batch{Matrix(dim, batch_size), RowVector(batch_size), Matrix(dim, batch_size)};
  for (Index b = 0; b < batch_size; ++b) {
    const Index w = pick_window(rng);
    const Index s = pick_start(rng);
    batch.z0.col(b) = data.chunk(w, s, chunk_length);
    batch.times[b] = pick_time(rng);
  }
  fill_normal(rng, batch.noise.data(), batch.noise.size());
  return batch;
}

namespace {

Matrix diffuse(const NoiseSchedule& schedule, const DsmBatch& batch) {
  Matrix z_t(batch.z0.rows(), batch.z0.cols());
  for (Index b = 0; b < batch.z0.cols(); ++b) {
    const auto [mu, sigma] = schedule.mu_sigma(batch.times[b]);
    z_t.col(b) = mu * batch.z0.col(b) + sigma * batch.noise.col(b);
  }
  return z_t;
}

}  // namespace

double dsm_loss(const Denoiser& denoiser, const NoiseSchedule& schedule, const DsmBatch& batch) {
  const Matrix z_t = diffuse(schedule, batch);
  if (const auto* net = dynamic_cast<const WindowDenoiser*>(&denoiser))
    return net->dsm_loss(z_t, batch.times, batch.noise);
  double total = 0.0;
  for (Index b = 0; b < z_t.cols(); ++b) {
    const Vector eps = denoiser.epsilon(Vector(z_t.col(b)), batch.times[b]);
    total += (eps - batch.noise.col(b)).squaredNorm();
  }
  return 0.5 * total / static_cast<double>(z_t.cols());
}

void train_dsm(WindowDenoiser& denoiser, const AugmentedTrajectory& data, const NoiseSchedule& schedule,
               const TrainConfig& config, std::vector<double>& loss_trace) {
  if (data.windows <= 0 || data.values.empty()) throw InputError("training dataset is empty");
  if (config.batch_size <= 0) throw ConfigError("batch size must be positive");
  if (config.chunk_length > data.window_length) throw ConfigError("chunk length exceeds the dataset window length");
  if (denoiser.config().channels != data.layout.step_size())
    throw InputError("network channel count does not match the dataset layout");
  denoiser.set_window_length(config.chunk_length);

  Rng rng = make_rng(config.seed, {0x747261696e});
  Adam adam(denoiser.parameters(), config.learning_rate, config.weight_decay);
  loss_trace.reserve(loss_trace.size() + config.num_steps);
  for (std::size_t step = 0; step < config.num_steps; ++step) {
    const DsmBatch batch = sample_dsm_batch(data, config.chunk_length, config.batch_size, rng);
    const double loss = denoiser.dsm_loss_with_gradients(diffuse(schedule, batch), batch.times, batch.noise);
    if (!std::isfinite(loss)) throw TrainingDivergence(step, "non-finite DSM loss at step " + std::to_string(step));
    adam.step(denoiser.parameters());
    loss_trace.push_back(loss);
  }
}

TrainResult train_dsm(const AugmentedTrajectory& data, const NoiseSchedule& schedule, const TrainConfig& config,
                      NetworkConfig network) {
  if (data.windows <= 0 || data.values.empty()) throw InputError("training dataset is empty");
  network.channels = data.layout.step_size();
  network.window_length = config.chunk_length;
  network.schedule = schedule.kind();
  if (network.sites == 0) network.sites = data.layout.grid().dims.size() == 1 ? data.layout.cells() : 1;
  TrainResult result{WindowDenoiser(network, derive_seed(config.seed, {0x696e6974})), {}};
  train_dsm(result.denoiser, data, schedule, config, result.loss_trace);
  return result;
}

}  // namespace soad
