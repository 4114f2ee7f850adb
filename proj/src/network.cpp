#include "soad/network.hpp"

#include <cmath>
#include <functional>
#include <string>

#include "soad/errors.hpp"
#include "soad/random.hpp"

namespace soad {

namespace {

enum : std::size_t { kConvIn = 0, kConvInBias = 1, kEmbed = 2, kFirstBlock = 3 };

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Matrix silu(const Matrix& x) {
  return x.unaryExpr([](double v) { return v * sigmoid(v); });
}

Matrix silu_grad(const Matrix& x) {
  return x.unaryExpr([](double v) {
    const double s = sigmoid(v);
    return s * (1.0 + v * (1.0 - s));
  });
}

struct Stencil {
  Index steps, sites, kernel, spatial;
  Index taps() const { return kernel * spatial; }
};

/// Stack shifted copies of x (features x batch*steps*sites, site fastest). Row block
/// jt * spatial + js holds x at step offset jt - kernel/2 (zero outside the window) and
/// site offset js - spatial/2 (wrapping around the ring).
template <bool Adjoint>
void stencil_apply(const Matrix& in, Matrix& out, Index features, const Stencil& st) {
  const Index per_sample = st.steps * st.sites;
  const Index batch = (Adjoint ? out.cols() : in.cols()) / per_sample;
  for (Index jt = 0; jt < st.kernel; ++jt) {
    const Index dt = jt - st.kernel / 2;
    for (Index js = 0; js < st.spatial; ++js) {
      const Index ds = ((js - st.spatial / 2) % st.sites + st.sites) % st.sites;
      const Index row = (jt * st.spatial + js) * features;
      for (Index b = 0; b < batch; ++b) {
        for (Index k = 0; k < st.steps; ++k) {
          const Index ks = k + dt;
          if (ks < 0 || ks >= st.steps) continue;
          const Index dst = b * per_sample + k * st.sites;
          const Index src = b * per_sample + ks * st.sites;
          // cells [0, sites - ds) read src + ds.., the rest wrap to src + 0..
          const Index head = st.sites - ds;
          if constexpr (!Adjoint) {
            out.block(row, dst, features, head) = in.middleCols(src + ds, head);
            if (ds) out.block(row, dst + head, features, ds) = in.middleCols(src, ds);
          } else {
            out.middleCols(src + ds, head) += in.block(row, dst, features, head);
            if (ds) out.middleCols(src, ds) += in.block(row, dst + head, features, ds);
          }
        }
      }
    }
  }
}

Matrix stencil_stack(const Matrix& x, const Stencil& st) {
  if (st.taps() == 1) return x;
  Matrix out = Matrix::Zero(x.rows() * st.taps(), x.cols());
  stencil_apply<false>(x, out, x.rows(), st);
  return out;
}

Matrix stencil_unstack(const Matrix& stacked, Index features, const Stencil& st) {
  if (st.taps() == 1) return stacked;
  Matrix out = Matrix::Zero(features, stacked.cols());
  stencil_apply<true>(stacked, out, features, st);
  return out;
}

/// (channels*steps) x batch windows to features x (batch*steps*sites) columns.
Matrix to_columns(const Matrix& z, Index features, Index sites) {
  const Index steps_total = z.size() / (features * sites);
  if (sites == 1) return Eigen::Map<const Matrix>(z.data(), features, steps_total);
  Matrix out(features, steps_total * sites);
  for (Index s = 0; s < steps_total; ++s)
    out.middleCols(s * sites, sites) = Eigen::Map<const Matrix>(z.data() + s * features * sites, sites, features).transpose();
  return out;
}

Matrix from_columns(const Matrix& cols, Index sites, Index rows, Index batch) {
  const Index features = cols.rows();
  Matrix out(rows, batch);
  if (sites == 1) {
    Eigen::Map<Matrix>(out.data(), features, cols.cols()) = cols;
    return out;
  }
  const Index steps_total = cols.cols() / sites;
  for (Index s = 0; s < steps_total; ++s)
    Eigen::Map<Matrix>(out.data() + s * features * sites, sites, features) = cols.middleCols(s * sites, sites).transpose();
  return out;
}

Parameter make_param(std::string name, Index rows, Index cols, Index fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> uniform(-bound, bound);
  Matrix value(rows, cols);
  for (Index i = 0; i < value.size(); ++i) value.data()[i] = uniform(rng);
  return {std::move(name), std::move(value), Matrix::Zero(rows, cols)};
}

}  // namespace

struct WindowDenoiser::Tape {
  Index steps = 0;
  Index batch = 0;
  RowVector mu, sigma;              // per sample, used by the velocity output
  Matrix embedding_features;        // E x batch
  std::vector<Matrix> stacked;      // input of each conv layer, temporally stacked
  std::vector<Matrix> preactivation;
  Matrix last_hidden;
};

Matrix time_embedding(const Vector& frequencies, const RowVector& times) {
  const Index half = frequencies.size();
  Matrix phi(2 * half, times.size());
  for (Index b = 0; b < times.size(); ++b) {
    for (Index j = 0; j < half; ++j) {
      const double a = frequencies[j] * times[b];
      phi(j, b) = std::sin(a);
      phi(half + j, b) = std::cos(a);
    }
  }
  return phi;
}

NetworkConfig::Output parse_network_output(std::string_view name) {
  if (name == "velocity" || name == "v") return NetworkConfig::Output::Velocity;
  if (name == "epsilon" || name == "eps") return NetworkConfig::Output::Epsilon;
  throw ConfigError("unknown network output: " + std::string(name));
}

std::string to_string(NetworkConfig::Output output) {
  return output == NetworkConfig::Output::Velocity ? "velocity" : "epsilon";
}

WindowDenoiser::WindowDenoiser(NetworkConfig config, std::uint64_t seed)
    : config_(config), schedule_(config.schedule, 1e-4, 1.0 - 1e-4) {
  const auto& c = config_;
  if (c.channels <= 0 || c.window_length <= 0 || c.hidden <= 0 || c.depth < 1)
    throw ConfigError("network: channels, window_length, hidden and depth must be positive");
  if (c.embedding < 2 || c.embedding % 2 != 0) throw ConfigError("network: embedding width must be even");
  if (c.kernel < 1 || c.kernel % 2 == 0) throw ConfigError("network: temporal kernel must be odd");
  if (c.sites < 1 || c.channels % c.sites != 0)
    throw ConfigError("network: sites must be positive and divide the channel count");
  if (c.sites > 1 && (c.spatial_kernel < 1 || c.spatial_kernel % 2 == 0))
    throw ConfigError("network: spatial kernel must be odd");
  if (c.sites > 1 && c.spatial_kernel > c.sites) throw ConfigError("network: spatial kernel exceeds the ring size");
  features_ = c.channels / c.sites;
  taps_ = c.kernel * (c.sites > 1 ? c.spatial_kernel : 1);

  const Index half = c.embedding / 2;
  frequencies_.resize(half);
  for (Index j = 0; j < half; ++j) {
    const double frac = half > 1 ? static_cast<double>(j) / static_cast<double>(half - 1) : 0.0;
    frequencies_[j] = std::exp(frac * std::log(1000.0));
  }

  Rng rng = make_rng(seed, {0x6e6574});
  params_.push_back(make_param("conv_in.weight", c.hidden, taps_ * features_, taps_ * features_, rng));
  params_.push_back(make_param("conv_in.bias", c.hidden, 1, taps_ * features_, rng));
  params_.push_back(make_param("embed.weight", c.hidden, c.embedding, c.embedding, rng));
  for (Index i = 1; i < c.depth; ++i) {
    const std::string prefix = "block" + std::to_string(i);
    params_.push_back(make_param(prefix + ".weight", c.hidden, taps_ * c.hidden, taps_ * c.hidden, rng));
    params_.push_back(make_param(prefix + ".bias", c.hidden, 1, taps_ * c.hidden, rng));
  }
  params_.push_back(make_param("out.weight", features_, c.hidden, c.hidden, rng));
  params_.push_back(make_param("out.bias", features_, 1, c.hidden, rng));
}

void WindowDenoiser::set_window_length(Index window_length) {
  if (window_length <= 0) throw ConfigError("network: window length must be positive");
  config_.window_length = window_length;
}

std::size_t WindowDenoiser::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

Matrix WindowDenoiser::forward(const Matrix& z, const RowVector& times, Tape* tape) const {
  const auto& c = config_;
  const Index steps = c.window_length;
  const Index batch = z.cols();
  const Index per_sample = steps * c.sites;
  const Stencil st{steps, c.sites, c.kernel, c.sites > 1 ? c.spatial_kernel : 1};
  const Matrix x = to_columns(z, features_, c.sites);

  const Matrix phi = time_embedding(frequencies_, times);
  const Matrix emb = params_[kEmbed].value * phi;  // hidden x batch

  Matrix stacked = stencil_stack(x, st);
  Matrix pre = params_[kConvIn].value * stacked;
  pre.colwise() += params_[kConvInBias].value.col(0);
  for (Index b = 0; b < batch; ++b) pre.middleCols(b * per_sample, per_sample).colwise() += emb.col(b);
  Matrix h = silu(pre);
  if (tape) {
    tape->steps = steps;
    tape->batch = batch;
    tape->embedding_features = phi;
    tape->stacked.clear();
    tape->preactivation.clear();
    tape->stacked.push_back(std::move(stacked));
    tape->preactivation.push_back(std::move(pre));
  }

  for (Index i = 1; i < c.depth; ++i) {
    const auto& w = params_[kFirstBlock + 2 * (i - 1)].value;
    const auto& bias = params_[kFirstBlock + 2 * (i - 1) + 1].value;
    Matrix s = stencil_stack(h, st);
    Matrix p = w * s;
    p.colwise() += bias.col(0);
    h += silu(p);
    if (tape) {
      tape->stacked.push_back(std::move(s));
      tape->preactivation.push_back(std::move(p));
    }
  }

  const std::size_t out = params_.size() - 2;
  Matrix yc = params_[out].value * h;
  yc.colwise() += params_[out + 1].value.col(0);
  if (tape) tape->last_hidden = std::move(h);
  Matrix y = from_columns(yc, c.sites, c.channels * steps, batch);
  if (c.output == NetworkConfig::Output::Velocity) {
    RowVector mu(batch), sigma(batch);
    for (Index b = 0; b < batch; ++b) {
      const auto ms = schedule_.mu_sigma(times[b]);
      mu[b] = ms.mu;
      sigma[b] = ms.sigma;
    }
    y = y.array().rowwise() * mu.array() + z.array().rowwise() * sigma.array();
    if (tape) {
      tape->mu = std::move(mu);
      tape->sigma = std::move(sigma);
    }
  }
  return y;
}

Matrix WindowDenoiser::backward(const Tape& tape, const Matrix& d_out, std::vector<Parameter>* grads) const {
  const auto& c = config_;
  const Index steps = tape.steps;
  const Index batch = tape.batch;
  const Index per_sample = steps * c.sites;
  const Stencil st{steps, c.sites, c.kernel, c.sites > 1 ? c.spatial_kernel : 1};
  const bool velocity = c.output == NetworkConfig::Output::Velocity;
  const Matrix d_trunk = velocity ? Matrix(d_out.array().rowwise() * tape.mu.array()) : d_out;
  const Matrix dy = to_columns(d_trunk, features_, c.sites);

  const std::size_t out = params_.size() - 2;
  if (grads) {
    (*grads)[out].grad.noalias() += dy * tape.last_hidden.transpose();
    (*grads)[out + 1].grad.col(0) += dy.rowwise().sum();
  }
  Matrix dh = params_[out].value.transpose() * dy;

  for (Index i = c.depth - 1; i >= 1; --i) {
    const std::size_t w = kFirstBlock + 2 * static_cast<std::size_t>(i - 1);
    const Matrix dpre = dh.cwiseProduct(silu_grad(tape.preactivation[static_cast<std::size_t>(i)]));
    if (grads) {
      (*grads)[w].grad.noalias() += dpre * tape.stacked[static_cast<std::size_t>(i)].transpose();
      (*grads)[w + 1].grad.col(0) += dpre.rowwise().sum();
    }
    dh += stencil_unstack(params_[w].value.transpose() * dpre, c.hidden, st);
  }

  const Matrix dpre = dh.cwiseProduct(silu_grad(tape.preactivation[0]));
  if (grads) {
    (*grads)[kConvIn].grad.noalias() += dpre * tape.stacked[0].transpose();
    (*grads)[kConvInBias].grad.col(0) += dpre.rowwise().sum();
    Matrix demb(c.hidden, batch);
    for (Index b = 0; b < batch; ++b) demb.col(b) = dpre.middleCols(b * per_sample, per_sample).rowwise().sum();
    (*grads)[kEmbed].grad.noalias() += demb * tape.embedding_features.transpose();
  }
  Matrix dx = from_columns(stencil_unstack(params_[kConvIn].value.transpose() * dpre, features_, st), c.sites,
                           c.channels * steps, batch);
  if (velocity) dx += Matrix(d_out.array().rowwise() * tape.sigma.array());
  return dx;
}

Matrix WindowDenoiser::epsilon(const Matrix& z, double t) const {
  check_input(z);
  return forward(z, RowVector::Constant(z.cols(), t), nullptr);
}

namespace {

class NetworkLinearization final : public Linearization {
 public:
  using Backward = std::function<Matrix(const Matrix&)>;
  NetworkLinearization(Matrix value, Backward backward)
      : value_(std::move(value)), backward_(std::move(backward)) {}
  const Matrix& value() const override { return value_; }
  Matrix vjp(const Matrix& cotangent) const override {
    if (cotangent.rows() != value_.rows() || cotangent.cols() != value_.cols())
      throw ShapeError("vjp: cotangent shape mismatch");
    return backward_(cotangent);
  }

 private:
  Matrix value_;
  Backward backward_;
};

}  // namespace

std::unique_ptr<Linearization> WindowDenoiser::linearize(const Matrix& z, double t) const {
  check_input(z);
  auto tape = std::make_shared<Tape>();
  Matrix value = forward(z, RowVector::Constant(z.cols(), t), tape.get());
  return std::make_unique<NetworkLinearization>(
      std::move(value), [this, tape](const Matrix& cot) { return backward(*tape, cot, nullptr); });
}

namespace {

void check_batch(const Matrix& z_t, const RowVector& times, const Matrix& target) {
  if (target.rows() != z_t.rows() || target.cols() != z_t.cols() || times.size() != z_t.cols())
    throw ShapeError("dsm_loss: batch shapes differ");
}

}  // namespace

double WindowDenoiser::dsm_loss(const Matrix& z_t, const RowVector& times, const Matrix& target) const {
  check_input(z_t);
  check_batch(z_t, times, target);
  return 0.5 * (forward(z_t, times, nullptr) - target).squaredNorm() / static_cast<double>(z_t.cols());
}

double WindowDenoiser::dsm_loss_with_gradients(const Matrix& z_t, const RowVector& times, const Matrix& target) {
  check_input(z_t);
  check_batch(z_t, times, target);
  const double batch = static_cast<double>(z_t.cols());
  Tape tape;
  const Matrix residual = forward(z_t, times, &tape) - target;
  for (auto& p : params_) p.grad.setZero();
  backward(tape, residual / batch, &params_);
  return 0.5 * residual.squaredNorm() / batch;
}

}  // namespace soad
