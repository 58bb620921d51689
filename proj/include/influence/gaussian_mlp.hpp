#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "influence/data_model.hpp"
#include "influence/error.hpp"
#include "influence/random.hpp"

namespace influence {

struct GaussianPrediction {
  double mean = 0.0;
  double std = 1.0;
};

inline double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// Negative log-likelihood of `target` under N(mean, std^2), in nats.
inline double nll_loss(const GaussianPrediction& pred, double target) {
  if (!(pred.std > 0.0) || !std::isfinite(pred.std)) {
    fail(ErrorCategory::invalid_state, "prediction has non-positive standard deviation");
  }
  const double z = (target - pred.mean) / pred.std;
  return 0.5 * std::log(2.0 * std::numbers::pi) + std::log(pred.std) + 0.5 * z * z;
}

/// Multilayer perceptron with rectifier hidden units and a two-unit Gaussian
/// emission head: unit 0 is the mean, unit 1 the pre-spread, mapped to a
/// standard deviation by softplus plus a floor sigma_min.
///
/// All weights and biases live in one flat buffer; layer l stores its
/// (out x in) row-major weight matrix followed by its bias vector.
class MlpModel {
 public:
  static constexpr double kDefaultSigmaMin = 1e-4;

  /// Per-forward scratch buffers; reuse one per thread to avoid allocation.
  struct Workspace {
    std::vector<std::vector<double>> activations;  // output of each layer
    std::vector<double> delta;
    std::vector<double> delta_prev;
  };

  MlpModel() = default;

  /// Glorot-uniform weights, U(-sqrt(6/(fan_in+fan_out)), +...), zero biases.
  static MlpModel initialize(std::vector<std::size_t> dims, std::uint64_t seed,
                             double sigma_min = kDefaultSigmaMin) {
    MlpModel m(std::move(dims), sigma_min);
    Rng rng(seed);
    for (std::size_t l = 0; l + 1 < m.dims_.size(); ++l) {
      const double bound = std::sqrt(6.0 / static_cast<double>(m.dims_[l] + m.dims_[l + 1]));
      for (double& w : m.weights(l)) w = rng.uniform(-bound, bound);
    }
    return m;
  }

  /// Zero-filled model with the given layout; parameters are set by the caller.
  static MlpModel zeros(std::vector<std::size_t> dims, double sigma_min = kDefaultSigmaMin) {
    return MlpModel(std::move(dims), sigma_min);
  }

  std::size_t input_size() const noexcept { return dims_.empty() ? 0 : dims_.front(); }
  std::size_t num_layers() const noexcept { return dims_.empty() ? 0 : dims_.size() - 1; }
  const std::vector<std::size_t>& layer_dims() const noexcept { return dims_; }
  double sigma_min() const noexcept { return sigma_min_; }

  /// When set, the mean head predicts an offset from this input value
  /// (typically the most recent observation) instead of the raw target.
  const std::optional<std::size_t>& mean_offset_input() const noexcept { return mean_offset_input_; }
  void set_mean_offset_input(std::optional<std::size_t> index) {
    require(!index || *index < input_size(), ErrorCategory::invalid_argument,
            "mean offset input index out of range");
    mean_offset_input_ = index;
  }

  std::span<const double> parameters() const noexcept { return params_; }
  std::span<double> parameters() noexcept { return params_; }
  std::size_t parameter_count() const noexcept { return params_.size(); }

  std::span<double> weights(std::size_t l) { return {params_.data() + offsets_[l], dims_[l + 1] * dims_[l]}; }
  std::span<const double> weights(std::size_t l) const {
    return {params_.data() + offsets_[l], dims_[l + 1] * dims_[l]};
  }
  std::span<double> biases(std::size_t l) {
    return {params_.data() + offsets_[l] + dims_[l + 1] * dims_[l], dims_[l + 1]};
  }
  std::span<const double> biases(std::size_t l) const {
    return {params_.data() + offsets_[l] + dims_[l + 1] * dims_[l], dims_[l + 1]};
  }

  GaussianPrediction forward(std::span<const double> input) const {
    Workspace ws;
    return forward(input, ws);
  }

  GaussianPrediction forward(std::span<const double> input, Workspace& ws) const {
    require(!dims_.empty(), ErrorCategory::invalid_state, "model is not initialized");
    if (input.size() != input_size()) {
      fail(ErrorCategory::invalid_argument, "input has " + std::to_string(input.size()) +
                                                " values, model expects " +
                                                std::to_string(input_size()));
    }
    const std::size_t L = num_layers();
    ws.activations.resize(L);
    std::span<const double> x = input;
    for (std::size_t l = 0; l < L; ++l) {
      const std::size_t in = dims_[l];
      const std::size_t out = dims_[l + 1];
      auto& y = ws.activations[l];
      y.resize(out);
      const double* w = params_.data() + offsets_[l];
      const double* b = w + out * in;
      for (std::size_t j = 0; j < out; ++j) {
        const double* wj = w + j * in;
        double acc = b[j];
        for (std::size_t i = 0; i < in; ++i) acc += wj[i] * x[i];
        y[j] = (l + 1 < L) ? std::max(acc, 0.0) : acc;
      }
      x = y;
    }
    const double base = mean_offset_input_ ? input[*mean_offset_input_] : 0.0;
    return {x[0] + base, softplus(x[1]) + sigma_min_};
  }

  /// Accumulates scale * dNLL/dparams into `grad` and returns the loss.
  double accumulate_gradient(std::span<const double> input, double target, std::span<double> grad,
                             double scale, Workspace& ws) const {
    require(grad.size() == params_.size(), ErrorCategory::invalid_argument,
            "gradient buffer size mismatch");
    const auto pred = forward(input, ws);
    const std::size_t L = num_layers();
    const auto& head = ws.activations[L - 1];
    const double var = pred.std * pred.std;
    const double err = pred.mean - target;
    const double loss = nll_loss(pred, target);

    // dL/dmean and dL/dpre_spread
    ws.delta.assign(2, 0.0);
    ws.delta[0] = err / var;
    const double dl_dstd = 1.0 / pred.std - err * err / (var * pred.std);
    ws.delta[1] = dl_dstd * sigmoid(head[1]);

    for (std::size_t l = L; l-- > 0;) {
      const std::size_t in = dims_[l];
      const std::size_t out = dims_[l + 1];
      std::span<const double> x = (l == 0) ? input : std::span<const double>(ws.activations[l - 1]);
      const double* w = params_.data() + offsets_[l];
      double* gw = grad.data() + offsets_[l];
      double* gb = gw + out * in;
      for (std::size_t j = 0; j < out; ++j) {
        const double d = scale * ws.delta[j];
        if (d == 0.0) continue;
        double* gwj = gw + j * in;
        for (std::size_t i = 0; i < in; ++i) gwj[i] += d * x[i];
        gb[j] += d;
      }
      if (l == 0) break;
      ws.delta_prev.assign(in, 0.0);
      for (std::size_t j = 0; j < out; ++j) {
        const double d = ws.delta[j];
        if (d == 0.0) continue;
        const double* wj = w + j * in;
        for (std::size_t i = 0; i < in; ++i) ws.delta_prev[i] += wj[i] * d;
      }
      for (std::size_t i = 0; i < in; ++i) {
        if (!(x[i] > 0.0)) ws.delta_prev[i] = 0.0;  // rectifier derivative
      }
      std::swap(ws.delta, ws.delta_prev);
    }
    return loss;
  }

  friend bool operator==(const MlpModel&, const MlpModel&) = default;

 private:
  MlpModel(std::vector<std::size_t> dims, double sigma_min) : dims_(std::move(dims)), sigma_min_(sigma_min) {
    require(dims_.size() >= 2, ErrorCategory::invalid_argument, "model needs at least one layer");
    require(dims_.back() == 2, ErrorCategory::invalid_argument,
            "the emission layer must have exactly 2 units");
    require(sigma_min_ > 0.0, ErrorCategory::invalid_argument, "sigma_min must be positive");
    for (auto d : dims_) require(d > 0, ErrorCategory::invalid_argument, "layer sizes must be positive");
    std::size_t total = 0;
    for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
      offsets_.push_back(total);
      total += dims_[l + 1] * dims_[l] + dims_[l + 1];
    }
    params_.assign(total, 0.0);
  }

  std::vector<std::size_t> dims_;
  std::vector<std::size_t> offsets_;
  std::vector<double> params_;
  double sigma_min_ = kDefaultSigmaMin;
  std::optional<std::size_t> mean_offset_input_;
};

inline GaussianPrediction forward(const MlpModel& model, std::span<const double> input) {
  return model.forward(input);
}

/// Analytic gradient of the NLL for one (input, target) pair, laid out like
/// MlpModel::parameters().
inline std::vector<double> backward(const MlpModel& model, std::span<const double> input, double target) {
  std::vector<double> grad(model.parameter_count(), 0.0);
  MlpModel::Workspace ws;
  model.accumulate_gradient(input, target, grad, 1.0, ws);
  return grad;
}

/// Mean gradient over a batch.
inline std::vector<double> batch_gradient(const MlpModel& model,
                                          const std::vector<std::vector<double>>& inputs,
                                          std::span<const double> targets) {
  require(!inputs.empty() && inputs.size() == targets.size(), ErrorCategory::invalid_argument,
          "batch inputs and targets must be non-empty and equally sized");
  std::vector<double> grad(model.parameter_count(), 0.0);
  MlpModel::Workspace ws;
  const double scale = 1.0 / static_cast<double>(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    model.accumulate_gradient(inputs[i], targets[i], grad, scale, ws);
  }
  return grad;
}

// ---------------------------------------------------------------------------
// training

class AdamOptimizer {
 public:
  explicit AdamOptimizer(std::size_t n, double learning_rate, double weight_decay = 0.0,
                         double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(learning_rate), decay_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps),
        m_(n, 0.0), v_(n, 0.0) {}

  void step(std::span<double> params, std::span<const double> grad) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
      v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
      params[i] -= lr_ * ((m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_) + decay_ * params[i]);
    }
  }

 private:
  double lr_, decay_, beta1_, beta2_, eps_;
  std::vector<double> m_, v_;
  std::uint64_t t_ = 0;
};

struct TrainConfig {
  std::size_t epochs = 200;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  double weight_decay = 0.0;  // decoupled, applied to all parameters
  double mask_probability = 0.5;
  std::uint64_t rng_seed = 0;
  std::size_t patience = 20;  // 0 disables early stopping
  std::vector<std::size_t> hidden{32, 16};
  double sigma_min = MlpModel::kDefaultSigmaMin;
  double validation_fraction = 0.1;
  bool residual_mean = true;  // mean head predicts the change from the last observation

  void validate() const {
    require(epochs > 0, ErrorCategory::invalid_argument, "epochs must be positive");
    require(batch_size > 0, ErrorCategory::invalid_argument, "batch size must be positive");
    require(learning_rate > 0.0, ErrorCategory::invalid_argument, "learning rate must be positive");
    require(weight_decay >= 0.0, ErrorCategory::invalid_argument, "weight decay must be non-negative");
    require(mask_probability >= 0.0 && mask_probability <= 1.0, ErrorCategory::invalid_argument,
            "mask probability must lie in [0,1]");
    require(validation_fraction >= 0.0 && validation_fraction < 1.0,
            ErrorCategory::invalid_argument, "validation fraction must lie in [0,1)");
    require(sigma_min > 0.0, ErrorCategory::invalid_argument, "sigma_min must be positive");
  }
};

struct EpochStats {
  std::size_t epoch = 0;
  double train_nll = 0.0;       // mean loss over the epoch's updates
  double validation_nll = 0.0;  // mask-probability weighted, NaN when no validation split
};

struct TrainResult {
  MlpModel model;
  std::vector<EpochStats> history;
  std::size_t best_epoch = 0;
};

namespace detail {

inline double mixed_nll(const MlpModel& model, const std::vector<std::vector<double>>& plain,
                        const std::vector<std::vector<double>>& masked,
                        std::span<const double> targets, std::size_t first, std::size_t last,
                        double p, MlpModel::Workspace& ws) {
  double total = 0.0;
  for (std::size_t i = first; i < last; ++i) {
    double l = 0.0;
    if (p < 1.0) l += (1.0 - p) * nll_loss(model.forward(plain[i], ws), targets[i]);
    if (p > 0.0) l += p * nll_loss(model.forward(masked[i], ws), targets[i]);
    total += l;
  }
  return total / static_cast<double>(last - first);
}

}  // namespace detail

/// Trains one model for both the full and the masked regime: each sample is
/// masked with probability p, re-drawn every epoch. The final fraction of
/// samples (in time order) is held out; the returned model is the one with
/// the best held-out NLL.
inline TrainResult train(const std::vector<WindowSample>& samples, const MaskSpec& mask,
                         const TrainConfig& cfg) {
  cfg.validate();
  require(!samples.empty(), ErrorCategory::invalid_argument, "no training samples");

  const std::size_t n = samples.size();
  std::vector<std::vector<double>> plain(n), masked(n);
  std::vector<double> targets(n);
  for (std::size_t i = 0; i < n; ++i) {
    plain[i] = flatten(samples[i]);
    masked[i] = flatten(apply_mask(samples[i], mask));
    targets[i] = samples[i].target;
  }

  std::size_t n_val = static_cast<std::size_t>(std::floor(cfg.validation_fraction * static_cast<double>(n)));
  if (n_val >= n) n_val = 0;
  const std::size_t n_train = n - n_val;

  std::vector<std::size_t> dims{plain[0].size()};
  dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
  dims.push_back(2);

  Rng rng(cfg.rng_seed);
  TrainResult result;
  MlpModel model = MlpModel::initialize(dims, cfg.rng_seed ^ 0x9E3779B97F4A7C15ULL, cfg.sigma_min);
  if (cfg.residual_mean) model.set_mean_offset_input(last_observation_index(samples.front()));
  AdamOptimizer adam(model.parameter_count(), cfg.learning_rate, cfg.weight_decay);
  MlpModel::Workspace ws;
  std::vector<double> grad(model.parameter_count());
  std::vector<std::size_t> order(n_train);
  std::iota(order.begin(), order.end(), std::size_t{0});

  double best = std::numeric_limits<double>::infinity();
  result.model = model;
  std::size_t since_best = 0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n_train; start += cfg.batch_size) {
      const std::size_t stop = std::min(start + cfg.batch_size, n_train);
      const double scale = 1.0 / static_cast<double>(stop - start);
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t k = start; k < stop; ++k) {
        const std::size_t i = order[k];
        const bool use_mask = rng.bernoulli(cfg.mask_probability);
        epoch_loss += model.accumulate_gradient(use_mask ? masked[i] : plain[i], targets[i], grad,
                                                scale, ws);
      }
      adam.step(model.parameters(), grad);
    }
    epoch_loss /= static_cast<double>(n_train);
    if (!std::isfinite(epoch_loss)) {
      fail(ErrorCategory::training_diverged, "training diverged at epoch " + std::to_string(epoch));
    }

    EpochStats stats{epoch, epoch_loss, std::numeric_limits<double>::quiet_NaN()};
    double score = epoch_loss;
    if (n_val > 0) {
      stats.validation_nll =
          detail::mixed_nll(model, plain, masked, targets, n_train, n, cfg.mask_probability, ws);
      if (!std::isfinite(stats.validation_nll)) {
        fail(ErrorCategory::training_diverged,
             "validation loss diverged at epoch " + std::to_string(epoch));
      }
      score = stats.validation_nll;
    }
    result.history.push_back(stats);

    if (score < best) {
      best = score;
      result.model = model;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (cfg.patience > 0 && ++since_best >= cfg.patience) {
      break;
    }
  }
  return result;
}

}  // namespace influence
