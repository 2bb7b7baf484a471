#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "rvae/autodiff.hpp"
#include "rvae/config.hpp"
#include "rvae/data.hpp"
#include "rvae/errors.hpp"
#include "rvae/losses.hpp"
#include "rvae/model.hpp"

namespace rvae {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First/second moment estimates, one buffer per parameter tensor.
struct AdamState {
  AdamOptions options;
  std::uint64_t t = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;

  template <typename Range>
  static AdamState zeros_like(const Range& params, AdamOptions options = {}) {
    AdamState s;
    s.options = options;
    for (const Tensor* p : params) {
      s.m.push_back(Tensor::zeros(p->shape()));
      s.v.push_back(Tensor::zeros(p->shape()));
    }
    return s;
  }
};

/// One bias-corrected Adam update of `params` in place.
inline void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads,
                      AdamState& state) {
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    throw DimensionError("adam_step: parameter/gradient/state counts differ");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->shape() != grads[i].shape() || params[i]->shape() != state.m[i].shape()) {
      throw DimensionError("adam_step: shape mismatch for parameter " + std::to_string(i));
    }
    if (!grads[i].all_finite()) {
      throw NonFiniteError("adam_step",
                           "non-finite gradient for parameter " + std::to_string(i) +
                               " at step " + std::to_string(state.t + 1));
    }
  }
  const auto& o = state.options;
  ++state.t;
  const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i]->data();
    auto g = grads[i].data();
    auto m = state.m[i].data();
    auto v = state.v[i].data();
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = o.beta1 * m[k] + (1.0 - o.beta1) * g[k];
      v[k] = o.beta2 * v[k] + (1.0 - o.beta2) * g[k] * g[k];
      p[k] -= o.lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + o.eps);
    }
  }
}

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 128;
  std::uint64_t seed = 0;
  LossSpec loss;
  Arch arch;
  bool shuffle = true;
  std::size_t checkpoint_every = 0;  // epochs; 0 disables
  AdamOptions adam;
  bool record_wall_time = false;

  void validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (loss.obs_model != arch.obs_model) {
      throw ConfigError("loss observation model differs from architecture observation model");
    }
    loss.validate();
  }
};

struct EpochStats {
  std::size_t epoch = 0;
  double total = 0.0;
  double recon = 0.0;
  double kl = 0.0;
  double wall_ms = 0.0;

  friend bool operator==(const EpochStats&, const EpochStats&) = default;
};

struct TrainLog {
  std::vector<EpochStats> epochs;

  /// CSV: epoch,total,recon,kl,wall_ms
  std::string to_csv() const {
    std::ostringstream os;
    os << "epoch,total,recon,kl,wall_ms\n";
    for (const auto& e : epochs) {
      os << e.epoch << ',' << format_double(e.total) << ',' << format_double(e.recon) << ','
         << format_double(e.kl) << ',' << format_double(e.wall_ms) << '\n';
    }
    return os.str();
  }

  friend bool operator==(const TrainLog&, const TrainLog&) = default;
};

struct TrainResult {
  VaeParams params;
  TrainLog log;
};

using CheckpointHook = std::function<void(std::size_t epoch, const VaeParams&)>;

namespace detail {

// Independent deterministic streams derived from one user seed.
inline std::mt19937_64 stream(std::uint64_t seed, std::uint64_t purpose) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(purpose)};
  return std::mt19937_64(seq);
}

inline constexpr std::uint64_t kShuffleStream = 1;
inline constexpr std::uint64_t kNoiseStream = 2;

}  // namespace detail

/// One forward/backward pass over a minibatch. Returns (total, recon, kl)
/// and writes parameter gradients into `grads`.
inline std::array<double, 3> loss_and_gradients(const VaeParams& params, const LossSpec& spec,
                                                const Tensor& x, const Tensor& eps,
                                                std::vector<Tensor>& grads) {
  Graph g;
  auto bound = bind(g, params);
  Var xv = g.constant(x);
  auto post = encode(bound, xv);
  Var z = reparameterize(post, eps);
  auto recon = decode(bound, z);
  auto loss = compute_loss(spec, xv, recon, post);
  g.backward(loss.total);
  grads.clear();
  for (Var v : bound.vars) grads.push_back(g.grad(v));
  return {loss.total.value().item(), loss.recon_term.value().item(),
          loss.kl_term.value().item()};
}

/// Minibatch Adam on the SGVB estimate with one latent sample per record.
/// Shuffling, noise draws and initialization all derive from config.seed.
/// The final partial batch is kept. Starts from `init` when given.
inline TrainResult train(const TrainConfig& config, const Dataset& data,
                         const VaeParams* init = nullptr, const CheckpointHook& hook = {}) {
  config.validate();
  if (data.dim != config.arch.input_dim) {
    throw ArchMismatchError("dataset has D=" + std::to_string(data.dim) +
                            ", architecture expects D=" + std::to_string(config.arch.input_dim));
  }
  if (data.rows == 0) throw DataError("training dataset is empty");

  TrainResult result;
  result.params = init ? *init : init_params(config.arch, config.seed);
  if (!(result.params.arch == config.arch)) {
    throw ArchMismatchError("initial parameters have " + describe(result.params.arch) +
                            ", config expects " + describe(config.arch));
  }
  auto tensors = result.params.tensors();
  auto state = AdamState::zeros_like(tensors, config.adam);

  auto shuffle_rng = detail::stream(config.seed, detail::kShuffleStream);
  auto noise_rng = detail::stream(config.seed, detail::kNoiseStream);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::size_t> order(data.rows);
  std::iota(order.begin(), order.end(), 0);
  std::vector<Tensor> grads;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    if (config.shuffle) std::shuffle(order.begin(), order.end(), shuffle_rng);
    double total = 0.0, recon = 0.0, kl = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t begin = 0; begin < data.rows; begin += config.batch_size, ++batch_index) {
      const std::size_t end = std::min(data.rows, begin + config.batch_size);
      std::span<const std::size_t> idx(order.data() + begin, end - begin);
      const Tensor x = data.gather(idx);
      Tensor eps = Tensor::zeros({idx.size(), config.arch.latent_dim});
      for (double& e : eps.data()) e = normal(noise_rng);

      std::array<double, 3> values{};
      try {
        values = loss_and_gradients(result.params, config.loss, x, eps, grads);
        for (double v : values) {
          if (!std::isfinite(v)) throw NonFiniteError("loss", "loss is not finite");
        }
        std::vector<Tensor*> ptrs(tensors.begin(), tensors.end());
        adam_step(ptrs, grads, state);
      } catch (const NonFiniteError& e) {
        throw NonFiniteError(e.where(), std::string(e.what()) + " (epoch " +
                                            std::to_string(epoch) + ", batch " +
                                            std::to_string(batch_index) + ")");
      }
      const double w = static_cast<double>(idx.size());
      total += values[0] * w;
      recon += values[1] * w;
      kl += values[2] * w;
    }
    const double n = static_cast<double>(data.rows);
    EpochStats stats{epoch, total / n, recon / n, kl / n, 0.0};
    if (config.record_wall_time) {
      stats.wall_ms = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - started)
                          .count();
    }
    result.log.epochs.push_back(stats);
    if (hook && config.checkpoint_every > 0 && epoch % config.checkpoint_every == 0) {
      hook(epoch, result.params);
    }
  }
  return result;
}

}  // namespace rvae
