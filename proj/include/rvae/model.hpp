#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>

#include "rvae/autodiff.hpp"
#include "rvae/errors.hpp"
#include "rvae/tensor.hpp"

namespace rvae {

enum class ObsModel { Bernoulli, Gaussian };

inline const char* to_string(ObsModel m) {
  return m == ObsModel::Bernoulli ? "bernoulli" : "gaussian";
}

inline ObsModel parse_obs_model(const std::string& s) {
  if (s == "bernoulli") return ObsModel::Bernoulli;
  if (s == "gaussian") return ObsModel::Gaussian;
  throw ConfigError("unknown observation model '" + s + "' (expected bernoulli|gaussian)");
}

/// Layer widths: input D, hidden H, latent L.
struct Arch {
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 400;
  std::size_t latent_dim = 20;
  ObsModel obs_model = ObsModel::Bernoulli;

  friend bool operator==(const Arch&, const Arch&) = default;
};

inline std::string describe(const Arch& a) {
  return "D=" + std::to_string(a.input_dim) + " H=" + std::to_string(a.hidden_dim) +
         " L=" + std::to_string(a.latent_dim) + " obs=" + to_string(a.obs_model);
}

/// Encoder and decoder MLP weights. Weight matrices are stored
/// [fan_in x fan_out] so a batch of row vectors multiplies on the left.
struct VaeParams {
  Arch arch;
  Tensor enc_w1, enc_b1;
  Tensor enc_w_mu, enc_b_mu;
  Tensor enc_w_logvar, enc_b_logvar;
  Tensor dec_w1, dec_b1;
  Tensor dec_w_out, dec_b_out;

  static constexpr std::size_t kTensorCount = 10;

  std::array<Tensor*, kTensorCount> tensors() {
    return {&enc_w1, &enc_b1, &enc_w_mu, &enc_b_mu, &enc_w_logvar,
            &enc_b_logvar, &dec_w1, &dec_b1, &dec_w_out, &dec_b_out};
  }
  std::array<const Tensor*, kTensorCount> tensors() const {
    return {&enc_w1, &enc_b1, &enc_w_mu, &enc_b_mu, &enc_w_logvar,
            &enc_b_logvar, &dec_w1, &dec_b1, &dec_w_out, &dec_b_out};
  }

  friend bool operator==(const VaeParams&, const VaeParams&) = default;
};

/// Expected shapes of the ten parameter tensors, in tensors() order.
inline std::array<Shape, VaeParams::kTensorCount> param_shapes(const Arch& a) {
  const auto d = a.input_dim, h = a.hidden_dim, l = a.latent_dim;
  return {Shape{d, h}, Shape{h}, Shape{h, l}, Shape{l}, Shape{h, l},
          Shape{l},    Shape{l, h}, Shape{h}, Shape{h, d}, Shape{d}};
}

/// Throws DimensionError on shape drift, NonFiniteError on NaN/inf entries.
inline void validate(const VaeParams& p) {
  const auto shapes = param_shapes(p.arch);
  const auto ts = p.tensors();
  for (std::size_t i = 0; i < ts.size(); ++i) {
    if (ts[i]->shape() != shapes[i]) {
      throw DimensionError("parameter " + std::to_string(i) + " has shape " +
                           shape_str(ts[i]->shape()) + ", expected " + shape_str(shapes[i]));
    }
    if (!ts[i]->all_finite()) {
      throw NonFiniteError("params", "parameter " + std::to_string(i) + " is not finite");
    }
  }
}

/// Weights ~ Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero.
inline VaeParams init_params(const Arch& arch, std::uint64_t seed) {
  if (arch.input_dim == 0 || arch.hidden_dim == 0 || arch.latent_dim == 0) {
    throw ConfigError("architecture dimensions must be positive (" + describe(arch) + ")");
  }
  VaeParams p;
  p.arch = arch;
  std::mt19937_64 rng(seed);
  const auto shapes = param_shapes(arch);
  auto ts = p.tensors();
  for (std::size_t i = 0; i < ts.size(); ++i) {
    *ts[i] = Tensor::zeros(shapes[i]);
    if (shapes[i].size() != 2) continue;
    const double bound = 1.0 / std::sqrt(static_cast<double>(shapes[i][0]));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (double& v : ts[i]->data()) v = u(rng);
  }
  return p;
}

/// Parameters registered as trainable leaves of one graph.
struct BoundParams {
  Arch arch;
  std::array<Var, VaeParams::kTensorCount> vars;

  Var enc_w1() const { return vars[0]; }
  Var enc_b1() const { return vars[1]; }
  Var enc_w_mu() const { return vars[2]; }
  Var enc_b_mu() const { return vars[3]; }
  Var enc_w_logvar() const { return vars[4]; }
  Var enc_b_logvar() const { return vars[5]; }
  Var dec_w1() const { return vars[6]; }
  Var dec_b1() const { return vars[7]; }
  Var dec_w_out() const { return vars[8]; }
  Var dec_b_out() const { return vars[9]; }
};

/// Registers parameters in `g`. Trainable unless `frozen`.
inline BoundParams bind(Graph& g, const VaeParams& p, bool frozen = false) {
  BoundParams b;
  b.arch = p.arch;
  const auto ts = p.tensors();
  for (std::size_t i = 0; i < ts.size(); ++i) {
    b.vars[i] = frozen ? g.constant(*ts[i]) : g.parameter(*ts[i]);
  }
  return b;
}

/// Diagonal Gaussian q(z|x): mean and log-variance, each [batch x L].
struct LatentPosterior {
  Var mu;
  Var logvar;
};

/// Decoder output [batch x D]: Bernoulli probabilities or Gaussian means.
struct Reconstruction {
  Var out;
};

inline void require_columns(Var x, std::size_t cols, const char* what) {
  if (x.value().rank() != 2 || x.value().dim(1) != cols) {
    throw DimensionError(std::string(what) + ": input " + shape_str(x.shape()) +
                         " needs " + std::to_string(cols) + " columns");
  }
}

inline LatentPosterior encode(const BoundParams& p, Var x) {
  require_columns(x, p.arch.input_dim, "encode");
  Var h = relu(add_row(matmul(x, p.enc_w1()), p.enc_b1()));
  return {add_row(matmul(h, p.enc_w_mu()), p.enc_b_mu()),
          add_row(matmul(h, p.enc_w_logvar()), p.enc_b_logvar())};
}

/// z = mu + exp(logvar / 2) * eps. `eps` enters as a constant.
inline Var reparameterize(const LatentPosterior& post, const Tensor& eps) {
  if (eps.shape() != post.mu.shape() || post.mu.shape() != post.logvar.shape()) {
    throw DimensionError("reparameterize: eps " + shape_str(eps.shape()) + ", mu " +
                         shape_str(post.mu.shape()) + ", logvar " +
                         shape_str(post.logvar.shape()));
  }
  Graph& g = post.mu.graph();
  Var noise = g.constant(eps);
  return add(post.mu, mul(exp(scale(post.logvar, 0.5)), noise));
}

/// Both observation models end in a sigmoid; data lives in [0, 1].
inline Reconstruction decode(const BoundParams& p, Var z) {
  require_columns(z, p.arch.latent_dim, "decode");
  Var h = relu(add_row(matmul(z, p.dec_w1()), p.dec_b1()));
  return {sigmoid(add_row(matmul(h, p.dec_w_out()), p.dec_b_out()))};
}

/// Posterior mean of q(z|x) for every row of `x`, no gradient tracking.
inline Tensor encode_mean(const VaeParams& params, const Tensor& x) {
  Graph g;
  auto b = bind(g, params, true);
  return encode(b, g.constant(x)).mu.value();
}

/// Decoder output for latent codes `z`, no gradient tracking.
inline Tensor decode_values(const VaeParams& params, const Tensor& z) {
  Graph g;
  auto b = bind(g, params, true);
  return decode(b, g.constant(z)).out.value();
}

/// Reconstruction through the posterior mean (eps = 0).
inline Tensor reconstruct_mean(const VaeParams& params, const Tensor& x) {
  Graph g;
  auto b = bind(g, params, true);
  return decode(b, encode(b, g.constant(x)).mu).out.value();
}

}  // namespace rvae
