#pragma once

// Variational objectives. Every function returns quantities to be minimized,
// averaged over the rows of the minibatch:
//
//   total = recon_term + kl_term = -ELBO   (or -beta-ELBO)
//
// The beta terms replace the per-record log-likelihood with the negative
// beta-cross-entropy between the point mass at x and p(x|z):
//
//   H_beta = -(beta+1)/beta * (p(x|z)^beta - 1) + integral p(X|z)^(beta+1) dX
//
// For a factorized Bernoulli decoder both pieces are products over pixels,
// evaluated here as exp(sum of logs). For a Gaussian decoder with fixed
// sigma the integral does not depend on the decoder output, so the
// beta-ELBO drops it; beta_cross_entropy_gaussian() keeps it.

#include <cmath>
#include <numbers>
#include <string>

#include "rvae/autodiff.hpp"
#include "rvae/errors.hpp"
#include "rvae/model.hpp"

namespace rvae {

/// Bernoulli probabilities are clamped to this margin inside (0, 1)
/// before they are raised to powers or passed to log.
inline constexpr double kProbMargin = 1e-7;

enum class Divergence { Standard, Beta };

inline const char* to_string(Divergence d) {
  return d == Divergence::Standard ? "standard" : "beta";
}

inline Divergence parse_divergence(const std::string& s) {
  if (s == "standard" || s == "kl") return Divergence::Standard;
  if (s == "beta") return Divergence::Beta;
  throw ConfigError("unknown divergence '" + s + "' (expected standard|beta)");
}

struct LossSpec {
  ObsModel obs_model = ObsModel::Bernoulli;
  Divergence divergence = Divergence::Standard;
  double beta = 0.0;   // used when divergence == Beta
  double sigma = 1.0;  // Gaussian observation noise

  static LossSpec standard(ObsModel m, double sigma = 1.0) {
    return {m, Divergence::Standard, 0.0, sigma};
  }
  static LossSpec robust(ObsModel m, double beta, double sigma = 1.0) {
    return {m, Divergence::Beta, beta, sigma};
  }

  void validate() const {
    if (divergence == Divergence::Beta && !(beta > 0.0)) {
      throw ConfigError("beta must be > 0 for the beta divergence");
    }
    if (!(sigma > 0.0)) throw ConfigError("sigma must be > 0");
  }

  friend bool operator==(const LossSpec&, const LossSpec&) = default;
};

/// Scalar graph nodes; total = recon_term + kl_term.
struct LossValue {
  Var total;
  Var recon_term;
  Var kl_term;
};

namespace detail {

inline std::size_t batch_rows(Var x) { return x.value().dim(0); }

inline Var batch_mean(Var per_record) {
  const auto n = per_record.value().size();
  return scale(sum(per_record), 1.0 / static_cast<double>(n));
}

inline void require_matching(Var x, Var out, const char* what) {
  if (x.value().rank() != 2 || x.shape() != out.shape()) {
    throw DimensionError(std::string(what) + ": data " + shape_str(x.shape()) +
                         " vs reconstruction " + shape_str(out.shape()));
  }
}

inline void require_binary(Var x, const char* what) {
  for (double v : x.value().data()) {
    if (v != 0.0 && v != 1.0) {
      throw DataError(std::string(what) + ": data must be binary {0,1}");
    }
  }
}

inline Var one_minus(Var p) { return sub(constant_like(p, 1.0), p); }

inline Var clamp_prob(Var p) { return clamp(p, kProbMargin, 1.0 - kProbMargin); }

inline Var add_constant(Var v, double c) { return add(v, constant_like(v, c)); }

inline void require_positive(double v, const char* name) {
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw std::invalid_argument(std::string(name) + " must be positive and finite");
  }
}

}  // namespace detail

/// Mean over the batch of 1/2 * sum_l (mu^2 + exp(logvar) - 1 - logvar).
inline Var kl_to_std_normal(const LatentPosterior& post) {
  if (post.mu.shape() != post.logvar.shape() || post.mu.value().rank() != 2) {
    throw DimensionError("kl_to_std_normal: mu " + shape_str(post.mu.shape()) + " vs logvar " +
                         shape_str(post.logvar.shape()));
  }
  if (!post.mu.value().all_finite() || !post.logvar.value().all_finite()) {
    throw NonFiniteError("kl", "posterior parameters are not finite");
  }
  Var terms = sub(add(mul(post.mu, post.mu), exp(post.logvar)),
                  detail::add_constant(post.logvar, 1.0));
  const double rows = static_cast<double>(post.mu.value().dim(0));
  return scale(sum(terms), 0.5 / rows);
}

/// Negative Bernoulli log-likelihood, batch mean.
inline Var bernoulli_nll(Var x, Var p) {
  detail::require_matching(x, p, "bernoulli_nll");
  Var pc = detail::clamp_prob(p);
  Var ll = add(mul(x, log(pc)), mul(detail::one_minus(x), log(detail::one_minus(pc))));
  return scale(sum(ll), -1.0 / static_cast<double>(detail::batch_rows(x)));
}

/// Negative Gaussian log-likelihood with fixed sigma, batch mean.
inline Var gaussian_nll(Var x, Var xhat, double sigma) {
  detail::require_matching(x, xhat, "gaussian_nll");
  detail::require_positive(sigma, "sigma");
  const double rows = static_cast<double>(detail::batch_rows(x));
  const double d = static_cast<double>(x.value().dim(1));
  Var diff = sub(xhat, x);
  Var sq = scale(sum(mul(diff, diff)), 1.0 / (2.0 * sigma * sigma * rows));
  return detail::add_constant(sq, 0.5 * d * std::log(2.0 * std::numbers::pi * sigma * sigma));
}

/// Beta-cross-entropy between the point mass at each row of x and a
/// factorized Bernoulli(p); batch mean.
///
///   (beta+1)/beta * (1 - prod_d q_d^beta) + prod_d (p_d^(beta+1) + (1-p_d)^(beta+1))
///
/// with q_d = p_d where x_d = 1 and 1 - p_d where x_d = 0.
inline Var beta_cross_entropy_bernoulli(Var x, Var p, double beta) {
  detail::require_matching(x, p, "beta_cross_entropy_bernoulli");
  detail::require_binary(x, "beta_cross_entropy_bernoulli");
  detail::require_positive(beta, "beta");
  Var pc = detail::clamp_prob(p);
  Var qc = detail::one_minus(pc);
  Var q = add(mul(x, pc), mul(detail::one_minus(x), qc));
  Var likelihood_pow = exp(scale(sum_axis(log(q), 1), beta));
  Var normalizer =
      exp(sum_axis(log(add(pow_scalar(pc, beta + 1.0), pow_scalar(qc, beta + 1.0))), 1));
  Var per_record = add(scale(detail::one_minus(likelihood_pow), (beta + 1.0) / beta), normalizer);
  return detail::batch_mean(per_record);
}

/// Integral of N(x; m, sigma^2 I_D)^(beta+1) over R^D.
inline double gaussian_power_integral(double sigma, double beta, std::size_t dims) {
  const double one_dim = std::pow(2.0 * std::numbers::pi * sigma * sigma, -beta / 2.0) /
                         std::sqrt(beta + 1.0);
  return std::pow(one_dim, static_cast<double>(dims));
}

namespace detail {

// (beta+1)/beta * (1 - N(x; xhat, sigma^2 I)^beta) per record, with the
// density power formed as exp(g) in log space.
inline Var gaussian_beta_likelihood_term(Var x, Var xhat, double beta, double sigma) {
  require_positive(beta, "beta");
  require_positive(sigma, "sigma");
  const double d = static_cast<double>(x.value().dim(1));
  Var diff = sub(xhat, x);
  Var sq_err = sum_axis(mul(diff, diff), 1);
  const double log_norm = -0.5 * beta * d * std::log(2.0 * std::numbers::pi * sigma * sigma);
  Var g = add_constant(scale(sq_err, -beta / (2.0 * sigma * sigma)), log_norm);
  return scale(one_minus(exp(g)), (beta + 1.0) / beta);
}

}  // namespace detail

/// Beta-cross-entropy against N(xhat, sigma^2 I), including the
/// power-integral term; batch mean.
inline Var beta_cross_entropy_gaussian(Var x, Var xhat, double beta, double sigma) {
  detail::require_matching(x, xhat, "beta_cross_entropy_gaussian");
  Var per_record = detail::gaussian_beta_likelihood_term(x, xhat, beta, sigma);
  return detail::add_constant(detail::batch_mean(per_record),
                              gaussian_power_integral(sigma, beta, x.value().dim(1)));
}

inline LossValue elbo_standard(Var x, const Reconstruction& recon, const LatentPosterior& post,
                               const LossSpec& spec) {
  spec.validate();
  if (spec.divergence != Divergence::Standard) {
    throw ConfigError("elbo_standard called with a beta loss spec");
  }
  Var rec = spec.obs_model == ObsModel::Bernoulli ? bernoulli_nll(x, recon.out)
                                                  : gaussian_nll(x, recon.out, spec.sigma);
  Var kl = kl_to_std_normal(post);
  return {add(rec, kl), rec, kl};
}

inline LossValue beta_elbo_bernoulli(Var x, const Reconstruction& recon,
                                     const LatentPosterior& post, double beta) {
  Var rec = beta_cross_entropy_bernoulli(x, recon.out, beta);
  Var kl = kl_to_std_normal(post);
  return {add(rec, kl), rec, kl};
}

inline LossValue beta_elbo_gaussian(Var x, const Reconstruction& recon,
                                    const LatentPosterior& post, double beta,
                                    double sigma = 1.0) {
  detail::require_matching(x, recon.out, "beta_elbo_gaussian");
  if (!recon.out.value().all_finite()) {
    throw NonFiniteError("beta_elbo_gaussian", "reconstruction is not finite");
  }
  Var rec = detail::batch_mean(detail::gaussian_beta_likelihood_term(x, recon.out, beta, sigma));
  Var kl = kl_to_std_normal(post);
  return {add(rec, kl), rec, kl};
}

/// Dispatches on spec.
inline LossValue compute_loss(const LossSpec& spec, Var x, const Reconstruction& recon,
                              const LatentPosterior& post) {
  spec.validate();
  if (spec.divergence == Divergence::Standard) return elbo_standard(x, recon, post, spec);
  if (spec.obs_model == ObsModel::Bernoulli) return beta_elbo_bernoulli(x, recon, post, spec.beta);
  return beta_elbo_gaussian(x, recon, post, spec.beta, spec.sigma);
}

}  // namespace rvae
