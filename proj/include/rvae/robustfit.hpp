#pragma once

// Fitting one univariate Gaussian to contaminated samples, by maximum
// likelihood and by minimizing the empirical beta-cross-entropy
//
//   J(mu, sigma) = -(beta+1)/(beta n) sum_i (N(x_i; mu, sigma)^beta - 1)
//                  + (2 pi sigma^2)^(-beta/2) (beta+1)^(-1/2)
//
// Each sample contributes at most (beta+1)/(beta n) to J, so a single far
// outlier cannot drag the fit the way it drags the sample mean.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "rvae/config.hpp"
#include "rvae/errors.hpp"

namespace rvae {

struct MixtureSamples {
  std::vector<double> values;
  std::vector<std::uint8_t> from_second;  // 1 for draws of the second component
};

/// n draws from w N(m1, s1^2) + (1-w) N(m2, s2^2).
inline MixtureSamples sample_mixture(std::size_t n, double w, double m1, double s1, double m2,
                                     double s2, std::uint64_t seed) {
  if (!(w > 0.0 && w <= 1.0)) throw ConfigError("mixture weight must lie in (0, 1]");
  if (!(s1 > 0.0 && s2 > 0.0)) throw ConfigError("mixture standard deviations must be > 0");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> first(m1, s1), second(m2, s2);
  MixtureSamples out;
  out.values.reserve(n);
  out.from_second.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const bool other = u(rng) >= w;
    out.values.push_back(other ? second(rng) : first(rng));
    out.from_second.push_back(other ? 1 : 0);
  }
  return out;
}

struct FitResult {
  double mu = 0.0;
  double sigma = 1.0;
  std::vector<double> objective_trace;
  std::string method;  // "mle" or "beta"
  double beta = 0.0;
};

inline constexpr double kMinSigma = 1e-6;

/// Sample mean and population standard deviation.
inline FitResult fit_gaussian_mle(std::span<const double> x) {
  if (x.size() < 2) throw std::invalid_argument("fit_gaussian_mle needs at least two samples");
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(x.size());
  FitResult r;
  r.method = "mle";
  r.mu = mean;
  r.sigma = std::sqrt(var);
  if (r.sigma < kMinSigma) {
    std::clog << "warning: degenerate samples, sigma floored at " << kMinSigma << '\n';
    r.sigma = kMinSigma;
  }
  return r;
}

struct BetaObjective {
  double value = 0.0;
  double d_mu = 0.0;
  double d_log_sigma = 0.0;
};

/// J and its gradient in (mu, log sigma).
inline BetaObjective beta_objective(std::span<const double> x, double beta, double mu,
                                    double log_sigma) {
  const double sigma = std::exp(log_sigma);
  const double var = sigma * sigma;
  // N(x; mu, sigma)^beta = c * exp(-beta r^2 / 2), r = (x - mu) / sigma
  const double c = std::pow(2.0 * std::numbers::pi * var, -beta / 2.0);
  const double n = static_cast<double>(x.size());
  double s = 0.0, s_mu = 0.0, s_ls = 0.0;
  for (double v : x) {
    const double r = (v - mu) / sigma;
    const double p = c * std::exp(-0.5 * beta * r * r);
    s += p - 1.0;
    s_mu += p * beta * (v - mu) / var;
    s_ls += p * beta * (r * r - 1.0);
  }
  const double k = (beta + 1.0) / (beta * n);
  const double integral = c / std::sqrt(beta + 1.0);
  return {-k * s + integral, -k * s_mu, -k * s_ls - beta * integral};
}

struct BetaFitOptions {
  std::size_t steps = 2000;
  double lr = 0.5;
  /// Starting point; the MLE fit when empty.
  std::optional<std::pair<double, double>> init;  // (mu, sigma)
};

/// Gradient descent on (mu, log sigma). A step that would raise the objective
/// is retried with half the learning rate, so the trace never increases.
inline FitResult fit_gaussian_beta(std::span<const double> x, double beta,
                                   const BetaFitOptions& opt = {}) {
  if (!(beta > 0.0)) throw std::invalid_argument("beta must be > 0");
  if (x.size() < 2) throw std::invalid_argument("fit_gaussian_beta needs at least two samples");
  double mu = 0.0, log_sigma = 0.0;
  if (opt.init) {
    if (!(opt.init->second > 0.0)) throw std::invalid_argument("initial sigma must be > 0");
    mu = opt.init->first;
    log_sigma = std::log(opt.init->second);
  } else {
    const auto mle = fit_gaussian_mle(x);
    mu = mle.mu;
    log_sigma = std::log(mle.sigma);
  }
  FitResult r;
  r.method = "beta";
  r.beta = beta;
  auto cur = beta_objective(x, beta, mu, log_sigma);
  r.objective_trace.push_back(cur.value);
  double lr = opt.lr;
  for (std::size_t step = 0; step < opt.steps; ++step) {
    if (!std::isfinite(cur.value)) {
      throw NonFiniteError("fit_gaussian_beta", "objective diverged at step " +
                                                    std::to_string(step));
    }
    if (std::hypot(cur.d_mu, cur.d_log_sigma) < 1e-12) break;
    bool moved = false;
    for (int tries = 0; tries < 40; ++tries) {
      const double nmu = mu - lr * cur.d_mu;
      const double nls = log_sigma - lr * cur.d_log_sigma;
      const auto next = beta_objective(x, beta, nmu, nls);
      if (std::isfinite(next.value) && next.value <= cur.value) {
        mu = nmu;
        log_sigma = nls;
        cur = next;
        moved = true;
        break;
      }
      lr *= 0.5;
    }
    if (!moved) break;
    r.objective_trace.push_back(cur.value);
  }
  r.mu = mu;
  r.sigma = std::exp(log_sigma);
  return r;
}

inline double gaussian_pdf(double x, double mu, double sigma) {
  const double z = (x - mu) / sigma;
  return std::exp(-0.5 * z * z) / (sigma * std::sqrt(2.0 * std::numbers::pi));
}

/// CSV: method,mu,sigma,beta
inline std::string fit_summary_csv(const std::vector<FitResult>& fits) {
  std::ostringstream os;
  os << "method,mu,sigma,beta\n";
  for (const auto& f : fits) {
    os << f.method << ',' << format_double(f.mu) << ',' << format_double(f.sigma) << ','
       << format_double(f.beta) << '\n';
  }
  return os.str();
}

/// CSV: x,empirical,<method>... with the normalized histogram of `x` over
/// `bins` equal-width bins and each fitted density at the bin centers.
inline std::string density_csv(std::span<const double> x, const std::vector<FitResult>& fits,
                               std::size_t bins = 60) {
  if (x.empty() || bins == 0) throw std::invalid_argument("density_csv needs samples and bins");
  const auto [lo_it, hi_it] = std::minmax_element(x.begin(), x.end());
  const double lo = *lo_it, hi = *hi_it > *lo_it ? *hi_it : *lo_it + 1.0;
  const double width = (hi - lo) / static_cast<double>(bins);
  std::vector<double> counts(bins, 0.0);
  for (double v : x) {
    auto b = static_cast<std::size_t>((v - lo) / width);
    counts[std::min(b, bins - 1)] += 1.0;
  }
  std::ostringstream os;
  os << "x,empirical";
  for (const auto& f : fits) os << ',' << f.method;
  os << '\n';
  for (std::size_t b = 0; b < bins; ++b) {
    const double center = lo + (static_cast<double>(b) + 0.5) * width;
    os << format_double(center) << ','
       << format_double(counts[b] / (static_cast<double>(x.size()) * width));
    for (const auto& f : fits) os << ',' << format_double(gaussian_pdf(center, f.mu, f.sigma));
    os << '\n';
  }
  return os.str();
}

}  // namespace rvae
