#pragma once

// Central finite differences, independent of the reverse-mode code under
// test: the callback evaluates the scalar function on plain tensors.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "rvae/tensor.hpp"

namespace rvae::testing {

using ScalarFn = std::function<double(const std::vector<Tensor>&)>;

inline std::vector<Tensor> finite_difference_grad(const ScalarFn& f, std::vector<Tensor> inputs,
                                                  double h = 1e-5) {
  std::vector<Tensor> grads;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    Tensor g = Tensor::zeros(inputs[t].shape());
    for (std::size_t i = 0; i < inputs[t].size(); ++i) {
      const double x0 = inputs[t][i];
      inputs[t][i] = x0 + h;
      const double up = f(inputs);
      inputs[t][i] = x0 - h;
      const double down = f(inputs);
      inputs[t][i] = x0;
      g[i] = (up - down) / (2.0 * h);
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

/// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor)
inline double max_relative_error(const Tensor& a, const Tensor& b, double floor = 1e-8) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
  }
  return worst;
}

/// Relative error of whole gradient vectors: |a - b| / max(|b|, floor).
inline double norm_relative_error(const std::vector<Tensor>& a, const std::vector<Tensor>& b,
                                  double floor = 1e-8) {
  double diff = 0.0, ref = 0.0;
  for (std::size_t t = 0; t < a.size(); ++t) {
    for (std::size_t i = 0; i < a[t].size(); ++i) {
      diff += (a[t][i] - b[t][i]) * (a[t][i] - b[t][i]);
      ref += b[t][i] * b[t][i];
    }
  }
  return std::sqrt(diff) / std::max(std::sqrt(ref), floor);
}

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (double& v : t.data()) v = u(rng);
  return t;
}

}  // namespace rvae::testing
