#pragma once

// Beta selection by probing trained models with fake outliers.
//
// For each candidate model we reconstruct a fixed set of Gaussian-noise
// images and draw the same number of decoder samples from the prior. A beta
// that projects noise onto the learned manifold makes the two sets look
// alike while the samples still vary. Grids of both sets are the primary
// output; proxy_score and variability summarize them numerically but are a
// heuristic aid, not a selection rule.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "rvae/data.hpp"
#include "rvae/errors.hpp"
#include "rvae/eval.hpp"
#include "rvae/model.hpp"

namespace rvae {

struct ProbeOptions {
  std::size_t n_probe = 8;
  std::uint64_t seed = 0;
  double noise_mean = 0.5;
  double noise_std = 0.25;
};

struct ProbeResult {
  double beta = 0.0;
  Tensor noise;            // [n x D] probe inputs
  Tensor reconstructions;  // [n x D]
  Tensor samples;          // [n x D] decoder outputs for z ~ N(0, I)
  double proxy_score = 0.0;  // mean distance from each reconstruction to its nearest sample
  double variability = 0.0;  // mean pairwise distance among samples

  /// Rows: noise inputs, reconstructions, decoder samples.
  Tensor grid_images() const {
    std::vector<double> all;
    for (const Tensor* t : {&noise, &reconstructions, &samples}) {
      all.insert(all.end(), t->data().begin(), t->data().end());
    }
    return Tensor({3 * noise.dim(0), noise.dim(1)}, std::move(all));
  }
};

/// Root-mean-square pixel difference between two rows.
inline double rms_distance(const Tensor& a, std::size_t i, const Tensor& b, std::size_t j) {
  const std::size_t d = a.dim(1);
  double acc = 0.0;
  for (std::size_t k = 0; k < d; ++k) {
    const double e = a.at(i, k) - b.at(j, k);
    acc += e * e;
  }
  return std::sqrt(acc / static_cast<double>(d));
}

inline double mean_nearest_distance(const Tensor& from, const Tensor& to) {
  double total = 0.0;
  for (std::size_t i = 0; i < from.dim(0); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < to.dim(0); ++j) best = std::min(best, rms_distance(from, i, to, j));
    total += best;
  }
  return total / static_cast<double>(from.dim(0));
}

inline double mean_pairwise_distance(const Tensor& set) {
  const std::size_t n = set.dim(0);
  if (n < 2) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) total += rms_distance(set, i, set, j);
  }
  return total / static_cast<double>(n * (n - 1) / 2);
}

/// Same noise images and latent draws for every model, so results differ only
/// through the models. Bernoulli models see binarized noise.
inline std::vector<ProbeResult> probe(const std::vector<std::pair<double, VaeParams>>& models,
                                      const ProbeOptions& opt) {
  if (models.empty()) throw ConfigError("probe needs at least one model");
  if (opt.n_probe == 0) throw ConfigError("n_probe must be >= 1");
  const Arch& arch = models.front().second.arch;
  for (const auto& [beta, p] : models) {
    if (!(p.arch == arch)) {
      throw ArchMismatchError("probe models disagree on architecture: " + describe(arch) +
                              " vs " + describe(p.arch));
    }
  }
  const std::size_t d = arch.input_dim, l = arch.latent_dim, n = opt.n_probe;

  std::mt19937_64 noise_rng(opt.seed);
  Tensor noise = Tensor::zeros({n, d});
  fill_noise(noise.data(), noise_rng, opt.noise_mean, opt.noise_std);
  if (arch.obs_model == ObsModel::Bernoulli) {
    double peak = 0.0;
    for (double v : noise.data()) peak = std::max(peak, v);
    for (double& v : noise.data()) v = (peak > 0.0 && v >= 0.5 * peak) ? 1.0 : 0.0;
  }

  std::mt19937_64 latent_rng(opt.seed ^ 0x9e3779b97f4a7c15ull);
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor z = Tensor::zeros({n, l});
  for (double& v : z.data()) v = normal(latent_rng);

  std::vector<ProbeResult> out;
  for (const auto& [beta, params] : models) {
    ProbeResult r;
    r.beta = beta;
    r.noise = noise;
    r.reconstructions = reconstruct_mean(params, noise);
    r.samples = decode_values(params, z);
    r.proxy_score = mean_nearest_distance(r.reconstructions, r.samples);
    r.variability = mean_pairwise_distance(r.samples);
    out.push_back(std::move(r));
  }
  return out;
}

/// CSV: beta,proxy_score,variability
inline std::string probe_summary_csv(const std::vector<ProbeResult>& results) {
  std::ostringstream os;
  os << "beta,proxy_score,variability\n";
  for (const auto& r : results) {
    os << format_double(r.beta) << ',' << format_double(r.proxy_score) << ','
       << format_double(r.variability) << '\n';
  }
  return os.str();
}

inline std::filesystem::path probe_grid_path(const std::filesystem::path& dir, double beta) {
  return dir / ("probe_beta_" + format_double(beta) + ".pgm");
}

/// Writes probe_summary.csv and one probe_beta_<beta>.pgm per model.
inline void write_probe_outputs(const std::filesystem::path& dir,
                                const std::vector<ProbeResult>& results) {
  std::filesystem::create_directories(dir);
  write_text_file(dir / "probe_summary.csv", probe_summary_csv(results));
  for (const auto& r : results) {
    emit_image_grid(r.grid_images(), r.noise.dim(0), probe_grid_path(dir, r.beta));
  }
}

}  // namespace rvae
