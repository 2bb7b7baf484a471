#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <mutex>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "rvae/config.hpp"
#include "rvae/data.hpp"
#include "rvae/errors.hpp"
#include "rvae/model.hpp"
#include "rvae/optim.hpp"

namespace rvae {

enum class ErrorMode { Mse, Abs };

/// Posterior-mean reconstructions of every record, in chunks.
inline Tensor reconstruct_dataset(const VaeParams& params, const Dataset& ds,
                                  std::size_t chunk = 512) {
  if (ds.dim != params.arch.input_dim) {
    throw ArchMismatchError("model expects D=" + std::to_string(params.arch.input_dim) +
                            ", dataset has D=" + std::to_string(ds.dim));
  }
  std::vector<double> out;
  out.reserve(ds.images.size());
  std::vector<std::size_t> idx;
  for (std::size_t begin = 0; begin < ds.rows; begin += chunk) {
    idx.resize(std::min(chunk, ds.rows - begin));
    std::iota(idx.begin(), idx.end(), begin);
    const Tensor r = reconstruct_mean(params, ds.gather(idx));
    out.insert(out.end(), r.data().begin(), r.data().end());
  }
  return Tensor({ds.rows, ds.dim}, std::move(out));
}

/// Per-record mean over pixels of squared or absolute error.
inline std::vector<double> pixel_errors(const Dataset& ds, const Tensor& recon, ErrorMode mode) {
  if (recon.rank() != 2 || recon.dim(0) != ds.rows || recon.dim(1) != ds.dim) {
    throw DimensionError("reconstruction " + shape_str(recon.shape()) + " vs dataset [" +
                         std::to_string(ds.rows) + "x" + std::to_string(ds.dim) + "]");
  }
  std::vector<double> errors(ds.rows, 0.0);
  for (std::size_t i = 0; i < ds.rows; ++i) {
    auto x = ds.row(i);
    double acc = 0.0;
    for (std::size_t d = 0; d < ds.dim; ++d) {
      const double e = recon.at(i, d) - x[d];
      acc += mode == ErrorMode::Mse ? e * e : std::abs(e);
    }
    errors[i] = acc / static_cast<double>(ds.dim);
  }
  return errors;
}

inline std::vector<double> recon_error(const VaeParams& params, const Dataset& ds, ErrorMode mode) {
  return pixel_errors(ds, reconstruct_dataset(params, ds), mode);
}

/// Mean error over flagged records divided by mean error over the rest.
inline double ratio_metric(std::span<const double> errors, std::span<const std::uint8_t> flags) {
  if (errors.size() != flags.size()) throw DimensionError("ratio_metric: size mismatch");
  double out_sum = 0.0, in_sum = 0.0;
  std::size_t out_n = 0, in_n = 0;
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (flags[i]) {
      out_sum += errors[i];
      ++out_n;
    } else {
      in_sum += errors[i];
      ++in_n;
    }
  }
  if (out_n == 0 || in_n == 0) {
    throw DataError("ratio_metric needs at least one outlier and one normal record");
  }
  return (out_sum / static_cast<double>(out_n)) / (in_sum / static_cast<double>(in_n));
}

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;
};

struct RocCurve {
  std::vector<RocPoint> points;  // from (0,0) to (1,1)
  double auc = 0.0;

  /// CSV: threshold,fpr,tpr
  std::string to_csv() const {
    std::ostringstream os;
    os << "threshold,fpr,tpr\n";
    for (const auto& p : points) {
      os << format_double(p.threshold) << ',' << format_double(p.fpr) << ','
         << format_double(p.tpr) << '\n';
    }
    return os.str();
  }
};

/// ROC of the rule "flag if score >= threshold" over every distinct score,
/// with tied scores entering together; AUC by the trapezoidal rule. The
/// first point has threshold +inf.
inline RocCurve roc_auc(std::span<const double> scores, std::span<const std::uint8_t> flags) {
  if (scores.size() != flags.size()) throw DimensionError("roc_auc: size mismatch");
  const auto pos = static_cast<std::size_t>(std::count_if(flags.begin(), flags.end(),
                                                          [](auto f) { return f != 0; }));
  const std::size_t neg = flags.size() - pos;
  if (pos == 0 || neg == 0) throw DataError("roc_auc needs both positive and negative records");
  for (double s : scores) {
    if (std::isnan(s)) throw NonFiniteError("roc_auc", "score is NaN");
  }

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  RocCurve roc;
  roc.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  std::size_t tp = 0, fp = 0;
  for (std::size_t k = 0; k < order.size();) {
    const double t = scores[order[k]];
    while (k < order.size() && scores[order[k]] == t) {
      flags[order[k]] ? ++tp : ++fp;
      ++k;
    }
    roc.points.push_back({static_cast<double>(fp) / static_cast<double>(neg),
                          static_cast<double>(tp) / static_cast<double>(pos), t});
  }
  for (std::size_t i = 1; i < roc.points.size(); ++i) {
    const auto& a = roc.points[i - 1];
    const auto& b = roc.points[i];
    roc.auc += (b.fpr - a.fpr) * (a.tpr + b.tpr) / 2.0;
  }
  return roc;
}

struct EvalReport {
  std::vector<double> per_record_error;  // mse, detection score
  std::vector<double> per_record_abs_error;
  double ratio_metric = std::numeric_limits<double>::quiet_NaN();
  RocCurve roc;
  double auc = std::numeric_limits<double>::quiet_NaN();
  Config run_meta;

  /// CSV: index,label,is_outlier,mse,abs
  std::string errors_csv(const Dataset& ds) const {
    std::ostringstream os;
    os << "index,label,is_outlier,mse,abs\n";
    for (std::size_t i = 0; i < per_record_error.size(); ++i) {
      os << i << ',' << ds.labels[i] << ',' << int(ds.is_outlier[i]) << ','
         << format_double(per_record_error[i]) << ',' << format_double(per_record_abs_error[i])
         << '\n';
    }
    return os.str();
  }
};

/// Reconstruction errors for every record; ratio metric (absolute error)
/// and ROC (squared error as the outlier score) when both groups exist.
inline EvalReport evaluate(const VaeParams& params, const Dataset& ds) {
  const Tensor recon = reconstruct_dataset(params, ds);
  EvalReport r;
  r.per_record_error = pixel_errors(ds, recon, ErrorMode::Mse);
  r.per_record_abs_error = pixel_errors(ds, recon, ErrorMode::Abs);
  const auto outliers = ds.outlier_count();
  if (outliers > 0 && outliers < ds.rows) {
    r.ratio_metric = ratio_metric(r.per_record_abs_error, ds.is_outlier);
    r.roc = roc_auc(r.per_record_error, ds.is_outlier);
    r.auc = r.roc.auc;
  }
  r.run_meta.set("records", std::to_string(ds.rows));
  r.run_meta.set("outliers", std::to_string(outliers));
  r.run_meta.set("arch", describe(params.arch));
  return r;
}

// ---------------------------------------------------------------------------
// Latent export and image grids

/// CSV: mu_1..mu_L,label,is_outlier, one row per record.
inline std::string export_latent(const VaeParams& params, const Dataset& ds) {
  if (ds.dim != params.arch.input_dim) {
    throw ArchMismatchError("model expects D=" + std::to_string(params.arch.input_dim) +
                            ", dataset has D=" + std::to_string(ds.dim));
  }
  const std::size_t l = params.arch.latent_dim;
  std::ostringstream os;
  for (std::size_t j = 0; j < l; ++j) os << "mu_" << (j + 1) << ',';
  os << "label,is_outlier\n";
  std::vector<std::size_t> idx;
  for (std::size_t begin = 0; begin < ds.rows; begin += 512) {
    idx.resize(std::min<std::size_t>(512, ds.rows - begin));
    std::iota(idx.begin(), idx.end(), begin);
    const Tensor mu = encode_mean(params, ds.gather(idx));
    for (std::size_t r = 0; r < idx.size(); ++r) {
      for (std::size_t j = 0; j < l; ++j) os << format_double(mu.at(r, j)) << ',';
      os << ds.labels[idx[r]] << ',' << int(ds.is_outlier[idx[r]]) << '\n';
    }
  }
  return os.str();
}

/// Value of the 1-pixel separators between tiles.
inline constexpr std::uint8_t kGridSeparator = 128;

/// Binary PGM (P5, maxval 255) tiling `images` [k x D] row-major, `cols`
/// tiles per row, 1-pixel separators. Pixels are round(v * 255), clamped.
inline std::string render_image_grid(const Tensor& images, std::size_t cols) {
  if (images.rank() != 2 || images.dim(0) == 0) {
    throw DimensionError("image grid needs a non-empty [k x D] tensor");
  }
  if (cols == 0) throw std::invalid_argument("image grid needs cols >= 1");
  const std::size_t k = images.dim(0), d = images.dim(1);
  const std::size_t side = image_side(d);
  cols = std::min(cols, k);
  const std::size_t grid_rows = (k + cols - 1) / cols;
  const std::size_t width = cols * side + (cols - 1);
  const std::size_t height = grid_rows * side + (grid_rows - 1);
  std::vector<std::uint8_t> px(width * height, kGridSeparator);
  for (std::size_t t = 0; t < k; ++t) {
    const std::size_t ox = (t % cols) * (side + 1), oy = (t / cols) * (side + 1);
    for (std::size_t y = 0; y < side; ++y) {
      for (std::size_t x = 0; x < side; ++x) {
        const double v = std::clamp(images.at(t, y * side + x), 0.0, 1.0);
        px[(oy + y) * width + ox + x] = static_cast<std::uint8_t>(std::lround(v * 255.0));
      }
    }
  }
  std::string out = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(px.data()), px.size());
  return out;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << content;
}

inline void emit_image_grid(const Tensor& images, std::size_t cols,
                            const std::filesystem::path& path) {
  write_text_file(path, render_image_grid(images, cols));
}

// ---------------------------------------------------------------------------
// Beta x contamination sweep

struct SweepSpec {
  TrainConfig base;                  // loss.obs_model and arch are taken from here
  DatasetManifest train_data;        // fraction overridden per grid row
  DatasetManifest test_data;         // evaluated as given
  std::vector<double> betas;
  std::vector<double> fractions;
  std::size_t workers = 1;
  /// Called from worker threads after each successful cell; may be empty.
  std::function<void(double beta, double fraction, const VaeParams&)> on_cell;
};

struct SweepGrid {
  std::vector<double> betas;
  std::vector<double> fractions;
  std::vector<std::vector<double>> ratio;  // [fraction][beta]
  std::vector<std::vector<double>> auc;    // [fraction][beta]
  std::vector<std::string> failures;

  /// CSV: beta,fraction,ratio,auc; rows ordered by fraction, then beta.
  std::string to_csv() const {
    std::ostringstream os;
    os << "beta,fraction,ratio,auc\n";
    for (std::size_t f = 0; f < fractions.size(); ++f) {
      for (std::size_t b = 0; b < betas.size(); ++b) {
        os << format_double(betas[b]) << ',' << format_double(fractions[f]) << ','
           << format_double(ratio[f][b]) << ',' << format_double(auc[f][b]) << '\n';
      }
    }
    return os.str();
  }

  /// Index of the beta with the largest ratio metric in row `f`.
  std::size_t best_beta_index(std::size_t f) const {
    std::size_t best = 0;
    for (std::size_t b = 1; b < betas.size(); ++b) {
      if (ratio[f][b] > ratio[f][best] || std::isnan(ratio[f][best])) best = b;
    }
    return best;
  }
};

/// One beta-ELBO model per (beta, fraction) cell, each trained from the same
/// seed on the training manifest contaminated at that fraction, evaluated on
/// the test manifest. Failed cells hold NaN and are listed in `failures`.
inline SweepGrid sweep(const SweepSpec& spec) {
  if (spec.betas.empty() || spec.fractions.empty()) {
    throw ConfigError("sweep needs at least one beta and one fraction");
  }
  SweepGrid grid;
  grid.betas = spec.betas;
  grid.fractions = spec.fractions;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  grid.ratio.assign(spec.fractions.size(), std::vector<double>(spec.betas.size(), nan));
  grid.auc = grid.ratio;

  const Dataset test = build_dataset(spec.test_data);
  std::vector<Dataset> train_sets;
  for (double f : spec.fractions) {
    DatasetManifest m = spec.train_data;
    m.fraction = f;
    if (m.contamination == "none") m.contamination = "gaussian_noise";
    train_sets.push_back(build_dataset(m));
  }

  const std::size_t cells = spec.betas.size() * spec.fractions.size();
  std::atomic<std::size_t> next{0};
  std::mutex failure_mutex;
  std::vector<std::string> failures(cells);
  auto worker = [&] {
    for (std::size_t c = next++; c < cells; c = next++) {
      const std::size_t f = c / spec.betas.size(), b = c % spec.betas.size();
      try {
        TrainConfig cfg = spec.base;
        cfg.loss = LossSpec::robust(cfg.arch.obs_model, spec.betas[b], cfg.loss.sigma);
        auto trained = train(cfg, train_sets[f]);
        const auto report = evaluate(trained.params, test);
        grid.ratio[f][b] = report.ratio_metric;
        grid.auc[f][b] = report.auc;
        if (spec.on_cell) spec.on_cell(spec.betas[b], spec.fractions[f], trained.params);
      } catch (const std::exception& e) {
        std::lock_guard lock(failure_mutex);
        failures[c] = "beta=" + format_double(spec.betas[b]) +
                      " fraction=" + format_double(spec.fractions[f]) + ": " + e.what();
      }
    }
  };
  const std::size_t n_workers = std::max<std::size_t>(1, std::min(spec.workers, cells));
  std::vector<std::thread> pool;
  for (std::size_t i = 1; i < n_workers; ++i) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (auto& f : failures) {
    if (!f.empty()) grid.failures.push_back(std::move(f));
  }
  return grid;
}

}  // namespace rvae
