#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "rvae/config.hpp"
#include "rvae/errors.hpp"
#include "rvae/tensor.hpp"

namespace rvae {

/// N flattened images with values in [0, 1], one label and one outlier flag
/// per record, plus a description of how the records were produced.
struct Dataset {
  std::size_t rows = 0;
  std::size_t dim = 0;
  std::vector<double> images;  // rows x dim, row-major
  std::vector<int> labels;
  std::vector<std::uint8_t> is_outlier;
  std::string source;
  std::vector<std::string> history;

  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(images).subspan(i * dim, dim);
  }
  std::span<double> row(std::size_t i) { return std::span<double>(images).subspan(i * dim, dim); }

  std::size_t outlier_count() const {
    return static_cast<std::size_t>(std::count(is_outlier.begin(), is_outlier.end(), 1));
  }

  /// Selected rows stacked into a [k x dim] tensor.
  Tensor gather(std::span<const std::size_t> idx) const {
    std::vector<double> out;
    out.reserve(idx.size() * dim);
    for (auto i : idx) {
      auto r = row(i);
      out.insert(out.end(), r.begin(), r.end());
    }
    return Tensor({idx.size(), dim}, std::move(out));
  }

  Tensor as_tensor() const { return Tensor({rows, dim}, images); }

  Dataset subset(std::span<const std::size_t> idx) const {
    Dataset out;
    out.rows = idx.size();
    out.dim = dim;
    out.source = source;
    out.history = history;
    out.images.reserve(idx.size() * dim);
    for (auto i : idx) {
      auto r = row(i);
      out.images.insert(out.images.end(), r.begin(), r.end());
      out.labels.push_back(labels[i]);
      out.is_outlier.push_back(is_outlier[i]);
    }
    return out;
  }

  bool is_binary() const {
    return std::all_of(images.begin(), images.end(), [](double v) { return v == 0.0 || v == 1.0; });
  }

  /// Throws DataError if field sizes disagree or values leave [0, 1].
  void validate() const {
    if (images.size() != rows * dim || labels.size() != rows || is_outlier.size() != rows) {
      throw DataError("dataset fields disagree on record count");
    }
    for (double v : images) {
      if (!(v >= 0.0 && v <= 1.0)) throw DataError("dataset value outside [0, 1]");
    }
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

// ---------------------------------------------------------------------------
// IDX container: big-endian magic (0x0000 0x08 rank), rank u32 dimension
// sizes, then unsigned bytes.

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

struct IdxArray {
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> bytes;

  friend bool operator==(const IdxArray&, const IdxArray&) = default;
};

inline IdxArray parse_idx(std::span<const std::uint8_t> buf, const std::string& origin = "idx") {
  auto be32 = [&](std::size_t off) {
    return (std::uint32_t{buf[off]} << 24) | (std::uint32_t{buf[off + 1]} << 16) |
           (std::uint32_t{buf[off + 2]} << 8) | std::uint32_t{buf[off + 3]};
  };
  if (buf.size() < 4) throw IdxTruncatedError(origin + ": file shorter than the IDX magic");
  const std::uint32_t magic = be32(0);
  if (magic != kIdxImagesMagic && magic != kIdxLabelsMagic) {
    char hex[16];
    std::snprintf(hex, sizeof(hex), "0x%08x", magic);
    throw IdxFormatError(origin + ": bad IDX magic " + hex +
                         " (expected 0x00000801 or 0x00000803)");
  }
  const std::size_t rank = magic & 0xffu;
  if (buf.size() < 4 + 4 * rank) throw IdxTruncatedError(origin + ": truncated IDX header");
  IdxArray out;
  std::size_t count = 1;
  for (std::size_t i = 0; i < rank; ++i) {
    const auto d = be32(4 + 4 * i);
    out.dims.push_back(d);
    if (d != 0 && count > std::numeric_limits<std::size_t>::max() / d) {
      throw IdxDimensionError(origin + ": IDX dimensions overflow");
    }
    count *= d;
  }
  const std::size_t header = 4 + 4 * rank;
  if (count > buf.size() - header) {
    throw IdxTruncatedError(origin + ": IDX payload has " + std::to_string(buf.size() - header) +
                            " bytes, header promises " + std::to_string(count));
  }
  out.bytes.assign(buf.begin() + static_cast<std::ptrdiff_t>(header),
                   buf.begin() + static_cast<std::ptrdiff_t>(header + count));
  return out;
}

inline IdxArray read_idx(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open IDX file '" + path.string() + "'");
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)),
                                std::istreambuf_iterator<char>());
  return parse_idx(buf, path.string());
}

inline std::vector<std::uint8_t> serialize_idx(const IdxArray& a) {
  if (a.dims.size() != 1 && a.dims.size() != 3) {
    throw IdxDimensionError("IDX writer supports rank 1 (labels) or rank 3 (images)");
  }
  std::size_t count = 1;
  for (auto d : a.dims) count *= d;
  if (count != a.bytes.size()) throw IdxDimensionError("IDX dims do not match payload size");
  std::vector<std::uint8_t> out;
  auto put32 = [&](std::uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
  };
  put32(a.dims.size() == 3 ? kIdxImagesMagic : kIdxLabelsMagic);
  for (auto d : a.dims) put32(d);
  out.insert(out.end(), a.bytes.begin(), a.bytes.end());
  return out;
}

inline void write_idx(const std::filesystem::path& path, const IdxArray& a) {
  const auto buf = serialize_idx(a);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write IDX file '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

/// Rank-3 IDX array as rows of [0, 1] pixels (byte / 255).
inline Dataset dataset_from_idx(const IdxArray& images, const IdxArray* labels = nullptr,
                                const IdxArray* outliers = nullptr) {
  if (images.dims.size() != 3) throw IdxFormatError("image IDX must have rank 3");
  Dataset ds;
  ds.rows = images.dims[0];
  ds.dim = std::size_t{images.dims[1]} * images.dims[2];
  ds.images.reserve(images.bytes.size());
  for (auto b : images.bytes) ds.images.push_back(b / 255.0);
  ds.labels.assign(ds.rows, 0);
  ds.is_outlier.assign(ds.rows, 0);
  if (labels) {
    if (labels->dims.size() != 1 || labels->dims[0] != ds.rows) {
      throw IdxDimensionError("label IDX count does not match image count");
    }
    for (std::size_t i = 0; i < ds.rows; ++i) {
      ds.labels[i] = labels->bytes[i] == 255 ? -1 : labels->bytes[i];
    }
  }
  if (outliers) {
    if (outliers->dims.size() != 1 || outliers->dims[0] != ds.rows) {
      throw IdxDimensionError("outlier-flag IDX count does not match image count");
    }
    for (std::size_t i = 0; i < ds.rows; ++i) ds.is_outlier[i] = outliers->bytes[i] ? 1 : 0;
  }
  ds.source = "idx";
  return ds;
}

inline bool is_perfect_square(std::size_t n) {
  const auto r = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(n))));
  return r * r == n;
}

inline std::size_t image_side(std::size_t dim) {
  const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(dim))));
  if (side * side != dim) {
    throw DimensionError("image dimension " + std::to_string(dim) + " is not a perfect square");
  }
  return side;
}

/// Images quantized to bytes (round(v * 255)).
inline IdxArray images_to_idx(const Dataset& ds) {
  const auto side = static_cast<std::uint32_t>(image_side(ds.dim));
  IdxArray a;
  a.dims = {static_cast<std::uint32_t>(ds.rows), side, side};
  a.bytes.reserve(ds.images.size());
  for (double v : ds.images) {
    a.bytes.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
  }
  return a;
}

/// Labels as bytes; negative labels (outlier rows without a class) map to 255.
inline IdxArray labels_to_idx(const Dataset& ds) {
  IdxArray a;
  a.dims = {static_cast<std::uint32_t>(ds.rows)};
  for (int l : ds.labels) a.bytes.push_back(static_cast<std::uint8_t>(l < 0 ? 255 : l));
  return a;
}

inline IdxArray outliers_to_idx(const Dataset& ds) {
  IdxArray a;
  a.dims = {static_cast<std::uint32_t>(ds.rows)};
  a.bytes.assign(ds.is_outlier.begin(), ds.is_outlier.end());
  return a;
}

// ---------------------------------------------------------------------------
// Transforms. Each returns a new dataset and appends to its history.

/// Pixel -> 1 if >= threshold_frac * (dataset max), else 0.
inline Dataset binarize(const Dataset& ds, double threshold_frac = 0.5) {
  if (ds.rows == 0 || ds.images.empty()) throw DataError("binarize: empty dataset");
  const double peak = *std::max_element(ds.images.begin(), ds.images.end());
  const double cut = threshold_frac * peak;
  Dataset out = ds;
  for (double& v : out.images) v = (peak > 0.0 && v >= cut) ? 1.0 : 0.0;
  out.history.push_back("binarize(threshold_frac=" + format_double(threshold_frac) + ")");
  return out;
}

enum class ContaminationKind { GaussianNoise, ForeignDataset, DropoutBands, Blobs };

inline const char* to_string(ContaminationKind k) {
  switch (k) {
    case ContaminationKind::GaussianNoise: return "gaussian_noise";
    case ContaminationKind::ForeignDataset: return "foreign_dataset";
    case ContaminationKind::DropoutBands: return "dropout_bands";
    case ContaminationKind::Blobs: return "blobs";
  }
  return "?";
}

inline ContaminationKind parse_contamination_kind(const std::string& s) {
  if (s == "gaussian_noise") return ContaminationKind::GaussianNoise;
  if (s == "foreign_dataset") return ContaminationKind::ForeignDataset;
  if (s == "dropout_bands") return ContaminationKind::DropoutBands;
  if (s == "blobs") return ContaminationKind::Blobs;
  throw ConfigError("unknown contamination kind '" + s + "'");
}

struct ContaminationSpec {
  ContaminationKind kind = ContaminationKind::GaussianNoise;
  double fraction = 0.0;
  std::uint64_t seed = 0;
  // Pixel distribution of noise outliers, clipped to [0, 1].
  double noise_mean = 0.5;
  double noise_std = 0.25;
  std::size_t band_height = 5;
};

/// One image of white Gaussian noise, clipped to [0, 1].
inline void fill_noise(std::span<double> out, std::mt19937_64& rng, double mean, double std) {
  std::normal_distribution<double> n(mean, std);
  for (double& v : out) v = std::clamp(n(rng), 0.0, 1.0);
}

/// Marks floor(fraction * N) seeded-random records as outliers and replaces
/// or alters them according to spec.kind. Noise and foreign records replace
/// the original row and get label -1; bands and blobs alter it in place.
inline Dataset contaminate(const Dataset& ds, const ContaminationSpec& spec,
                           const Dataset* outlier_source = nullptr) {
  if (!(spec.fraction >= 0.0 && spec.fraction < 1.0)) {
    throw ConfigError("contamination fraction must lie in [0, 1)");
  }
  if (spec.kind == ContaminationKind::ForeignDataset) {
    if (!outlier_source || outlier_source->rows == 0) {
      throw DataError("foreign_dataset contamination needs an outlier source dataset");
    }
    if (outlier_source->dim != ds.dim) {
      throw DataError("outlier source has D=" + std::to_string(outlier_source->dim) +
                      ", dataset has D=" + std::to_string(ds.dim));
    }
  }
  Dataset out = ds;
  const auto count =
      static_cast<std::size_t>(std::floor(spec.fraction * static_cast<double>(ds.rows)));
  std::string note = std::string("contaminate(kind=") + to_string(spec.kind) +
                     ", fraction=" + format_double(spec.fraction) +
                     ", seed=" + std::to_string(spec.seed);
  if (spec.kind == ContaminationKind::GaussianNoise) {
    note += ", noise_mean=" + format_double(spec.noise_mean) +
            ", noise_std=" + format_double(spec.noise_std);
  }
  note += ")";
  if (count == 0) {
    if (spec.fraction > 0.0) {
      std::clog << "warning: contamination fraction " << spec.fraction << " of " << ds.rows
                << " records replaces nothing\n";
    }
    out.history.push_back(note);
    return out;
  }

  std::mt19937_64 rng(spec.seed);
  std::vector<std::size_t> order(ds.rows);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::size_t> picked(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(count));
  std::sort(picked.begin(), picked.end());

  const bool image_kind = spec.kind == ContaminationKind::DropoutBands ||
                          spec.kind == ContaminationKind::Blobs;
  const std::size_t side = image_kind ? image_side(ds.dim) : 0;
  for (auto i : picked) {
    auto r = out.row(i);
    out.is_outlier[i] = 1;
    switch (spec.kind) {
      case ContaminationKind::GaussianNoise:
        fill_noise(r, rng, spec.noise_mean, spec.noise_std);
        out.labels[i] = -1;
        break;
      case ContaminationKind::ForeignDataset: {
        std::uniform_int_distribution<std::size_t> pick(0, outlier_source->rows - 1);
        const auto src = outlier_source->row(pick(rng));
        std::copy(src.begin(), src.end(), r.begin());
        out.labels[i] = -1;
        break;
      }
      case ContaminationKind::DropoutBands: {
        const auto h = std::min(spec.band_height, side);
        std::uniform_int_distribution<std::size_t> start(0, side - h);
        const auto top = start(rng);
        for (std::size_t y = top; y < top + h; ++y) {
          for (std::size_t x = 0; x < side; ++x) r[y * side + x] = 0.0;
        }
        break;
      }
      case ContaminationKind::Blobs: {
        std::uniform_real_distribution<double> pos(0.0, static_cast<double>(side - 1));
        std::uniform_real_distribution<double> width(1.0, std::max(1.5, side / 4.0));
        const double cy = pos(rng), cx = pos(rng), s = width(rng);
        for (std::size_t y = 0; y < side; ++y) {
          for (std::size_t x = 0; x < side; ++x) {
            const double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
            double& v = r[y * side + x];
            v = std::min(1.0, v + std::exp(-d2 / (2.0 * s * s)));
          }
        }
        break;
      }
    }
  }
  out.history.push_back(note);
  return out;
}

enum class ClusterGeometry { Bars, Blocks };

inline const char* to_string(ClusterGeometry g) {
  return g == ClusterGeometry::Bars ? "bars" : "blocks";
}

inline ClusterGeometry parse_geometry(const std::string& s) {
  if (s == "bars") return ClusterGeometry::Bars;
  if (s == "blocks") return ClusterGeometry::Blocks;
  throw ConfigError("unknown cluster geometry '" + s + "' (expected bars|blocks)");
}

/// Two-class pattern corpus rendered as sqrt(d) x sqrt(d) images.
///
/// bars:   class 0 is a horizontal bar, class 1 a vertical bar, both 3 pixels
///         thick near the image center, with +-1 pixel offset, ragged ends
///         and intensity jitter.
/// blocks: class 0 fills a square in the upper-left quadrant, class 1 in the
///         lower-right, with the same jitter.
///
/// Labels alternate 0, 1, 0, ... so class counts differ by at most one.
inline Dataset make_synthetic_clusters(std::size_t n, std::size_t d, std::uint64_t seed,
                                       ClusterGeometry geometry = ClusterGeometry::Bars) {
  if (d == 0) throw ConfigError("synthetic image dimension must be positive");
  std::size_t side = 0;
  try {
    side = image_side(d);
  } catch (const DimensionError& e) {
    throw ConfigError(std::string("synthetic clusters: ") + e.what());
  }
  if (side < 6) throw ConfigError("synthetic clusters need images at least 6x6");
  Dataset ds;
  ds.rows = n;
  ds.dim = d;
  ds.images.assign(n * d, 0.0);
  ds.labels.resize(n);
  ds.is_outlier.assign(n, 0);
  ds.source = std::string("synthetic_clusters(n=") + std::to_string(n) +
              ", d=" + std::to_string(d) + ", seed=" + std::to_string(seed) +
              ", geometry=" + to_string(geometry) + ")";

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> shift(-1, 1);
  std::uniform_int_distribution<int> ragged(0, 2);
  std::uniform_real_distribution<double> intensity(0.7, 1.0);
  std::uniform_real_distribution<double> background(0.0, 0.1);
  const int s = static_cast<int>(side);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 2);
    ds.labels[i] = label;
    auto img = ds.row(i);
    for (double& v : img) v = background(rng);
    const double level = intensity(rng);
    if (geometry == ClusterGeometry::Bars) {
      const int center = s / 2 - 1 + shift(rng);
      const int from = ragged(rng), to = s - ragged(rng);
      for (int t = center; t < center + 3; ++t) {
        for (int u = from; u < to; ++u) {
          const int y = label == 0 ? t : u;
          const int x = label == 0 ? u : t;
          img[static_cast<std::size_t>(y * s + x)] = level;
        }
      }
    } else {
      const int block = s / 3;
      const int origin = (label == 0 ? s / 8 : s - s / 8 - block) + shift(rng);
      const int oy = std::clamp(origin + shift(rng), 0, s - block);
      const int ox = std::clamp(origin, 0, s - block);
      for (int y = oy; y < oy + block; ++y) {
        for (int x = ox; x < ox + block; ++x) img[static_cast<std::size_t>(y * s + x)] = level;
      }
    }
  }
  return ds;
}

/// Seeded disjoint partition; the first part gets round(train_frac * N) rows.
inline std::pair<Dataset, Dataset> split(const Dataset& ds, double train_frac, std::uint64_t seed) {
  if (!(train_frac > 0.0 && train_frac < 1.0)) {
    throw ConfigError("train_frac must lie strictly between 0 and 1");
  }
  const auto n_train =
      static_cast<std::size_t>(std::llround(train_frac * static_cast<double>(ds.rows)));
  if (n_train == 0 || n_train == ds.rows) {
    throw DataError("split of " + std::to_string(ds.rows) + " rows at " +
                    format_double(train_frac) + " leaves an empty part");
  }
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(ds.rows);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::size_t> a(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::size_t> b(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  Dataset train = ds.subset(a), test = ds.subset(b);
  const auto note = "split(train_frac=" + format_double(train_frac) +
                    ", seed=" + std::to_string(seed) + ")";
  train.history.push_back(note + "[train]");
  test.history.push_back(note + "[test]");
  return {std::move(train), std::move(test)};
}

// ---------------------------------------------------------------------------
// Dataset manifests: a recipe that rebuilds a dataset deterministically.
//
//   source = synthetic | idx
//   n, dim, seed, geometry                 (synthetic)
//   images, labels, outliers               (idx; labels/outliers optional)
//   contamination = none | gaussian_noise | foreign_dataset | dropout_bands | blobs
//   fraction, contamination_seed, noise_mean, noise_std
//   foreign_images, foreign_labels         (foreign_dataset)
//   binarize = true | false, threshold_frac
//   part = all | train | test, train_frac, split_seed
//
// Pipeline order: load/generate -> split -> contaminate -> binarize.

struct DatasetManifest {
  std::string source = "synthetic";
  std::size_t n = 2000;
  std::size_t dim = 256;
  std::uint64_t seed = 0;
  std::string geometry = "bars";
  std::string images, labels, outliers;
  std::string contamination = "none";
  double fraction = 0.0;
  std::uint64_t contamination_seed = 1;
  double noise_mean = 0.5;
  double noise_std = 0.25;
  std::string foreign_images, foreign_labels;
  bool binarize = true;
  double threshold_frac = 0.5;
  std::string part = "all";
  double train_frac = 0.8;
  std::uint64_t split_seed = 0;

  /// Relative paths resolve against this directory.
  std::filesystem::path base_dir;

  static const std::set<std::string>& keys() {
    static const std::set<std::string> k = {
        "source", "n", "dim", "seed", "geometry", "images", "labels", "outliers",
        "contamination", "fraction", "contamination_seed", "noise_mean", "noise_std",
        "foreign_images", "foreign_labels", "binarize", "threshold_frac", "part",
        "train_frac", "split_seed"};
    return k;
  }

  static DatasetManifest from_config(const Config& c, std::filesystem::path base = {}) {
    c.require_known(keys());
    DatasetManifest m;
    m.base_dir = std::move(base);
    m.source = c.get("source", m.source);
    m.n = c.get_uint("n", m.n);
    m.dim = c.get_uint("dim", m.dim);
    m.seed = c.get_uint("seed", m.seed);
    m.geometry = c.get("geometry", m.geometry);
    m.images = c.get("images", "");
    m.labels = c.get("labels", "");
    m.outliers = c.get("outliers", "");
    m.contamination = c.get("contamination", m.contamination);
    m.fraction = c.get_double("fraction", m.fraction);
    m.contamination_seed = c.get_uint("contamination_seed", m.contamination_seed);
    m.noise_mean = c.get_double("noise_mean", m.noise_mean);
    m.noise_std = c.get_double("noise_std", m.noise_std);
    m.foreign_images = c.get("foreign_images", "");
    m.foreign_labels = c.get("foreign_labels", "");
    m.binarize = c.get_bool("binarize", m.binarize);
    m.threshold_frac = c.get_double("threshold_frac", m.threshold_frac);
    m.part = c.get("part", m.part);
    m.train_frac = c.get_double("train_frac", m.train_frac);
    m.split_seed = c.get_uint("split_seed", m.split_seed);
    if (m.source != "synthetic" && m.source != "idx") {
      throw ConfigError("manifest source must be synthetic or idx, got '" + m.source + "'");
    }
    if (m.part != "all" && m.part != "train" && m.part != "test") {
      throw ConfigError("manifest part must be all, train or test");
    }
    if (m.contamination != "none") parse_contamination_kind(m.contamination);
    parse_geometry(m.geometry);
    return m;
  }

  static DatasetManifest load(const std::filesystem::path& path) {
    return from_config(Config::load(path), path.parent_path());
  }

  /// Every field materialized; paths written as given.
  Config to_config() const {
    Config c;
    c.set("source", source);
    if (source == "synthetic") {
      c.set("n", std::to_string(n));
      c.set("dim", std::to_string(dim));
      c.set("seed", std::to_string(seed));
      c.set("geometry", geometry);
    } else {
      c.set("images", images);
      if (!labels.empty()) c.set("labels", labels);
      if (!outliers.empty()) c.set("outliers", outliers);
    }
    c.set("contamination", contamination);
    if (contamination != "none") {
      c.set("fraction", format_double(fraction));
      c.set("contamination_seed", std::to_string(contamination_seed));
      c.set("noise_mean", format_double(noise_mean));
      c.set("noise_std", format_double(noise_std));
      if (!foreign_images.empty()) c.set("foreign_images", foreign_images);
      if (!foreign_labels.empty()) c.set("foreign_labels", foreign_labels);
    }
    c.set("binarize", binarize ? "true" : "false");
    c.set("threshold_frac", format_double(threshold_frac));
    c.set("part", part);
    if (part != "all") {
      c.set("train_frac", format_double(train_frac));
      c.set("split_seed", std::to_string(split_seed));
    }
    return c;
  }

  std::filesystem::path resolve(const std::string& p) const {
    std::filesystem::path path(p);
    return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
  }
};

inline Dataset load_idx_dataset(const std::filesystem::path& images,
                                const std::filesystem::path& labels = {},
                                const std::filesystem::path& outliers = {}) {
  const auto img = read_idx(images);
  std::optional<IdxArray> lab, out;
  if (!labels.empty()) lab = read_idx(labels);
  if (!outliers.empty()) out = read_idx(outliers);
  Dataset ds = dataset_from_idx(img, lab ? &*lab : nullptr, out ? &*out : nullptr);
  ds.source = "idx(" + images.filename().string() + ")";
  return ds;
}

inline Dataset build_dataset(const DatasetManifest& m) {
  Dataset ds;
  if (m.source == "synthetic") {
    ds = make_synthetic_clusters(m.n, m.dim, m.seed, parse_geometry(m.geometry));
  } else {
    if (m.images.empty()) throw ConfigError("idx manifest needs 'images'");
    ds = load_idx_dataset(m.resolve(m.images), m.labels.empty() ? "" : m.resolve(m.labels),
                          m.outliers.empty() ? "" : m.resolve(m.outliers));
  }
  if (m.part != "all") {
    auto [train, test] = split(ds, m.train_frac, m.split_seed);
    ds = m.part == "train" ? std::move(train) : std::move(test);
  }
  if (m.contamination != "none") {
    ContaminationSpec spec;
    spec.kind = parse_contamination_kind(m.contamination);
    spec.fraction = m.fraction;
    spec.seed = m.contamination_seed;
    spec.noise_mean = m.noise_mean;
    spec.noise_std = m.noise_std;
    std::optional<Dataset> foreign;
    if (spec.kind == ContaminationKind::ForeignDataset) {
      if (m.foreign_images.empty()) {
        throw ConfigError("foreign_dataset contamination needs 'foreign_images'");
      }
      foreign = load_idx_dataset(m.resolve(m.foreign_images),
                                 m.foreign_labels.empty() ? "" : m.resolve(m.foreign_labels));
    }
    ds = contaminate(ds, spec, foreign ? &*foreign : nullptr);
  }
  if (m.binarize) ds = binarize(ds, m.threshold_frac);
  ds.validate();
  return ds;
}

}  // namespace rvae
