#pragma once

// Model checkpoint, version 1. All integers and doubles little-endian.
//
//   bytes  field
//   8      magic "RVAECKPT"
//   4      u32 format version (1)
//   8x3    u64 input_dim, hidden_dim, latent_dim
//   1      u8 observation model (0 bernoulli, 1 gaussian)
//   1      u8 divergence (0 standard, 1 beta)
//   8x2    f64 beta, sigma
//   4      u32 tensor count (10)
//   then per tensor, in VaeParams::tensors() order:
//   4      u32 rank
//   8xrank u64 dims
//   8xN    f64 values (IEEE-754 bit patterns)

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "rvae/errors.hpp"
#include "rvae/losses.hpp"
#include "rvae/model.hpp"

namespace rvae {

inline constexpr std::array<char, 8> kCheckpointMagic = {'R', 'V', 'A', 'E', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  VaeParams params;
  LossSpec loss;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

namespace detail {

class ByteWriter {
 public:
  template <typename T>
  void put(T v) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                                 std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint8_t>>;
    const U bits = std::bit_cast<U>(v);
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      bytes_.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
    }
  }
  void put_raw(std::span<const char> s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }
  const std::vector<std::uint8_t>& bytes() const { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> buf) : buf_(buf) {}

  template <typename T>
  T get() {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                                 std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint8_t>>;
    need(sizeof(U));
    U bits = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) bits |= U(buf_[pos_ + i]) << (8 * i);
    pos_ += sizeof(U);
    return std::bit_cast<T>(bits);
  }
  void need(std::size_t n) const {
    if (buf_.size() - pos_ < n) throw DataError("checkpoint is truncated");
  }
  std::span<const std::uint8_t> take(std::size_t n) {
    need(n);
    auto s = buf_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == buf_.size(); }

 private:
  std::span<const std::uint8_t> buf_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ck) {
  validate(ck.params);
  detail::ByteWriter w;
  w.put_raw(kCheckpointMagic);
  w.put(kCheckpointVersion);
  const Arch& a = ck.params.arch;
  w.put(static_cast<std::uint64_t>(a.input_dim));
  w.put(static_cast<std::uint64_t>(a.hidden_dim));
  w.put(static_cast<std::uint64_t>(a.latent_dim));
  w.put(static_cast<std::uint8_t>(a.obs_model == ObsModel::Bernoulli ? 0 : 1));
  w.put(static_cast<std::uint8_t>(ck.loss.divergence == Divergence::Standard ? 0 : 1));
  w.put(ck.loss.beta);
  w.put(ck.loss.sigma);
  const auto ts = ck.params.tensors();
  w.put(static_cast<std::uint32_t>(ts.size()));
  for (const Tensor* t : ts) {
    w.put(static_cast<std::uint32_t>(t->rank()));
    for (auto d : t->shape()) w.put(static_cast<std::uint64_t>(d));
    for (double v : t->data()) w.put(v);
  }
  return w.bytes();
}

inline Checkpoint parse_checkpoint(std::span<const std::uint8_t> buf,
                                   const std::string& origin = "checkpoint") {
  detail::ByteReader r(buf);
  const auto magic = r.take(kCheckpointMagic.size());
  if (!std::equal(magic.begin(), magic.end(), kCheckpointMagic.begin())) {
    throw DataError(origin + ": not an rvae checkpoint (bad magic)");
  }
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw DataError(origin + ": unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ck;
  Arch& a = ck.params.arch;
  a.input_dim = r.get<std::uint64_t>();
  a.hidden_dim = r.get<std::uint64_t>();
  a.latent_dim = r.get<std::uint64_t>();
  const auto obs = r.get<std::uint8_t>();
  const auto div = r.get<std::uint8_t>();
  if (obs > 1 || div > 1) throw DataError(origin + ": corrupt model descriptor");
  a.obs_model = obs == 0 ? ObsModel::Bernoulli : ObsModel::Gaussian;
  ck.loss.obs_model = a.obs_model;
  ck.loss.divergence = div == 0 ? Divergence::Standard : Divergence::Beta;
  ck.loss.beta = r.get<double>();
  ck.loss.sigma = r.get<double>();
  const auto count = r.get<std::uint32_t>();
  if (count != VaeParams::kTensorCount) {
    throw DataError(origin + ": expected " + std::to_string(VaeParams::kTensorCount) +
                    " tensors, found " + std::to_string(count));
  }
  const auto expected = param_shapes(a);
  auto ts = ck.params.tensors();
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const auto rank = r.get<std::uint32_t>();
    Shape shape;
    for (std::uint32_t k = 0; k < rank; ++k) shape.push_back(r.get<std::uint64_t>());
    if (shape != expected[i]) {
      throw ArchMismatchError(origin + ": tensor " + std::to_string(i) + " has shape " +
                              shape_str(shape) + ", architecture implies " +
                              shape_str(expected[i]));
    }
    const auto n = shape_size(shape);
    r.need(n * 8);
    std::vector<double> values(n);
    for (auto& v : values) v = r.get<double>();
    *ts[i] = Tensor(shape, std::move(values));
  }
  if (!r.done()) throw DataError(origin + ": trailing bytes after checkpoint");
  validate(ck.params);
  return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  const auto bytes = serialize_checkpoint(ck);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path.string() + "'");
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)),
                                std::istreambuf_iterator<char>());
  return parse_checkpoint(buf, path.string());
}

}  // namespace rvae
