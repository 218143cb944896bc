#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "lccn/graph.hpp"
#include "lccn/tensor.hpp"

namespace lccn {

// Checkpoint file: format-version header, then a flat map of parameter
// path -> shape + little-endian float64 payload.
//
//   magic   8 bytes  "LCCNCKPT"
//   version u32
//   count   u64
//   entry*: name_len u32, name bytes, rank u32, dims u64[rank], f64[numel]

namespace ckpt_detail {

constexpr char kMagic[8] = {'L', 'C', 'C', 'N', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

inline void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline void put_f64(std::ostream& os, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, 8);
  put_u64(os, bits);
}

inline std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw std::runtime_error("checkpoint truncated");
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

inline std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw std::runtime_error("checkpoint truncated");
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

inline double get_f64(std::istream& is) {
  const std::uint64_t bits = get_u64(is);
  double d;
  std::memcpy(&d, &bits, 8);
  return d;
}

}  // namespace ckpt_detail

inline void save_checkpoint(const std::string& path, const ParamRegistry& params) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  os.write(ckpt_detail::kMagic, 8);
  ckpt_detail::put_u32(os, ckpt_detail::kVersion);
  ckpt_detail::put_u64(os, params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Parameter& p = params.at(i);
    ckpt_detail::put_u32(os, static_cast<std::uint32_t>(p.name.size()));
    os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    const Tensor& t = p.value();
    ckpt_detail::put_u32(os, static_cast<std::uint32_t>(t.shape().size()));
    for (std::size_t d : t.shape()) ckpt_detail::put_u64(os, d);
    for (double v : t.vec()) ckpt_detail::put_f64(os, v);
  }
  if (!os) throw std::runtime_error("write failed for checkpoint: " + path);
}

inline std::map<std::string, Tensor> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, ckpt_detail::kMagic, 8) != 0)
    throw std::runtime_error("not a checkpoint file: " + path);
  const std::uint32_t version = ckpt_detail::get_u32(is);
  if (version != ckpt_detail::kVersion)
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  const std::uint64_t count = ckpt_detail::get_u64(is);
  std::map<std::string, Tensor> out;
  for (std::uint64_t e = 0; e < count; ++e) {
    const std::uint32_t name_len = ckpt_detail::get_u32(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    if (!is) throw std::runtime_error("checkpoint truncated");
    const std::uint32_t rank = ckpt_detail::get_u32(is);
    std::vector<std::size_t> shape(rank);
    for (std::uint32_t d = 0; d < rank; ++d)
      shape[d] = static_cast<std::size_t>(ckpt_detail::get_u64(is));
    Tensor t(shape);
    for (std::size_t k = 0; k < t.numel(); ++k) t.vec()[k] = ckpt_detail::get_f64(is);
    out.emplace(std::move(name), std::move(t));
  }
  return out;
}

// Overwrite registry values from a checkpoint map; every parameter must be
// present with a matching shape.
inline void restore_params(ParamRegistry& params, const std::map<std::string, Tensor>& loaded) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = params.at(i);
    auto it = loaded.find(p.name);
    if (it == loaded.end()) throw std::runtime_error("checkpoint misses parameter " + p.name);
    if (it->second.shape() != p.value().shape())
      throw std::runtime_error("checkpoint shape mismatch for " + p.name + ": " +
                               it->second.shape_str() + " vs " + p.value().shape_str());
    p.value() = it->second;
  }
}

}  // namespace lccn
