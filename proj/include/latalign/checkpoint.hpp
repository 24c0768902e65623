#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "latalign/errors.hpp"
#include "latalign/tensor.hpp"

namespace latalign {

namespace detail_ckpt {

constexpr char kMagic[8] = {'L', 'A', 'T', 'A', 'L', 'G', 'N', '1'};
constexpr std::uint32_t kVersion = 1;

inline void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline void put_f64(std::ostream& os, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(os, bits);
}

inline std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4))
    throw checkpoint_error("checkpoint: truncated file");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

inline std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8))
    throw checkpoint_error("checkpoint: truncated file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

inline double get_f64(std::istream& is) {
  const std::uint64_t bits = get_u64(is);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

/// FNV-1a over the little-endian payload bytes.
struct Fnv1a {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  void add(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    for (int i = 0; i < 8; ++i) {
      h ^= (bits >> (8 * i)) & 0xFF;
      h *= 0x100000001B3ULL;
    }
  }
};

}  // namespace detail_ckpt

/// Binary checkpoint: magic, version, hyper block, then per tensor
/// (name, rank, dims, f64 little-endian payload), then an FNV-1a checksum
/// of all payload bytes. Round-trips bit-exactly.
inline void checkpoint_save(const ParameterStore& params, const std::string& path) {
  using namespace detail_ckpt;
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw checkpoint_error("checkpoint: cannot open for write: " + path);
  os.write(kMagic, 8);
  put_u32(os, kVersion);
  const Hyper& h = params.hyper;
  for (int v : {h.d_in, h.d_embed, h.h_embed, h.h1, h.h2, h.g_dim, h.grid, h.n_avg, h.B})
    put_u32(os, static_cast<std::uint32_t>(v));
  for (double v : {h.c_conc, h.kl_weight, h.alpha_floor, h.lambda_int}) put_f64(os, v);

  put_u32(os, static_cast<std::uint32_t>(params.tensors.size()));
  Fnv1a sum;
  for (const auto& [name, m] : params.tensors) {
    put_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(os, 2);  // rank
    put_u32(os, static_cast<std::uint32_t>(m.rows));
    put_u32(os, static_cast<std::uint32_t>(m.cols));
    for (double v : m.data) {
      put_f64(os, v);
      sum.add(v);
    }
  }
  put_u64(os, sum.h);
  if (!os) throw checkpoint_error("checkpoint: write failed: " + path);
}

inline ParameterStore checkpoint_load(const std::string& path) {
  using namespace detail_ckpt;
  std::ifstream is(path, std::ios::binary);
  if (!is) throw checkpoint_error("checkpoint: cannot open: " + path);
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
    throw checkpoint_error("checkpoint: bad magic (not a checkpoint file)");
  const std::uint32_t version = get_u32(is);
  if (version != kVersion)
    throw checkpoint_error("checkpoint: unsupported version " + std::to_string(version));
  Hyper h;
  for (int* f : {&h.d_in, &h.d_embed, &h.h_embed, &h.h1, &h.h2, &h.g_dim, &h.grid,
                 &h.n_avg, &h.B})
    *f = static_cast<int>(get_u32(is));
  for (double* f : {&h.c_conc, &h.kl_weight, &h.alpha_floor, &h.lambda_int})
    *f = get_f64(is);

  // The hyper block fixes every shape; loaded tensors must match exactly.
  ParameterStore expect = make_model_params(h);
  const std::uint32_t count = get_u32(is);
  if (count != expect.tensors.size())
    throw checkpoint_error("checkpoint: tensor count mismatch");
  Fnv1a sum;
  std::vector<std::string> seen;
  for (std::uint32_t k = 0; k < count; ++k) {
    const std::uint32_t name_len = get_u32(is);
    if (name_len > 256) throw checkpoint_error("checkpoint: implausible name length");
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len))
      throw checkpoint_error("checkpoint: truncated file");
    auto it = expect.tensors.find(name);
    if (it == expect.tensors.end())
      throw checkpoint_error("checkpoint: unexpected tensor " + name);
    for (const std::string& s : seen)
      if (s == name) throw checkpoint_error("checkpoint: duplicate tensor " + name);
    seen.push_back(name);
    const std::uint32_t rank = get_u32(is);
    if (rank != 2) throw checkpoint_error("checkpoint: bad rank for " + name);
    const auto rows = static_cast<int>(get_u32(is));
    const auto cols = static_cast<int>(get_u32(is));
    Matrix& m = it->second;
    if (rows != m.rows || cols != m.cols)
      throw checkpoint_error("checkpoint: shape mismatch for " + name + ": file " +
                             std::to_string(rows) + "x" + std::to_string(cols) +
                             " vs expected " + std::to_string(m.rows) + "x" +
                             std::to_string(m.cols));
    for (double& v : m.data) {
      v = get_f64(is);
      sum.add(v);
    }
  }
  if (get_u64(is) != sum.h) throw checkpoint_error("checkpoint: checksum mismatch");
  return expect;
}

}  // namespace latalign
