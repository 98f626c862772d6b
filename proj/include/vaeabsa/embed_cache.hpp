#pragma once

// Cached per-token transformer layer states ("TEC1" files), learned layer
// pooling, and a deterministic hash-based embedder used in tests and demos.
//
// File layout, all integers u32 little-endian:
//   "TEC1" | version=1 | H | L | record count
//   per record: id byte length | id bytes (UTF-8) | N | N*L*H f32 LE
//   floats ordered token-major, then layer, then dimension.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "vaeabsa/binary_io.hpp"
#include "vaeabsa/error.hpp"

namespace vaeabsa {

inline constexpr char kCacheMagic[4] = {'T', 'E', 'C', '1'};
inline constexpr std::uint32_t kCacheVersion = 1;

struct CacheRecord {
  std::string doc_id;
  std::uint32_t num_tokens = 0;
  std::vector<float> states;  // num_tokens * L * H

  friend bool operator==(const CacheRecord&, const CacheRecord&) = default;
};

class EmbeddingCache {
 public:
  EmbeddingCache() = default;
  EmbeddingCache(std::uint32_t hidden_dim, std::uint32_t num_layers) : hidden_dim_(hidden_dim), num_layers_(num_layers) {}

  std::uint32_t hidden_dim() const { return hidden_dim_; }
  std::uint32_t num_layers() const { return num_layers_; }
  const std::vector<CacheRecord>& records() const { return records_; }

  void add(CacheRecord rec) {
    const std::size_t expect = std::size_t{rec.num_tokens} * num_layers_ * hidden_dim_;
    if (rec.states.size() != expect) {
      throw ValidationError("cache record '" + rec.doc_id + "' has " + std::to_string(rec.states.size()) +
                            " values, expected " + std::to_string(expect));
    }
    if (index_.count(rec.doc_id)) throw ValidationError("duplicate cache doc id '" + rec.doc_id + "'");
    index_.emplace(rec.doc_id, records_.size());
    records_.push_back(std::move(rec));
  }

  const CacheRecord* find(const std::string& id) const {
    auto it = index_.find(id);
    return it == index_.end() ? nullptr : &records_[it->second];
  }

  friend bool operator==(const EmbeddingCache& a, const EmbeddingCache& b) {
    return a.hidden_dim_ == b.hidden_dim_ && a.num_layers_ == b.num_layers_ && a.records_ == b.records_;
  }

 private:
  std::uint32_t hidden_dim_ = 0;
  std::uint32_t num_layers_ = 0;
  std::vector<CacheRecord> records_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Per-token layer states promoted to double: tokens[i] is L x H.
struct DocStates {
  std::vector<Eigen::MatrixXd> tokens;

  std::size_t size() const { return tokens.size(); }
  Eigen::Index num_layers() const { return tokens.empty() ? 0 : tokens.front().rows(); }
  Eigen::Index hidden_dim() const { return tokens.empty() ? 0 : tokens.front().cols(); }
};

/// Right-truncates to max_tokens (0 = no limit).
inline DocStates doc_states(const CacheRecord& rec, std::uint32_t L, std::uint32_t H, std::size_t max_tokens = 512) {
  std::size_t n = rec.num_tokens;
  if (max_tokens > 0 && n > max_tokens) n = max_tokens;
  DocStates out;
  out.tokens.reserve(n);
  const std::size_t stride = std::size_t{L} * H;
  for (std::size_t i = 0; i < n; ++i) {
    Eigen::MatrixXd m(L, H);
    const float* p = rec.states.data() + i * stride;
    for (std::uint32_t l = 0; l < L; ++l) {
      for (std::uint32_t d = 0; d < H; ++d) m(l, d) = static_cast<double>(p[std::size_t{l} * H + d]);
    }
    out.tokens.push_back(std::move(m));
  }
  return out;
}

/// x = H_i^T b, i.e. x[d] = sum_l H_i(l, d) * b[l].
inline Eigen::VectorXd pool_layers(const Eigen::MatrixXd& layer_states, const Eigen::VectorXd& b) {
  if (layer_states.rows() != b.size()) {
    throw ValidationError("pooling weights have length " + std::to_string(b.size()) + " but states have " +
                          std::to_string(layer_states.rows()) + " layers");
  }
  return layer_states.transpose() * b;
}

inline void write_cache(const EmbeddingCache& cache, const std::string& path) {
  for (const auto& r : cache.records()) {
    for (float v : r.states) {
      if (!std::isfinite(v)) throw ValidationError("non-finite value in cache record '" + r.doc_id + "'");
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write cache '" + path + "'");
  out.write(kCacheMagic, 4);
  io::put_u32(out, kCacheVersion);
  io::put_u32(out, cache.hidden_dim());
  io::put_u32(out, cache.num_layers());
  io::put_u32(out, static_cast<std::uint32_t>(cache.records().size()));
  for (const auto& r : cache.records()) {
    io::put_u32(out, static_cast<std::uint32_t>(r.doc_id.size()));
    out.write(r.doc_id.data(), static_cast<std::streamsize>(r.doc_id.size()));
    io::put_u32(out, r.num_tokens);
    for (float v : r.states) io::put_f32(out, v);
  }
  if (!out) throw Error("failed writing cache '" + path + "'");
}

inline EmbeddingCache read_cache(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open cache '" + path + "'");
  std::error_code ec;
  const auto file_size = std::filesystem::file_size(path, ec);
  io::Reader rd(in);
  rd.set_context("cache header");
  char magic[4];
  try {
    rd.bytes(magic, 4);
  } catch (const CorruptionError&) {
    throw FormatError("'" + path + "' is not a TEC1 cache (too short)");
  }
  if (std::string(magic, 4) != std::string(kCacheMagic, 4)) {
    throw FormatError("'" + path + "' is not a TEC1 cache (bad magic)");
  }
  const auto version = rd.u32();
  if (version != kCacheVersion) {
    throw FormatError("unsupported cache version " + std::to_string(version) + " in '" + path + "'");
  }
  const auto H = rd.u32();
  const auto L = rd.u32();
  const auto count = rd.u32();
  EmbeddingCache cache(H, L);
  for (std::uint32_t r = 0; r < count; ++r) {
    rd.set_context("record " + std::to_string(r));
    CacheRecord rec;
    const auto id_len = rd.u32();
    if (!ec && static_cast<std::uint64_t>(in.tellg()) + id_len > file_size) {
      throw CorruptionError("truncated payload in record " + std::to_string(r));
    }
    rec.doc_id = rd.str(id_len);
    rec.num_tokens = rd.u32();
    const std::uint64_t n = std::uint64_t{rec.num_tokens} * L * H;
    if (!ec && static_cast<std::uint64_t>(in.tellg()) + 4 * n > file_size) {
      throw CorruptionError("truncated payload in record " + std::to_string(r));
    }
    rec.states.resize(n);
    for (auto& v : rec.states) v = rd.f32();
    try {
      cache.add(std::move(rec));
    } catch (const ValidationError& e) {
      throw FormatError(std::string(e.what()) + " (record " + std::to_string(r) + ")");
    }
  }
  if (!rd.at_eof()) throw FormatError("trailing bytes after last record in '" + path + "'");
  return cache;
}

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

}  // namespace detail

/// Deterministic stand-in for transformer states: every token string maps
/// to a fixed L x H block of values in [-1, 1], keyed by (token, seed).
/// Values are rounded to float so they survive a cache round trip exactly.
inline Eigen::MatrixXd synthetic_token_states(const std::string& token, std::uint32_t H, std::uint32_t L,
                                              std::uint64_t seed) {
  std::uint64_t state = detail::fnv1a(token) ^ (seed * 0xD1B54A32D192ED03ull);
  detail::splitmix64(state);
  Eigen::MatrixXd m(L, H);
  for (std::uint32_t l = 0; l < L; ++l) {
    for (std::uint32_t d = 0; d < H; ++d) {
      const double u = static_cast<double>(detail::splitmix64(state) >> 11) * 0x1.0p-53;  // [0,1)
      m(l, d) = static_cast<double>(static_cast<float>(2.0 * u - 1.0));
    }
  }
  return m;
}

inline std::vector<Eigen::MatrixXd> synthetic_embed(const std::vector<std::string>& tokens, std::uint32_t H,
                                                    std::uint32_t L, std::uint64_t seed) {
  if (H < 1 || L < 1) throw ValidationError("synthetic_embed needs H, L >= 1");
  std::vector<Eigen::MatrixXd> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(synthetic_token_states(t, H, L, seed));
  return out;
}

inline CacheRecord synthetic_record(const std::string& doc_id, const std::vector<std::string>& tokens, std::uint32_t H,
                                    std::uint32_t L, std::uint64_t seed, std::size_t max_tokens = 512) {
  CacheRecord rec;
  rec.doc_id = doc_id;
  const std::size_t n = (max_tokens > 0 && tokens.size() > max_tokens) ? max_tokens : tokens.size();
  rec.num_tokens = static_cast<std::uint32_t>(n);
  rec.states.reserve(n * L * H);
  for (std::size_t i = 0; i < n; ++i) {
    const auto m = synthetic_token_states(tokens[i], H, L, seed);
    for (std::uint32_t l = 0; l < L; ++l) {
      for (std::uint32_t d = 0; d < H; ++d) rec.states.push_back(static_cast<float>(m(l, d)));
    }
  }
  return rec;
}

}  // namespace vaeabsa
