#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "kgt/core.hpp"
#include "kgt/hash.hpp"
#include "kgt/kg.hpp"
#include "kgt/rng.hpp"

namespace kgt {

using FeatureMatrix = Mat<float>;

// KGTF: magic "KGTF", u32 version, u64 rows, u64 cols (little-endian), then
// row-major little-endian f32 payload.
inline constexpr char kKgtfMagic[4] = {'K', 'G', 'T', 'F'};
inline constexpr std::uint32_t kKgtfVersion = 1;
inline constexpr std::size_t kKgtfHeaderBytes = 24;

namespace detail {

template <class T>
void put_le(std::string& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

template <class T>
T get_le(const unsigned char* p) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(p[i]) << (8 * i);
  return v;
}

inline void atomic_write(const std::filesystem::path& path, const std::string& bytes) {
  const auto tmp = path.string() + ".tmp" + std::to_string(static_cast<unsigned>(::getpid()));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write: " + tmp);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("short write: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace detail

inline std::string encode_kgtf(const FeatureMatrix& m) {
  std::string out;
  out.reserve(kKgtfHeaderBytes + m.size() * 4);
  out.append(kKgtfMagic, 4);
  detail::put_le<std::uint32_t>(out, kKgtfVersion);
  detail::put_le<std::uint64_t>(out, m.rows);
  detail::put_le<std::uint64_t>(out, m.cols);
  for (float v : m.a) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    detail::put_le<std::uint32_t>(out, bits);
  }
  return out;
}

inline FeatureMatrix decode_kgtf(const std::string& bytes, const std::string& what) {
  if (bytes.size() < kKgtfHeaderBytes) throw FormatError(what + ": truncated KGTF header");
  if (std::memcmp(bytes.data(), kKgtfMagic, 4) != 0) throw FormatError(what + ": bad KGTF magic");
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const auto version = detail::get_le<std::uint32_t>(p + 4);
  if (version != kKgtfVersion) throw FormatError(what + ": unsupported KGTF version");
  const auto rows = detail::get_le<std::uint64_t>(p + 8);
  const auto cols = detail::get_le<std::uint64_t>(p + 16);
  if (rows != 0 && cols != 0 && (rows > bytes.size() || cols > bytes.size()))
    throw FormatError(what + ": implausible KGTF shape");
  if (bytes.size() != kKgtfHeaderBytes + rows * cols * 4)
    throw FormatError(what + ": truncated KGTF payload");
  FeatureMatrix m(rows, cols);
  for (std::size_t i = 0; i < m.size(); ++i) {
    const auto bits = detail::get_le<std::uint32_t>(p + kKgtfHeaderBytes + 4 * i);
    std::memcpy(&m.a[i], &bits, 4);
  }
  return m;
}

inline void save_features(const FeatureMatrix& m, const std::filesystem::path& path) {
  detail::atomic_write(path, encode_kgtf(m));
}

inline FeatureMatrix load_features(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open feature file: " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_kgtf(bytes, path.filename().string());
}

// Offline substitute for the remote sentence encoder: hashed character
// 3-gram bag projected through a seeded random sign matrix, L2-normalized
// per row. Integer hashing only, per-row sums in index order, so rows are
// bit-stable across platforms. An all-zero bag (text shorter than 3 chars)
// stays a zero row.
inline FeatureMatrix encode_text_deterministic(const std::vector<std::string>& texts, std::size_t dim,
                                               std::uint64_t seed) {
  if (dim == 0) throw UsageError("encoder dimension must be positive");
  FeatureMatrix m(texts.size(), dim);
  for (std::size_t row = 0; row < texts.size(); ++row) {
    const std::string& s = texts[row];
    auto out = m.row(row);
    if (s.size() >= 3) {
      for (std::size_t i = 0; i + 3 <= s.size(); ++i) {
        const std::uint64_t g = fnv1a64(s.data() + i, 3);
        for (std::size_t j = 0; j < dim; ++j) {
          std::uint64_t h = g ^ (seed * 0x9e3779b97f4a7c15ULL) ^ (j * 0xbf58476d1ce4e5b9ULL);
          h = splitmix64(h);
          out[j] += (h & 1) ? 1.0f : -1.0f;
        }
      }
    }
    double norm2 = 0;
    for (float v : out) norm2 += static_cast<double>(v) * v;
    if (norm2 > 0) {
      const auto inv = static_cast<float>(1.0 / std::sqrt(norm2));
      for (float& v : out) v *= inv;
    }
  }
  return m;
}

// The four raw feature matrices serving the dual-stream embedding and the
// predictor warm start.
struct FeatureBank {
  FeatureMatrix entity_text;      // |E| x d_t
  FeatureMatrix entity_struct;    // |E| x d_s
  FeatureMatrix relation_text;    // |R_aug| x d_t
  FeatureMatrix relation_struct;  // |R_aug| x d_s

  std::size_t d_t() const { return entity_text.cols; }
  std::size_t d_s() const { return entity_struct.cols; }

  void validate_against(const KnowledgeGraph& kg) const {
    auto check = [](std::size_t got, std::size_t want, const char* what) {
      if (got != want)
        throw DataError(std::string(what) + " rows " + std::to_string(got) + " != vocabulary size " +
                        std::to_string(want));
    };
    check(entity_text.rows, kg.num_entities(), "entity_text");
    check(entity_struct.rows, kg.num_entities(), "entity_struct");
    check(relation_text.rows, kg.num_relations(), "relation_text");
    check(relation_struct.rows, kg.num_relations(), "relation_struct");
    if (relation_text.cols != entity_text.cols) throw DataError("textual feature dims disagree");
    if (relation_struct.cols != entity_struct.cols) throw DataError("structural feature dims disagree");
    if (!entity_text.all_finite() || !entity_struct.all_finite() || !relation_text.all_finite() ||
        !relation_struct.all_finite())
      throw NumericError("feature bank contains non-finite values");
  }

  std::string text_hash() const { return hex64(fnv1a64(entity_text.a.data(), entity_text.a.size() * 4)); }
  std::string struct_hash() const {
    return hex64(fnv1a64(entity_struct.a.data(), entity_struct.a.size() * 4));
  }

  void save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    save_features(entity_text, dir / "entity_text.kgtf");
    save_features(entity_struct, dir / "entity_struct.kgtf");
    save_features(relation_text, dir / "relation_text.kgtf");
    save_features(relation_struct, dir / "relation_struct.kgtf");
  }

  static FeatureBank load(const std::filesystem::path& dir) {
    FeatureBank b;
    b.entity_text = load_features(dir / "entity_text.kgtf");
    b.entity_struct = load_features(dir / "entity_struct.kgtf");
    b.relation_text = load_features(dir / "relation_text.kgtf");
    b.relation_struct = load_features(dir / "relation_struct.kgtf");
    return b;
  }
};

}  // namespace kgt
