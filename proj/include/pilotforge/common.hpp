#pragma once

// Shared plumbing: error taxonomy, deterministic RNG, seed derivation,
// CRC32, little-endian byte I/O and the worker-count cap.

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace pilotforge {

// Maps to exit code 1: bad config, bad arguments, violated preconditions.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Maps to exit code 2: numeric failures, I/O failures, corrupted files.
class RunError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// 64-byte aligned storage for every buffer that linear algebra kernels map.
// A fixed alignment keeps vectorized reduction order identical across
// allocations, which the byte-identical reproducibility contract relies on.
template <typename T, std::size_t Align = 64>
struct AlignedAllocator {
  using value_type = T;
  AlignedAllocator() noexcept = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U, Align>&) noexcept {}

  T* allocate(std::size_t n) {
    const std::size_t bytes = (n * sizeof(T) + Align - 1) / Align * Align;
    void* p = std::aligned_alloc(Align, bytes);
    if (!p) throw std::bad_alloc();
    return static_cast<T*>(p);
  }
  void deallocate(T* p, std::size_t) noexcept { std::free(p); }

  template <typename U>
  struct rebind {
    using other = AlignedAllocator<U, Align>;
  };
  bool operator==(const AlignedAllocator&) const { return true; }
  bool operator!=(const AlignedAllocator&) const { return false; }
};

template <typename T>
using aligned_vector = std::vector<T, AlignedAllocator<T>>;

// splitmix64 finalizer; derives independent stream seeds from (seed, salt).
inline std::uint64_t mix64(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// Deterministic RNG. All distributions are implemented here rather than via
// std::*_distribution so that the byte-identical reproducibility contract
// depends only on this file and the mt19937_64 stream.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  // Uniform on the open interval (0,1); never returns 0 or 1.
  double u01() {
    return (static_cast<double>(gen_() >> 11) + 0.5) * (1.0 / 9007199254740992.0);
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * u01(); }

  // Standard normal via Box-Muller; pairs are cached so one call consumes
  // two uniforms every other invocation.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    auto [a, b] = normal_pair();
    spare_ = b;
    has_spare_ = true;
    return a;
  }

  std::pair<double, double> normal_pair() {
    const double r = std::sqrt(-2.0 * std::log(u01()));
    const double th = 2.0 * M_PI * u01();
    return {r * std::cos(th), r * std::sin(th)};
  }

  std::uint64_t next_u64() { return gen_(); }

 private:
  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

namespace detail {
inline const std::uint32_t* crc32_table() {
  static const auto table = [] {
    static std::uint32_t t[256];
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  return table;
}
}  // namespace detail

inline std::uint32_t crc32(const unsigned char* data, std::size_t n,
                           std::uint32_t seed = 0) {
  const std::uint32_t* t = detail::crc32_table();
  std::uint32_t c = seed ^ 0xFFFFFFFFu;
  for (std::size_t i = 0; i < n; ++i) c = t[(c ^ data[i]) & 0xFF] ^ (c >> 8);
  return c ^ 0xFFFFFFFFu;
}

inline std::uint32_t crc32(const std::string& s) {
  return crc32(reinterpret_cast<const unsigned char*>(s.data()), s.size());
}

// Accumulates a little-endian byte stream in memory; write_file() appends a
// CRC32 trailer over everything before it.
class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void f32(float v) {
    std::uint32_t bits;
    static_assert(sizeof(bits) == sizeof(v));
    std::memcpy(&bits, &v, 4);
    u32(bits);
  }
  void f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    u64(bits);
  }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    buf_.insert(buf_.end(), s.begin(), s.end());
  }
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const unsigned char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }

  const std::vector<unsigned char>& buffer() const { return buf_; }

  void write_file_with_crc(const std::filesystem::path& path) {
    const std::uint32_t crc = crc32(buf_.data(), buf_.size());
    u32(crc);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw RunError("cannot open for writing: " + path.string());
    out.write(reinterpret_cast<const char*>(buf_.data()),
              static_cast<std::streamsize>(buf_.size()));
    if (!out) throw RunError("write failed: " + path.string());
  }

 private:
  std::vector<unsigned char> buf_;
};

// Reads a whole file, verifies the CRC32 trailer, then serves typed reads.
class ByteReader {
 public:
  static ByteReader from_file_checked(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw RunError("cannot open for reading: " + path.string());
    std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
    if (buf.size() < 4) throw RunError("file truncated: " + path.string());
    const std::size_t body = buf.size() - 4;
    std::uint32_t stored = 0;
    for (int i = 0; i < 4; ++i) stored |= std::uint32_t(buf[body + i]) << (8 * i);
    if (crc32(buf.data(), body) != stored)
      throw RunError("checksum mismatch: " + path.string());
    buf.resize(body);
    return ByteReader(std::move(buf), path.string());
  }

  std::uint8_t u8() { return take(1)[0]; }
  std::uint32_t u32() {
    const unsigned char* p = take(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(p[i]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    const unsigned char* p = take(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(p[i]) << (8 * i);
    return v;
  }
  float f32() {
    std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  double f64() {
    std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  std::string str() {
    const std::uint32_t n = u32();
    const unsigned char* p = take(n);
    return std::string(reinterpret_cast<const char*>(p), n);
  }
  std::size_t remaining() const { return buf_.size() - pos_; }

 private:
  ByteReader(std::vector<unsigned char> buf, std::string name)
      : buf_(std::move(buf)), name_(std::move(name)) {}
  const unsigned char* take(std::size_t n) {
    if (pos_ + n > buf_.size()) throw RunError("file truncated: " + name_);
    const unsigned char* p = buf_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::vector<unsigned char> buf_;
  std::string name_;
  std::size_t pos_ = 0;
};

// Worker cap from PILOTFORGE_THREADS; defaults to the hardware count.
inline int worker_count() {
  if (const char* env = std::getenv("PILOTFORGE_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1 || v > 1024)
      throw ValidationError("PILOTFORGE_THREADS must be an integer in [1,1024], got '" +
                            std::string(env) + "'");
    return static_cast<int>(v);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Runs fn(i) for i in [0,n). Each index owns its output slot, so the result
// is identical for any worker count.
template <typename Fn>
void parallel_for(std::int64_t n, Fn&& fn) {
  const int workers = std::min<std::int64_t>(worker_count(), n);
  if (workers <= 1) {
    for (std::int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::int64_t i = w; i < n; i += workers) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace pilotforge
